#include <doctest.h>

#include <map>

#include "oracles.hpp"
#include "wrank/errors.hpp"
#include "wrank/experiment.hpp"
#include "wrank/market.hpp"

using namespace wr;

namespace {

MarketSpec small_spec() {
    MarketSpec s;
    s.n_seekers = 240;
    s.n_vacancies = 60;
    s.strata = {3, 2, 2};
    s.seed = 99;
    return s;
}

ScorerRegistry signal_registry() {
    ScorerRegistry reg;
    ScorerSpec u;
    u.name = "urec";
    u.kind = "criteria";
    ScorerSpec p;
    p.name = "hire";
    p.kind = "signal";
    p.target = "p";
    p.noise_sd = 0.5;
    ScorerSpec a;
    a.name = "app";
    a.kind = "signal";
    a.target = "pa";
    ScorerSpec mix;
    mix.name = "blend";
    mix.kind = "blend";
    mix.components = {{"hire", 1.0}, {"urec", 2.0}};
    reg.specs = {u, p, a, mix};
    return reg;
}

ExperimentDesign three_arms() {
    ExperimentDesign d;
    ArmSpec top_u{"urec", "top", "urec", "", "", 0.5};
    ArmSpec top_p{"hire", "top", "hire", "", "", 0.5};
    ArmSpec mix{"mix", "mix", "", "hire", "urec", 0.5};
    d.arms = {top_u, top_p, mix};
    d.shares = {0.25, 0.25, 0.5};
    d.list_length = 5;
    d.n_preselect = 8;
    d.cutoffs = {10, 20, 30};
    return d;
}

}  // namespace

TEST_CASE("market rows follow the model formulas") {
    ModelParams model;
    Market m = sample_market(small_spec(), model);
    for (std::size_t i : {0u, 17u, 239u}) {
        SeekerRow r = m.row(i);
        const double rv0 = m.seekers[i].rV0;
        for (Eigen::Index j = 0; j < r.p.size(); ++j) {
            CHECK(r.p[j] > 0.0);
            CHECK(r.p[j] < 1.0);
            double ustar = rv0 - model.R_bar() + (model.k_bar() + model.R_bar()) / r.p[j];
            CHECK(r.delta[j] == doctest::Approx(r.U[j] - ustar).epsilon(1e-12));
            CHECK(r.pa[j] == doctest::Approx(oracle::logistic(r.delta[j] / model.sigma)).epsilon(1e-12));
            CHECK(r.gamma[j] == doctest::Approx(oracle::gamma_logistic(r.p[j], r.delta[j], model.sigma)).epsilon(1e-7));
        }
        // each seeker's baseline value solves the value equation on its own pool
        CHECK(solve_value_unemployment(model, m.distribution(r)) == doctest::Approx(rv0).epsilon(1e-10));
    }
}

TEST_CASE("market sampling is deterministic and thread invariant") {
    ModelParams model;
    Market a = sample_market(small_spec(), model, WeightProfile::pes(), 1);
    Market b = sample_market(small_spec(), model, WeightProfile::pes(), 4);
    for (std::size_t i = 0; i < a.seekers.size(); ++i) CHECK(a.seekers[i].rV0 == b.seekers[i].rV0);
    CHECK((a.row(5).U - b.row(5).U).norm() == 0.0);
    MarketSpec other = small_spec();
    other.seed = 100;
    Market c = sample_market(other, model);
    CHECK((a.row(5).U - c.row(5).U).norm() > 0.0);
}

TEST_CASE("market spec validation") {
    MarketSpec s = small_spec();
    s.skill_blocks.clear();
    CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("historical matches come from the requested seekers") {
    Market m = sample_market(small_spec(), ModelParams{});
    std::vector<int> who{1, 5, 9};
    auto mm = sample_historical_matches(m, who, 3);
    REQUIRE(mm.size() == 3);
    for (std::size_t k = 0; k < 3; ++k) {
        CHECK(mm[k].seeker == who[k]);
        CHECK(mm[k].vacancy >= 0);
        CHECK(mm[k].vacancy < 60);
    }
}

TEST_CASE("stratified assignment balances arms within strata") {
    Market m = sample_market(small_spec(), ModelParams{});
    ExperimentDesign d = three_arms();
    Assignment a = assign_treatments(m.seekers, d, m.spec.strata, 5);
    std::map<int, std::array<int, 3>> per;
    std::array<int, 3> total{};
    for (std::size_t i = 0; i < m.seekers.size(); ++i) {
        const auto& s = m.seekers[i];
        int g = (s.occupation * 2 + s.support) * 2 + s.location;
        per[g][a.arm[i]]++;
        total[a.arm[i]]++;
    }
    for (auto& [g, c] : per) {
        int n = c[0] + c[1] + c[2];
        for (int k = 0; k < 3; ++k) CHECK(std::abs(c[k] - d.shares[k] * n) < 1.0 + 1e-9);
    }
    CHECK(std::abs(total[2] - 120) <= 12);
    CHECK(a.strata_used + a.strata_empty == 12);
    Eigen::MatrixXd T = treatment_dummies(a, 3);
    CHECK(T.cols() == 2);
    CHECK(T.sum() == doctest::Approx(total[1] + total[2]));
}

TEST_CASE("experiment log obeys the funnel and matches the truth") {
    ModelParams model;
    Market m = sample_market(small_spec(), model);
    ScorerRegistry reg = signal_registry();
    ExperimentDesign d = three_arms();
    Assignment a = assign_treatments(m.seekers, d, m.spec.strata, 5);
    ExperimentRun run = run_experiment(m, a, d, reg, 8, 1);
    const InteractionLog& L = run.log;
    L.check_invariants();
    CHECK(L.rows() == m.seekers.size() * 5);
    for (std::size_t r = 0; r < L.rows(); ++r) {
        CHECK(L.clicked[r] >= L.applied[r]);
        CHECK(L.applied[r] >= L.hired[r]);
        SeekerRow row = m.row(static_cast<std::size_t>(L.seeker[r]));
        CHECK(L.true_p[r] == row.p[L.vacancy[r]]);
        CHECK(L.true_gamma[r] == row.gamma[L.vacancy[r]]);
        if (r > 40) break;
    }
    // rerun with more threads gives the same log
    ExperimentRun again = run_experiment(m, a, d, reg, 8, 3);
    CHECK(again.log.applied == L.applied);
    CHECK(again.log.scores == L.scores);
}

TEST_CASE("top arm displays the best vacancies by its scorer") {
    Market m = sample_market(small_spec(), ModelParams{});
    ScorerRegistry reg = signal_registry();
    ExperimentDesign d = three_arms();
    SeekerRow row = m.row(3);
    Eigen::MatrixXd cols = reg.score_columns(m, 3, row, nullptr);
    std::vector<char> avail(60, 1);
    RankedList l = arm_list(d.arms[0], reg, cols, d, 3, avail);
    REQUIRE(l.size() == 5);
    std::vector<double> u(cols.col(0).data(), cols.col(0).data() + 60);
    std::sort(u.rbegin(), u.rend());
    for (int r = 0; r < 5; ++r) CHECK(l.entries[r].score == u[r]);
    // blend columns are the weighted sum of their components
    for (int j = 0; j < 60; ++j) CHECK(cols(j, 3) == doctest::Approx(cols(j, 1) + 2.0 * cols(j, 0)).epsilon(1e-14));
    // a noiseless p_a signal is logit(p_a)
    for (int j = 0; j < 60; ++j) CHECK(oracle::logistic(cols(j, 2)) == doctest::Approx(row.pa[j]).epsilon(1e-9));
}

TEST_CASE("measurement error touches only the named score columns") {
    Market m = sample_market(small_spec(), ModelParams{});
    ScorerRegistry reg = signal_registry();
    ExperimentDesign d = three_arms();
    ExperimentRun run = run_experiment(m, assign_treatments(m.seekers, d, m.spec.strata, 5), d, reg, 8, 1);
    InteractionLog noisy = inject_measurement_error(run.log, {{"hire"}, 0.5, 3});
    CHECK(noisy.scores[0] == run.log.scores[0]);
    CHECK(noisy.scores[1] != run.log.scores[1]);
    CHECK(noisy.applied == run.log.applied);
    CHECK(noisy.true_p == run.log.true_p);
    double v = 0;
    for (std::size_t r = 0; r < noisy.rows(); ++r) v += std::pow(noisy.scores[1][r] - run.log.scores[1][r], 2);
    CHECK(v / noisy.rows() == doctest::Approx(0.5).epsilon(0.15));
    CHECK_THROWS_AS(inject_measurement_error(run.log, {{"applied"}, 0.5, 3}), SchemaError);
}

TEST_CASE("sequential search simulation agrees with the value equation") {
    ModelParams m;
    m.alpha0 = 1.0;
    VacancyDistribution d = VacancyDistribution::uniform({{0.3, 1.6}, {0.6, 1.2}, {0.1, 2.4}});
    double rv0 = solve_value_unemployment(m, d);
    // the value of starting unemployed is rV0 / r
    SearchSimOptions opt;
    opt.horizon = 120.0;
    opt.dt = 0.01;
    const int N = 3000;
    double sum = 0, sum2 = 0;
    for (int i = 0; i < N; ++i) {
        SpellRecord s = simulate_sequential_search(d, m, rv0, opt, 17, static_cast<std::uint64_t>(i));
        sum += s.discounted_utility;
        sum2 += s.discounted_utility * s.discounted_utility;
    }
    double mean = sum / N, se = std::sqrt((sum2 / N - mean * mean) / N);
    // taste shocks add option value on top of the mean flows; both sides include them
    CHECK(std::abs(mean - rv0 / m.r) < 4 * se + 0.02 * rv0 / m.r);
}
