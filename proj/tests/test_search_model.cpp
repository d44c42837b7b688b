#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "oracles.hpp"
#include "wrank/rng.hpp"
#include "wrank/search_model.hpp"
#include "wrank/shocks.hpp"

using namespace wr;

TEST_CASE("reservation utility follows rV0 - Rbar + (kbar + Rbar) / p") {
    ModelParams m;
    m.r = 0.05, m.q = 0.15, m.k = 0.1, m.R = 0.4;
    const double kb = 0.2 * 0.1, Rb = 0.2 * 0.4;
    for (double p : {0.05, 0.3, 1.0})
        CHECK(reservation_utility(1.3, p, m) == doctest::Approx(1.3 - Rb + (kb + Rb) / p).epsilon(1e-15));
    CHECK(reservation_utility(1.3, 1.0, m) == doctest::Approx(1.3 + kb));
    CHECK_THROWS_AS(reservation_utility(1.0, 0.0, m), DomainError);
}

TEST_CASE("closed-form gamma matches a fine Simpson integral of the survival function") {
    for (double p : {0.05, 0.4, 1.0})
        for (double d : {-6.0, -1.0, 0.0, 0.7, 4.0})
            for (double s : {0.3, 1.0, 2.5}) {
                double ref = oracle::gamma_logistic(p, d, s);
                CHECK(std::abs(gamma_closed(p, d, s) - ref) < 1e-8);
            }
}

TEST_CASE("closed-form gamma matches the library quadrature for logistic shocks") {
    for (double p : {0.1, 0.9})
        for (double d : {-3.0, 0.0, 2.0})
            CHECK(std::abs(gamma_closed(p, d, 1.2) - gamma_numeric(p, d, 1.2, ShockFamily::logistic)) < 1e-6);
}

TEST_CASE("gamma decomposes into p * p_a * sigma m(p_a)") {
    Stream rng(5);
    for (int i = 0; i < 500; ++i) {
        double p = 0.001 + 0.998 * rng.uniform();
        double d = -8.0 + 14.0 * rng.uniform();
        double s = 0.2 + 2.0 * rng.uniform();
        GammaFactors f = decompose_gamma(p, d, s);
        CHECK(std::abs(f.product() - gamma_closed(p, d, s)) <= 1e-12 * std::max(1.0, gamma_closed(p, d, s)));
        CHECK(f.p_h() == doctest::Approx(p * oracle::logistic(d / s)).epsilon(1e-12));
    }
}

TEST_CASE("m factor limits and series bound") {
    CHECK(m_factor(0.0) == 1.0);
    CHECK(m_factor(1e-10) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(m_factor(0.5) == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-14));
    CHECK(m_factor(1.0 - 1e-12) > 25.0);
    CHECK_THROWS_AS(m_factor(1.0), DomainError);
    CHECK_THROWS_AS(m_factor(-0.1), DomainError);
    for (double pa = 0.001; pa <= 0.1; pa += 0.001) CHECK(std::abs(m_factor(pa) - (1 + pa / 2)) <= pa * pa / 2);
    double prev = 0.0;
    for (double pa = 0.0; pa < 0.99; pa += 0.01) {
        CHECK(m_factor(pa) > prev);
        prev = m_factor(pa);
    }
}

TEST_CASE("gamma is increasing in p and in delta") {
    for (double d = -5; d < 5; d += 0.5) {
        CHECK(gamma_closed(0.6, d, 1.0) > gamma_closed(0.3, d, 1.0));
        CHECK(gamma_closed(0.6, d + 0.1, 1.0) > gamma_closed(0.6, d, 1.0));
    }
    CHECK(gamma_closed(0.0, 2.0, 1.0) == 0.0);
    CHECK_THROWS_AS(gamma_closed(1.5, 0.0, 1.0), DomainError);
    CHECK_THROWS_AS(gamma_closed(0.5, 0.0, 0.0), DomainError);
}

namespace {

VacancyDistribution random_dist(Stream& rng, int n) {
    std::vector<VacancyLottery> atoms(n);
    for (auto& a : atoms) a = {0.02 + 0.9 * rng.uniform(), 0.5 + 1.5 * rng.normal()};
    return VacancyDistribution::uniform(atoms);
}

}  // namespace

TEST_CASE("baseline value solves its fixed point and agrees with a plain bisection") {
    Stream rng(11);
    for (int t = 0; t < 20; ++t) {
        ModelParams m;
        m.alpha0 = 0.1 + rng.uniform();
        VacancyDistribution d = random_dist(rng, 15);
        double v = solve_value_unemployment(m, d);
        CHECK(std::abs(baseline_map(v, m, d) - v) < 1e-9);
        std::vector<oracle::Atom> atoms;
        for (auto& a : d.atoms) atoms.push_back({a.p, a.U});
        auto g = [&](double z) {
            return oracle::value_map(z, m.r, m.q, m.u_b, m.k, m.R, m.sigma, m.alpha0, atoms, d.weights) - z;
        };
        double ref = oracle::bisect(g, m.u_b - 10, m.u_b + 100);
        CHECK(v == doctest::Approx(ref).epsilon(1e-9));
    }
}

TEST_CASE("value with no arrivals is the benefit flow") {
    ModelParams m;
    m.alpha0 = 0.0;
    Stream rng(2);
    CHECK(solve_value_unemployment(m, random_dist(rng, 5)) == doctest::Approx(m.u_b));
}

TEST_CASE("selection weights take exactly the share, best scores first, ties to the lower atom") {
    std::vector<double> w{0.25, 0.25, 0.25, 0.25};
    auto om = selection_weights(w, {1.0, 3.0, 3.0, 2.0}, 0.6);
    CHECK(om[1] == doctest::Approx(0.25));
    CHECK(om[2] == doctest::Approx(0.25));
    CHECK(om[3] == doctest::Approx(0.1));
    CHECK(om[0] == 0.0);
    CHECK(std::accumulate(om.begin(), om.end(), 0.0) == doctest::Approx(0.6));
    CHECK_THROWS_AS(selection_weights(w, {1, 2, 3, 4}, 0.0), DomainError);
}

TEST_CASE("top-k by gamma maximizes the myopic value over every subset of k atoms") {
    Stream rng(3);
    for (int t = 0; t < 30; ++t) {
        ModelParams m;
        const int n = 8;
        VacancyDistribution d = random_dist(rng, n);
        const double rv0 = solve_value_unemployment(m, d);
        auto g = gamma_scores(m, d, rv0);
        for (int k = 1; k <= n; ++k) {
            double s = static_cast<double>(k) / n;
            double best = -1e300;
            for (unsigned mask = 0; mask < (1u << n); ++mask) {
                if (__builtin_popcount(mask) != k) continue;
                double e = 0;
                for (int a = 0; a < n; ++a)
                    if (mask >> a & 1) e += g[a] / n;
                best = std::max(best, m.u_b + m.alpha1 / m.rq() * e / s);
            }
            CHECK(value_with_rs_myopic(m, d, g, s, rv0) == doctest::Approx(best).epsilon(1e-12));
        }
    }
}

TEST_CASE("a recommender that shows everything reproduces the baseline when arrival rates match") {
    ModelParams m;
    m.alpha1 = m.alpha0;
    Stream rng(8);
    VacancyDistribution d = random_dist(rng, 10);
    double rv0 = solve_value_unemployment(m, d);
    std::vector<double> any(10, 0.0);
    CHECK(value_with_rs_myopic(m, d, any, 1.0, rv0) == doctest::Approx(rv0).epsilon(1e-10));
}

TEST_CASE("belief decomposition adds up and has no information effect under correct beliefs") {
    ModelParams m;
    Stream rng(4);
    VacancyDistribution truth = random_dist(rng, 12), subj = truth;
    for (auto& a : subj.atoms) a.U -= 0.3;
    auto g = gamma_scores(m, truth, solve_value_unemployment(m, truth));
    BeliefEffects b = belief_decomposition(subj, truth, g, 0.25, m);
    CHECK(b.full == doctest::Approx(b.pure + b.info).epsilon(1e-12));
    CHECK(b.info > 0);  // pessimistic beliefs understate the value
    BeliefEffects c = belief_decomposition(truth, truth, g, 0.25, m);
    CHECK(std::abs(c.info) < 1e-12);
}

TEST_CASE("value solver rejects invalid models") {
    ModelParams m;
    m.sigma = 0.0;
    Stream rng(1);
    CHECK_THROWS_AS(solve_value_unemployment(m, random_dist(rng, 3)), DomainError);
}
