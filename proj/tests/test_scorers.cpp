#include <doctest.h>

#include <set>

#include "oracles.hpp"
#include "wrank/errors.hpp"
#include "wrank/ranking.hpp"
#include "wrank/rng.hpp"
#include "wrank/scorers.hpp"

using namespace wr;

TEST_CASE("published criterion weights") {
    WeightProfile w = WeightProfile::pes();
    REQUIRE(w.size() == 10);
    CHECK(w.criteria[0].second == doctest::Approx(0.332));
    CHECK(w.criteria[1].second == doctest::Approx(0.332));
    CHECK(w.criteria[2].second == doctest::Approx(0.1));
    CHECK(w.total() == doctest::Approx(0.998));
    std::vector<double> only_first(10, 0.0);
    only_first[0] = 1.0;
    CHECK(u_score(only_first, w) == doctest::Approx(0.332));
    CHECK(u_score(std::vector<double>(10, 1.0), w) == doctest::Approx(w.total()));
    CHECK_THROWS(u_score(std::vector<double>(3, 1.0), w));
}

TEST_CASE("calibration maps a score through the logistic") {
    CalibrationCoefficients c;
    CHECK(c.intercept == -4.113);
    CHECK(c.slope == 0.061);
    CHECK(apply_calibration(0.0, c) == doctest::Approx(0.0161).epsilon(5e-3));
    CHECK(apply_calibration(50.0, c) == doctest::Approx(oracle::logistic(-4.113 + 0.061 * 50)).epsilon(1e-14));
}

namespace {

BilinearScorer small_scorer(std::uint64_t seed) {
    TripletHyper h;
    h.seed = seed;
    return make_bilinear({{"geo", 2, 3, 2}, {"skill", 3, 2, 2}}, h);
}

}  // namespace

TEST_CASE("bilinear score equals the explicit block sum") {
    BilinearScorer s = small_scorer(3);
    Stream rng(1);
    Eigen::VectorXd x(5), y(5);
    for (int i = 0; i < 5; ++i) x[i] = rng.normal(), y[i] = rng.normal();
    double ref = 0.0;
    int ox = 0, oy = 0;
    for (const auto& b : s.blocks) {
        Eigen::VectorXd xs = b.W * x.segment(ox, b.shape.seeker_dim) + b.c;
        Eigen::VectorXd ys = b.V * y.segment(oy, b.shape.vacancy_dim) + b.e;
        for (int i = 0; i < xs.size(); ++i)
            for (int j = 0; j < ys.size(); ++j) ref += xs[i] * b.A(i, j) * ys[j];
        ox += b.shape.seeker_dim;
        oy += b.shape.vacancy_dim;
    }
    CHECK(bilinear_score(x, y, s) == doctest::Approx(ref).epsilon(1e-13));
    for (auto& b : s.blocks) b.A.setZero();
    CHECK(bilinear_score(x, y, s) == 0.0);
}

TEST_CASE("flatten and unflatten are inverse") {
    BilinearScorer s = small_scorer(4);
    Eigen::VectorXd t = s.flatten();
    CHECK(t.size() == s.n_params());
    BilinearScorer z = small_scorer(5);
    z.unflatten(t);
    CHECK((z.flatten() - t).norm() == 0.0);
}

TEST_CASE("triplet gradient matches central differences") {
    BilinearScorer s = small_scorer(6);
    Stream rng(7);
    Eigen::MatrixXd X(6, 5), Y(8, 5);
    for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = rng.normal();
    for (Eigen::Index i = 0; i < Y.size(); ++i) Y.data()[i] = rng.normal();
    std::vector<Triplet> tr;
    for (int i = 0; i < 6; ++i)
        for (int n = 0; n < 3; ++n) tr.push_back({i, i % 8, (i + n + 1) % 8});
    s.hyper.margin = 5.0;  // keep every hinge active so the loss is smooth at the probe
    Eigen::VectorXd g;
    triplet_loss(s, X, Y, tr, &g);
    Eigen::VectorXd t = s.flatten();
    const double h = 1e-6;
    double worst = 0.0;
    for (Eigen::Index k = 0; k < t.size(); ++k) {
        BilinearScorer a = s, b = s;
        Eigen::VectorXd tp = t, tm = t;
        tp[k] += h;
        tm[k] -= h;
        a.unflatten(tp);
        b.unflatten(tm);
        double fd = (triplet_loss(a, X, Y, tr, nullptr) - triplet_loss(b, X, Y, tr, nullptr)) / (2 * h);
        worst = std::max(worst, std::abs(fd - g[k]) / std::max(1e-3, std::abs(fd)));
    }
    CHECK(worst < 1e-5);
}

TEST_CASE("hinge is inactive when positives already win by the margin") {
    BilinearScorer s = small_scorer(8);
    Eigen::MatrixXd X = Eigen::MatrixXd::Zero(1, 5), Y = Eigen::MatrixXd::Zero(3, 5);
    s.hyper.margin = 1.0;
    for (auto& b : s.blocks) {
        b.c.setZero();
        b.e.setZero();
    }
    X(0, 0) = 1.0;
    Y(0, 0) = 100.0;
    Y(1, 0) = Y(2, 0) = -100.0;
    const double diff = bilinear_score(X.row(0).transpose(), Y.row(0).transpose(), s);
    REQUIRE(std::abs(diff) > 1.0);
    if (diff < 0) Y = -Y;  // make vacancy 0 the clear winner
    std::vector<Triplet> tr{{0, 0, 1}, {0, 0, 2}};
    Eigen::VectorXd g;
    CHECK(triplet_loss(s, X, Y, tr, &g) == 0.0);
    CHECK(g.norm() == 0.0);
    // training on a satisfied set leaves the parameters alone
    BilinearScorer t = train_triplet({{0, 0}}, X, Y, {1, 2}, s);
    CHECK((t.flatten() - s.flatten()).norm() == 0.0);
}

TEST_CASE("scorer text round trip is exact") {
    BilinearScorer s = small_scorer(9);
    s.final_loss = 0.123456789012345;
    std::string txt = serialize_scorer(s);
    CHECK(txt.rfind("wrank-bilinear 1\n", 0) == 0);
    BilinearScorer r = parse_scorer(txt);
    CHECK((r.flatten() - s.flatten()).norm() == 0.0);
    CHECK(r.final_loss == s.final_loss);
    CHECK(serialize_scorer(r) == txt);
    CHECK_THROWS(parse_scorer("wrank-bilinear 9\n"));
    CHECK_THROWS(parse_scorer(txt.substr(0, txt.size() / 2)));
}

TEST_CASE("training needs matches") {
    BilinearScorer s = small_scorer(1);
    Eigen::MatrixXd X = Eigen::MatrixXd::Zero(1, 5), Y = Eigen::MatrixXd::Zero(2, 5);
    CHECK_THROWS_AS(train_triplet({}, X, Y, {0, 1}, s), InputError);
}

TEST_CASE("top-k ranking breaks ties toward the lower vacancy id") {
    std::vector<double> sc{0.5, 0.9, 0.9, 0.1, 0.9};
    RankedList l = rank_top_k(std::span<const double>(sc), 4, 7);
    REQUIRE(l.size() == 4);
    CHECK(l.entries[0].vacancy == 1);
    CHECK(l.entries[1].vacancy == 2);
    CHECK(l.entries[2].vacancy == 4);
    CHECK(l.entries[3].vacancy == 0);
    CHECK(l.rank_of(4) == 3);
    CHECK(l.rank_of(3) == 0);
    CHECK(l.seeker == 7);
}

TEST_CASE("gamma ranking separates equal application probabilities by p") {
    // same surplus, so the same application probability, but different p
    std::vector<double> p{0.1, 0.5}, pa{0.3, 0.3};
    RankedList g = gamma_rank(p, pa, 2);
    CHECK(g.entries[0].vacancy == 1);
    CHECK(g.entries[0].score > g.entries[1].score);
    RankedList a = rank_top_k(std::span<const double>(pa), 2);
    CHECK(a.entries[0].score == a.entries[1].score);
}

TEST_CASE("recall@k is monotone in k and matches the random baseline") {
    const int J = 200, N = 4000;
    Stream rng(12);
    std::vector<RankedList> lists(N);
    std::vector<int> match(N);
    for (int i = 0; i < N; ++i) {
        std::vector<double> s(J);
        for (double& x : s) x = rng.uniform();
        lists[i] = rank_top_k(std::span<const double>(s), J, i);
        match[i] = static_cast<int>(rng.below(J));
    }
    double prev = 0.0;
    for (int k : {1, 5, 10, 20, 50, 200}) {
        RecallResult r = recall_at_k(lists, match, k);
        CHECK(r.value >= prev);
        prev = r.value;
        const double base = static_cast<double>(k) / J, se = std::sqrt(base * (1 - base) / N);
        CHECK(std::abs(r.value - base) <= 3 * se + 1e-12);
    }
    CHECK(prev == 1.0);
}

TEST_CASE("consideration set and mix ranking") {
    const int J = 300;
    std::vector<double> u(J), p(J);
    Stream rng(5);
    for (int j = 0; j < J; ++j) u[j] = rng.normal(), p[j] = rng.normal();
    RankedList ur = rank_top_k(std::span<const double>(u), J), pr = rank_top_k(std::span<const double>(p), J);
    ConsiderationSet cs = consideration_set(ur, pr);
    CHECK(std::is_sorted(cs.vacancies.begin(), cs.vacancies.end()));
    CHECK(!cs.vacancies.empty());
    RankedList mix = mix_rank(cs, 0.25, p, u, 15);
    CHECK(mix.size() == std::min<std::size_t>(15, cs.vacancies.size()));
    // every picked vacancy is in the consideration set and the list is ordered by u
    std::set<int> in(cs.vacancies.begin(), cs.vacancies.end());
    for (std::size_t r = 0; r < mix.size(); ++r) {
        CHECK(in.count(mix.entries[r].vacancy) == 1);
        if (r) CHECK(u[mix.entries[r - 1].vacancy] >= u[mix.entries[r].vacancy]);
    }
    // fraction 1 keeps the whole set, so the result is the top of the set by u
    RankedList all = mix_rank(cs, 1.0, p, u, 15);
    std::vector<int> by_u(cs.vacancies);
    std::stable_sort(by_u.begin(), by_u.end(), [&](int a, int b) { return u[a] > u[b]; });
    for (std::size_t r = 0; r < all.size(); ++r) CHECK(all.entries[r].vacancy == by_u[r]);
}

TEST_CASE("display list drops unavailable vacancies") {
    std::vector<double> s{5, 4, 3, 2, 1};
    RankedList l = rank_top_k(std::span<const double>(s), 5);
    std::vector<char> avail{1, 0, 1, 0, 1};
    RankedList d = display_list(l, avail, 2);
    REQUIRE(d.size() == 2);
    CHECK(d.entries[0].vacancy == 0);
    CHECK(d.entries[1].vacancy == 2);
}

TEST_CASE("rank divergence reads the rank of the other list's top item") {
    std::vector<double> u{3, 2, 1}, p{1, 2, 3};
    RankDivergence d = rank_divergence({rank_top_k(std::span<const double>(u), 3)},
                                       {rank_top_k(std::span<const double>(p), 3)});
    CHECK(d.u_rank_of_p_top[0] == 3);
    CHECK(d.p_rank_of_u_top[0] == 3);
}
