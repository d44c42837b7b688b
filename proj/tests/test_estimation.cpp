#include <doctest.h>

#include <map>

#include "oracles.hpp"
#include "wrank/errors.hpp"
#include "wrank/estimation.hpp"
#include "wrank/rng.hpp"

using namespace wr;

namespace {

std::vector<std::int64_t> clusters_of(int n, int per) {
    std::vector<std::int64_t> g(n);
    for (int i = 0; i < n; ++i) g[i] = i / per;
    return g;
}

}  // namespace

TEST_CASE("OLS coefficients and CR1 covariance match the normal equations") {
    const int n = 600;
    Stream rng(1);
    Eigen::MatrixXd X(n, 3);
    Eigen::VectorXd y(n);
    auto g = clusters_of(n, 6);
    for (int i = 0; i < n; ++i) {
        double c = (g[i] % 7) * 0.1;  // cluster-correlated noise
        X(i, 0) = 1.0;
        X(i, 1) = rng.normal();
        X(i, 2) = rng.normal() + c;
        y[i] = 0.5 + 2.0 * X(i, 1) - X(i, 2) + rng.normal() + c;
    }
    FitResult f = ols(y, X, {"const", "x1", "x2"}, g);
    Eigen::VectorXd b = oracle::ols(X, y);
    Eigen::MatrixXd V = oracle::ols_cr1(X, y, g);
    for (int k = 0; k < 3; ++k) {
        CHECK(f.coef[k] == doctest::Approx(b[k]).epsilon(1e-10));
        CHECK(f.se[k] == doctest::Approx(std::sqrt(V(k, k))).epsilon(1e-8));
    }
    CHECK(f.n_clusters == 100);
    CHECK(f.coef_of("x1") == f.coef[1]);
    CHECK_THROWS_AS(f.index("nope"), InputError);
    WaldTest w = wald_test(f, {"x1"});
    CHECK(w.F == doctest::Approx(std::pow(f.coef[1] / f.se[1], 2)).epsilon(1e-9));
    CHECK(w.df1 == 1);
    CHECK(w.df2 == 99);
}

TEST_CASE("rank deficiency names the offending columns") {
    Eigen::MatrixXd X(10, 3);
    Eigen::VectorXd y = Eigen::VectorXd::LinSpaced(10, 0, 1);
    for (int i = 0; i < 10; ++i) X(i, 0) = 1, X(i, 1) = i, X(i, 2) = 2 * i;
    try {
        ols(y, X, {"const", "a", "twice_a"}, clusters_of(10, 1));
        FAIL("expected a rank error");
    } catch (const NumericError& e) {
        std::string msg = e.what();
        // either of the collinear pair may be the one reported
        CHECK((msg.find(" a") != std::string::npos || msg.find("twice_a") != std::string::npos));
        CHECK(msg.find("rank 2 of 3") != std::string::npos);
    }
}

TEST_CASE("logit MLE satisfies its score equations and recovers the truth") {
    const int n = 20000;
    Stream rng(3);
    Eigen::MatrixXd X(n, 3);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        X(i, 0) = 1;
        X(i, 1) = rng.normal();
        X(i, 2) = rng.uniform();
        y[i] = rng.bernoulli(oracle::logistic(-1.0 + 0.8 * X(i, 1) + 1.5 * X(i, 2)));
    }
    auto g = clusters_of(n, 4);
    FitResult f = fit_logit(y, X, {"const", "a", "b"}, g);
    Eigen::VectorXd s = Eigen::VectorXd::Zero(3);
    for (int i = 0; i < n; ++i) s += X.row(i).transpose() * (y[i] - oracle::logistic(X.row(i).dot(f.coef)));
    CHECK(s.cwiseAbs().maxCoeff() / n < 1e-8);
    CHECK(std::abs(f.coef[0] + 1.0) < 3 * f.se[0]);
    CHECK(std::abs(f.coef[1] - 0.8) < 3 * f.se[1]);
    CHECK(std::abs(f.coef[2] - 1.5) < 3 * f.se[2]);
    CHECK(f.conv.converged);
    // loglik by hand
    double ll = 0;
    for (int i = 0; i < n; ++i) {
        double q = oracle::logistic(X.row(i).dot(f.coef));
        ll += y[i] ? std::log(q) : std::log1p(-q);
    }
    CHECK(f.loglik == doctest::Approx(ll).epsilon(1e-10));
}

TEST_CASE("logit flags separation and a constant outcome") {
    Eigen::MatrixXd X(40, 2);
    Eigen::VectorXd y(40);
    for (int i = 0; i < 40; ++i) X(i, 0) = 1, X(i, 1) = i - 19.5, y[i] = i >= 20;
    CHECK_THROWS_AS(fit_logit(y, X, {"const", "x"}, clusters_of(40, 1)), SeparationError);
    CHECK_THROWS_AS(fit_logit(Eigen::VectorXd::Zero(40), X, {"const", "x"}, clusters_of(40, 1)), DegenerateError);
}

TEST_CASE("Poisson MLE satisfies its score equations") {
    const int n = 5000;
    Stream rng(4);
    Eigen::MatrixXd X(n, 2);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        X(i, 0) = 1;
        X(i, 1) = rng.normal();
        double mu = std::exp(-0.5 + 0.3 * X(i, 1));
        std::poisson_distribution<int> pd(mu);
        y[i] = pd(rng.engine());
    }
    FitResult f = fit_poisson(y, X, {"const", "x"}, clusters_of(n, 5));
    Eigen::VectorXd s = Eigen::VectorXd::Zero(2);
    for (int i = 0; i < n; ++i) s += X.row(i).transpose() * (y[i] - std::exp(X.row(i).dot(f.coef)));
    CHECK(s.cwiseAbs().maxCoeff() / n < 1e-8);
    CHECK(std::abs(f.coef[1] - 0.3) < 3 * f.se[1]);
}

TEST_CASE("reduced form: arm coefficients are differences in arm means") {
    const int n = 900;
    Stream rng(5);
    std::vector<int> arm(n), slot(n, 1);
    Eigen::VectorXd y(n);
    std::vector<std::string> names{"a", "b", "c"};
    std::array<double, 3> sum{}, cnt{};
    for (int i = 0; i < n; ++i) {
        arm[i] = i % 3;
        y[i] = 0.2 * arm[i] + rng.normal();
        sum[arm[i]] += y[i];
        cnt[arm[i]] += 1;
    }
    FitResult f = fit_reduced_form(y, arm, names, slot, clusters_of(n, 1));
    CHECK(f.coef_of("arm_b") == doctest::Approx(sum[1] / cnt[1] - sum[0] / cnt[0]).epsilon(1e-10));
    CHECK(f.coef_of("arm_c") == doctest::Approx(sum[2] / cnt[2] - sum[0] / cnt[0]).epsilon(1e-10));
    REQUIRE(f.joint);
    CHECK(f.joint->df1 == 2);
}

namespace {

// Linear DGP with an endogenous regressor x: x depends on arm instruments and
// on a shock that also enters y.
PairDataset linear_iv_data(int n, std::uint64_t seed, double noise_var = 0.0) {
    Stream rng(seed);
    PairDataset d;
    d.y.resize(n);
    d.W.resize(n, 1);
    d.w_names = {"x"};
    d.T = Eigen::MatrixXd::Zero(n, 2);
    d.t_names = {"arm_1", "arm_2"};
    d.Z.resize(n, 1);
    d.z_names = {"ctrl"};
    for (int i = 0; i < n; ++i) {
        int a = static_cast<int>(rng.below(3));
        if (a > 0) d.T(i, a - 1) = 1;
        double v = rng.normal();
        double xstar = 1.0 * d.T(i, 0) + 2.0 * d.T(i, 1) + v;
        d.Z(i, 0) = rng.normal();
        d.y[i] = 1.0 - 0.5 * xstar + 0.3 * d.Z(i, 0) + 0.8 * v + rng.normal();
        d.W(i, 0) = xstar + std::sqrt(noise_var) * rng.normal();
        d.cluster.push_back(i / 3);
    }
    return d;
}

}  // namespace

TEST_CASE("2SLS equals the just-identified IV formula") {
    PairDataset d = linear_iv_data(3000, 6);
    d.T.conservativeResize(Eigen::NoChange, 1);  // one instrument, one regressor
    d.t_names.resize(1);
    FitResult f = two_stage_least_squares(d);
    const Eigen::Index n = d.rows();
    Eigen::MatrixXd X(n, 3), Z(n, 3);
    X << Eigen::VectorXd::Ones(n), d.W, d.Z;
    Z << Eigen::VectorXd::Ones(n), d.T, d.Z;
    Eigen::VectorXd b = (Z.transpose() * X).lu().solve(Z.transpose() * d.y);
    for (int k = 0; k < 3; ++k) CHECK(f.coef[k] == doctest::Approx(b[k]).epsilon(1e-9));
}

TEST_CASE("linear control function reproduces 2SLS and leaves residuals orthogonal to instruments") {
    PairDataset d = linear_iv_data(4000, 7);
    CfOptions opt;
    opt.bootstrap = 30;
    ControlFunctionFit cf = fit_lpm_cf(d, opt);
    FitResult tsls = two_stage_least_squares(d);
    CHECK(cf.second.coef_of("x") == doctest::Approx(tsls.coef_of("x")).epsilon(1e-9));
    Eigen::MatrixXd inst(d.rows(), 4);
    inst << Eigen::VectorXd::Ones(d.rows()), d.T, d.Z;
    CHECK((inst.transpose() * cf.v_hat).cwiseAbs().maxCoeff() < 1e-8 * d.rows());
    CHECK(cf.first_stage_F.size() == 1);
    CHECK(cf.first_stage_F[0] > 100);
    CHECK(!cf.weak_first_stage);
    CHECK(cf.bootstrap_reps + cf.bootstrap_failed == 30);
    // the control coefficient picks up the shared shock
    CHECK(cf.second.coef_of("v_x") > 0);
    CHECK(std::abs(cf.second.coef_of("x") + 0.5) < 3 * cf.second.se_of("x"));
}

TEST_CASE("control function corrects attenuation from classical measurement error") {
    PairDataset d = linear_iv_data(20000, 8, 1.0);
    Eigen::MatrixXd X(d.rows(), 3);
    X << Eigen::VectorXd::Ones(d.rows()), d.W, d.Z;
    FitResult naive = ols(d.y, X, {"const", "x", "ctrl"}, d.cluster);
    CfOptions opt;
    opt.bootstrap = 0;
    ControlFunctionFit cf = fit_lpm_cf(d, opt);
    CHECK(std::abs(naive.coef_of("x") + 0.5) > 5 * naive.se_of("x"));
    CHECK(std::abs(cf.second.coef_of("x") + 0.5) < 3 * cf.second.se_of("x"));
}

TEST_CASE("Poisson control function reports average marginal effects") {
    Stream rng(9);
    const int n = 6000;
    PairDataset d = linear_iv_data(n, 10);
    for (int i = 0; i < n; ++i) d.y[i] = rng.bernoulli(std::min(0.9, std::exp(-2.0 + 0.2 * d.W(i, 0))));
    CfOptions opt;
    opt.bootstrap = 0;
    ControlFunctionFit cf = fit_poisson_cf(d, opt);
    REQUIRE(cf.ame.size() == 1);
    // AME = theta * mean(exp(index)) by hand
    Eigen::MatrixXd X(n, 4);
    X << Eigen::VectorXd::Ones(n), d.W, d.Z, cf.v_hat;
    double mean_mu = (X * cf.second.coef).array().exp().mean();
    CHECK(cf.ame[0] == doctest::Approx(cf.second.coef_of("x") * mean_mu).epsilon(1e-10));
}

namespace {

// Conditional log likelihood by enumerating every same-size subset per group.
double brute_conditional_loglik(const Eigen::VectorXd& y, const Eigen::MatrixXd& X, const std::vector<std::int64_t>& g,
                                const Eigen::VectorXd& b) {
    std::map<std::int64_t, std::vector<int>> rows;
    for (int i = 0; i < y.size(); ++i) rows[g[i]].push_back(i);
    double ll = 0;
    for (auto& [id, r] : rows) {
        int n = static_cast<int>(r.size()), s = 0;
        double num = 0;
        for (int i : r) {
            s += static_cast<int>(y[i]);
            if (y[i]) num += X.row(i).dot(b);
        }
        if (s == 0 || s == n) continue;
        double den = 0;
        for (unsigned mask = 0; mask < (1u << n); ++mask) {
            if (__builtin_popcount(mask) != s) continue;
            double e = 0;
            for (int k = 0; k < n; ++k)
                if (mask >> k & 1) e += X.row(r[k]).dot(b);
            den += std::exp(e);
        }
        ll += num - std::log(den);
    }
    return ll;
}

}  // namespace

TEST_CASE("conditional logit maximizes the enumerated conditional likelihood") {
    Stream rng(11);
    const int groups = 300, per = 6;
    const int n = groups * per;
    Eigen::MatrixXd X(n, 2);
    Eigen::VectorXd y(n);
    std::vector<std::int64_t> g(n);
    for (int i = 0; i < n; ++i) {
        g[i] = i / per;
        double fe = 0.7 * static_cast<double>(g[i] % 5) - 1.5;
        X(i, 0) = rng.normal();
        X(i, 1) = rng.uniform();
        y[i] = rng.bernoulli(oracle::logistic(fe + 1.0 * X(i, 0) - 0.5 * X(i, 1)));
    }
    FitResult f = fit_conditional_logit_fe(y, X, {"a", "b"}, g);
    CHECK(f.loglik == doctest::Approx(brute_conditional_loglik(y, X, g, f.coef)).epsilon(1e-10));
    const double h = 1e-5;
    for (int k = 0; k < 2; ++k) {
        Eigen::VectorXd up = f.coef, dn = f.coef;
        up[k] += h;
        dn[k] -= h;
        double grad = (brute_conditional_loglik(y, X, g, up) - brute_conditional_loglik(y, X, g, dn)) / (2 * h);
        CHECK(std::abs(grad) < 1e-4);
    }
    CHECK(std::abs(f.coef[0] - 1.0) < 3 * f.se[0]);
    CHECK(!f.notes.empty());
}

TEST_CASE("conditional logit rejects oversized groups and data without movers") {
    Eigen::MatrixXd X = Eigen::MatrixXd::Random(30, 1);
    Eigen::VectorXd y = Eigen::VectorXd::Zero(30);
    y[0] = 1;
    std::vector<std::int64_t> one(30, 0);
    CHECK_THROWS_AS(fit_conditional_logit_fe(y, X, {"a"}, one, 20), InputError);
    std::vector<std::int64_t> pairs = clusters_of(30, 2);
    Eigen::VectorXd none = Eigen::VectorXd::Zero(30);
    CHECK_THROWS_AS(fit_conditional_logit_fe(none, X, {"a"}, pairs), DegenerateError);
}

namespace {

std::vector<std::vector<ApplicationRecord>> planted_sequences(int seekers, std::uint64_t seed, double a, double b) {
    Stream rng(seed);
    std::vector<std::vector<ApplicationRecord>> out(seekers);
    for (auto& seq : out) {
        int len = 1 + static_cast<int>(rng.below(8));
        for (int k = 0; k < len; ++k) {
            ApplicationRecord r;
            r.score = 20.0 * rng.normal() + 30.0;
            r.vacancy_rank = 1 + static_cast<int>(rng.below(12));
            r.hired = rng.bernoulli(oracle::logistic(a + b * r.score));
            seq.push_back(r);
        }
    }
    return out;
}

}  // namespace

TEST_CASE("hazard ignores applications after the first hire") {
    auto seq = planted_sequences(2000, 12, -2.0, 0.05);
    HazardFit base = fit_hazard_calibration(seq, RankMode::none);
    auto padded = seq;
    int rows = 0;
    for (auto& s : padded) {
        bool hired = false;
        for (auto& r : s) {
            if (hired) break;
            ++rows;
            hired = r.hired;
        }
        if (hired) s.push_back({99.0, 0, 1});  // after the hire, never at risk
    }
    HazardFit p = fit_hazard_calibration(padded, RankMode::none);
    CHECK(p.rows == rows);
    CHECK(p.intercept == doctest::Approx(base.intercept).epsilon(1e-12));
    CHECK(p.slope == doctest::Approx(base.slope).epsilon(1e-12));
}

TEST_CASE("hazard recovers planted coefficients and rank dummies never lower the likelihood") {
    auto seq = planted_sequences(6000, 13, -4.113, 0.061);
    HazardFit none = fit_hazard_calibration(seq, RankMode::none);
    CHECK(std::abs(none.intercept + 4.113) < 3 * none.fit.se_of("const"));
    CHECK(std::abs(none.slope - 0.061) < 3 * none.fit.se_of("score"));
    HazardFit app = fit_hazard_calibration(seq, RankMode::application, 5);
    HazardFit two = fit_hazard_calibration(seq, RankMode::two_sided, 5);
    CHECK(app.loglik >= none.loglik - 1e-9);
    CHECK(two.loglik >= app.loglik - 1e-9);
    CHECK(none.aic == doctest::Approx(2.0 * 2 - 2.0 * none.loglik));
    REQUIRE(app.alpha_js.size() == 5);
    CHECK(app.alpha_js[0] == 0.0);
    CHECK(parse_rank_mode("two-sided") == RankMode::two_sided);
    CHECK_THROWS_AS(parse_rank_mode("both"), ConfigError);
}

TEST_CASE("structural logit recovers alpha, beta and gamma") {
    const int n = 30000;
    Stream rng(14);
    Eigen::VectorXd a(n), U(n), p(n);
    for (int i = 0; i < n; ++i) {
        p[i] = 0.02 + 0.9 * rng.uniform();
        U[i] = 5.0 + 2.0 * rng.normal();
        a[i] = rng.bernoulli(oracle::logistic(1.0 * U[i] - 0.02 / p[i] - 5.0));
    }
    auto g = clusters_of(n, 10);
    FitResult f = fit_structural_logit(a, U, p, g);
    StructuralBundle b = recover_structural(f);
    CHECK(std::abs(b.alpha - 1.0) < 3 * f.se_of("U"));
    CHECK(std::abs(b.beta - 0.02) < 3 * f.se_of("inv_p"));
    CHECK(std::abs(b.gamma + 5.0) < 3 * f.se_of("const"));
    CHECK(b.sigma == doctest::Approx(1.0 / b.alpha));
    CHECK(b.kr_bar == doctest::Approx(b.beta / b.alpha));
    // the recovered surplus and welfare index follow the fitted index
    CHECK(b.delta_hat(0.5, 6.0) == doctest::Approx(6.0 - b.kr_bar / 0.5 + b.gamma / b.alpha));
    CHECK(b.gamma_hat(0.5, 6.0) ==
          doctest::Approx(0.5 * std::log1p(std::exp(b.alpha * 6.0 + b.gamma - b.beta / 0.5)) / b.alpha));
    FitResult c = fit_structural_logit(a, U, p, g, true);
    StructuralBundle cb = recover_structural(c);
    CHECK(cb.constrained);
    CHECK(cb.beta == cb.gamma);
}

TEST_CASE("structural recovery rejects a non-positive utility coefficient") {
    FitResult f;
    f.names = {"const", "U", "inv_p"};
    f.coef = Eigen::Vector3d(0.0, -1.0, 0.1);
    CHECK_THROWS_AS(recover_structural(f), DomainError);
}

TEST_CASE("logit reports quasi-separation from a dummy without events") {
    Stream rng(15);
    const int n = 2000;
    Eigen::MatrixXd X(n, 3);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        X(i, 0) = 1;
        X(i, 1) = rng.normal();
        X(i, 2) = i % 50 == 0;
        y[i] = X(i, 2) ? 0.0 : rng.bernoulli(oracle::logistic(0.5 * X(i, 1)));
    }
    try {
        fit_logit(y, X, {"const", "x", "rare"}, clusters_of(n, 1));
        FAIL("expected separation");
    } catch (const SeparationError& e) {
        CHECK(std::string(e.what()).find("rare") != std::string::npos);
    }
}

TEST_CASE("hazard pools rank levels without hires") {
    auto seq = planted_sequences(500, 16, -2.0, 0.02);
    for (auto& s : seq)
        for (std::size_t k = 2; k < s.size(); ++k) s[k].hired = 0;  // nobody hired from the third application on
    HazardFit h = fit_hazard_calibration(seq, RankMode::application, 5);
    CHECK(h.alpha_js[2] == 0.0);
    CHECK(h.alpha_js[1] != 0.0);
    bool noted = false;
    for (auto& note : h.notes) noted |= note.find("rank_js_3") != std::string::npos;
    CHECK(noted);
}
