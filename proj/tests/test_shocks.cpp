#include <doctest.h>

#include <numbers>

#include "oracles.hpp"
#include "wrank/quadrature.hpp"
#include "wrank/search_model.hpp"
#include "wrank/shocks.hpp"

using namespace wr;

TEST_CASE("Gauss-Legendre integrates polynomials of degree 2n-1 exactly") {
    auto f = [](double x) { return 7 * std::pow(x, 9) - 3 * std::pow(x, 4) + x + 2; };
    double exact = 7.0 / 10 * (std::pow(2.0, 10) - 1) - 3.0 / 5 * (32 - 1) + 0.5 * (4 - 1) + 2.0;
    CHECK(integrate(f, 1.0, 2.0, 5) == doctest::Approx(exact).epsilon(1e-13));
    const GaussLegendre& g = gauss_legendre(64);
    CHECK(g.weights.sum() == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("matched shock families share the logistic variance") {
    const double target = std::numbers::pi * std::numbers::pi / 3.0 * 1.7 * 1.7;
    for (auto f : {ShockFamily::logistic, ShockFamily::gumbel, ShockFamily::normal}) {
        ShockDistribution d = ShockDistribution::matched(f, 1.7);
        CHECK(d.variance() == doctest::Approx(target).epsilon(1e-12));
        // the variance by direct integration of x^2 pdf (all families are mean zero)
        double L = d.tail_length();
        double mean = oracle::simpson([&](double x) { return x * d.pdf(x); }, -L, L);
        double var = oracle::simpson([&](double x) { return x * x * d.pdf(x); }, -L, L);
        CHECK(std::abs(mean) < 1e-7);
        CHECK(var == doctest::Approx(target).epsilon(1e-6));
    }
}

TEST_CASE("quantile inverts the cdf and survival complements it") {
    for (auto f : {ShockFamily::logistic, ShockFamily::gumbel, ShockFamily::normal}) {
        ShockDistribution d = ShockDistribution::matched(f, 1.0);
        for (double u : {0.001, 0.2, 0.5, 0.77, 0.999}) CHECK(d.cdf(d.quantile(u)) == doctest::Approx(u).epsilon(1e-10));
        for (double x : {-3.0, 0.0, 2.0}) CHECK(d.cdf(x) + d.survival(x) == doctest::Approx(1.0).epsilon(1e-14));
    }
    CHECK(parse_shock_family("gumbel") == ShockFamily::gumbel);
    CHECK(to_string(ShockFamily::normal) == "normal");
    CHECK_THROWS(parse_shock_family("cauchy"));
}

TEST_CASE("logistic m curve equals the closed-form m factor") {
    ShockDistribution d = ShockDistribution::matched(ShockFamily::logistic, 1.0);
    for (double pa : {0.001, 0.05, 0.5, 0.9, 0.95}) CHECK(m_curve(pa, d) == doctest::Approx(m_factor(pa)).epsilon(1e-8));
    CHECK(m_curve(0.5, d) == doctest::Approx(1.386294).epsilon(1e-6));
}

TEST_CASE("m curves are increasing in p_a for every family") {
    for (auto f : {ShockFamily::gumbel, ShockFamily::normal}) {
        ShockDistribution d = ShockDistribution::matched(f, 1.0);
        double prev = 0.0;
        for (double pa = 0.01; pa < 0.95; pa += 0.02) {
            double m = m_curve(pa, d);
            CHECK(m > prev);
            prev = m;
        }
    }
}

TEST_CASE("numeric gamma against a Simpson oracle for non-logistic shocks") {
    for (auto f : {ShockFamily::gumbel, ShockFamily::normal}) {
        ShockDistribution d = ShockDistribution::matched(f, 1.0);
        for (double delta : {-2.0, 0.0, 1.5}) {
            double L = d.tail_length() + std::abs(delta);
            double ref = oracle::simpson([&](double t) { return d.survival(t - delta); }, 0.0, L, 40000);
            CHECK(gamma_numeric(0.7, delta, d) == doctest::Approx(0.7 * ref).epsilon(1e-7));
        }
    }
}
