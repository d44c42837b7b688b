#include "wrank/shocks.hpp"

#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <numbers>

#include "wrank/errors.hpp"
#include "wrank/quadrature.hpp"

namespace wr {

namespace {
constexpr double kEuler = 0.57721566490153286061;
}

ShockFamily parse_shock_family(const std::string& name) {
    if (name == "logistic") return ShockFamily::logistic;
    if (name == "gumbel") return ShockFamily::gumbel;
    if (name == "normal") return ShockFamily::normal;
    throw ConfigError("unsupported shock family '" + name + "'");
}

std::string to_string(ShockFamily f) {
    switch (f) {
        case ShockFamily::logistic: return "logistic";
        case ShockFamily::gumbel: return "gumbel";
        case ShockFamily::normal: return "normal";
    }
    return "?";
}

ShockDistribution ShockDistribution::matched(ShockFamily family, double sigma) {
    if (!(sigma > 0)) throw DomainError("shock scale must be > 0");
    // logistic variance is sigma^2 pi^2 / 3
    switch (family) {
        case ShockFamily::logistic: return {family, sigma};
        case ShockFamily::gumbel: return {family, sigma * std::sqrt(2.0)};
        case ShockFamily::normal: return {family, sigma * std::numbers::pi / std::sqrt(3.0)};
    }
    throw ConfigError("unsupported shock family");
}

double ShockDistribution::variance() const {
    const double pi2 = std::numbers::pi * std::numbers::pi;
    switch (family) {
        case ShockFamily::logistic: return scale * scale * pi2 / 3.0;
        case ShockFamily::gumbel: return scale * scale * pi2 / 6.0;
        case ShockFamily::normal: return scale * scale;
    }
    return 0.0;
}

double ShockDistribution::cdf(double x) const {
    switch (family) {
        case ShockFamily::logistic: {
            double t = x / scale;
            return t >= 0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t));
        }
        case ShockFamily::gumbel: return std::exp(-std::exp(-(x / scale + kEuler)));
        case ShockFamily::normal: return 0.5 * std::erfc(-x / (scale * std::numbers::sqrt2));
    }
    return 0.0;
}

double ShockDistribution::survival(double x) const {
    switch (family) {
        case ShockFamily::logistic: {
            double t = x / scale;
            return t >= 0 ? std::exp(-t) / (1.0 + std::exp(-t)) : 1.0 / (1.0 + std::exp(t));
        }
        case ShockFamily::gumbel: return -std::expm1(-std::exp(-(x / scale + kEuler)));
        case ShockFamily::normal: return 0.5 * std::erfc(x / (scale * std::numbers::sqrt2));
    }
    return 0.0;
}

double ShockDistribution::pdf(double x) const {
    switch (family) {
        case ShockFamily::logistic: {
            double e = std::exp(-std::abs(x) / scale);
            return e / (scale * (1.0 + e) * (1.0 + e));
        }
        case ShockFamily::gumbel: {
            double z = x / scale + kEuler;
            return std::exp(-z - std::exp(-z)) / scale;
        }
        case ShockFamily::normal: {
            double z = x / scale;
            return std::exp(-0.5 * z * z) / (scale * std::sqrt(2.0 * std::numbers::pi));
        }
    }
    return 0.0;
}

double ShockDistribution::quantile(double u) const {
    if (!(u > 0.0 && u < 1.0)) throw DomainError("quantile level outside (0,1)");
    switch (family) {
        case ShockFamily::logistic: return scale * std::log(u / (1.0 - u));
        case ShockFamily::gumbel: return scale * (-std::log(-std::log(u)) - kEuler);
        case ShockFamily::normal:
            return boost::math::quantile(boost::math::normal_distribution<double>(0.0, scale), u);
    }
    return 0.0;
}

double ShockDistribution::tail_length() const {
    switch (family) {
        case ShockFamily::logistic: return 40.0 * scale;
        case ShockFamily::gumbel: return 40.0 * scale;
        case ShockFamily::normal: return 12.0 * scale;
    }
    return 0.0;
}

double gamma_numeric(double p, double delta, const ShockDistribution& dist, int nodes) {
    if (nodes < 32) throw ConfigError("gamma_numeric needs at least 32 nodes");
    if (!(dist.scale > 0)) throw DomainError("shock scale must be > 0");
    const double L = dist.tail_length();
    // E[(d+e)^+] = d + int_0^inf F(-d-t) dt  for d >= 0
    //            =     int_0^inf S(t-d) dt    for d < 0
    // Both integrands decay on the shock's scale, so a fixed window suffices.
    double tail;
    if (delta >= 0) {
        tail = delta + integrate([&](double t) { return dist.cdf(-delta - t); }, 0.0, L, nodes);
    } else {
        tail = integrate([&](double t) { return dist.survival(t - delta); }, 0.0, L, nodes);
    }
    return p * tail;
}

double gamma_numeric(double p, double delta, double sigma, ShockFamily family, int nodes) {
    return gamma_numeric(p, delta, ShockDistribution::matched(family, sigma), nodes);
}

double m_curve(double p_a, const ShockDistribution& dist, int nodes) {
    if (!(p_a > 0.0 && p_a < 1.0)) throw DomainError("m_curve: p_a outside (0,1)");
    // p_a = P(delta + eps > 0) = S(-delta)
    double delta = -dist.quantile(1.0 - p_a);
    return gamma_numeric(1.0, delta, dist, nodes) / p_a;
}

}  // namespace wr
