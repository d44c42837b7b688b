#pragma once

#include <string>

namespace wr {

enum class ShockFamily { logistic, gumbel, normal };

ShockFamily parse_shock_family(const std::string& name);
std::string to_string(ShockFamily f);

// Mean-zero taste shock. `scale` is the family's own scale parameter; use
// matched() to get the member whose variance equals a logistic with scale sigma.
struct ShockDistribution {
    ShockFamily family = ShockFamily::logistic;
    double scale = 1.0;

    static ShockDistribution matched(ShockFamily family, double sigma);

    double cdf(double x) const;
    double survival(double x) const;
    double pdf(double x) const;
    double quantile(double u) const;
    double variance() const;
    double tail_length() const;  // beyond this distance both tails are negligible
};

// p * E[(delta + eps)^+] by Gauss-Legendre quadrature.
double gamma_numeric(double p, double delta, double sigma, ShockFamily family, int nodes = 256);
double gamma_numeric(double p, double delta, const ShockDistribution& dist, int nodes = 256);

// E[delta + eps | delta + eps > 0] at the delta giving application rate p_a.
double m_curve(double p_a, const ShockDistribution& dist, int nodes = 256);

}  // namespace wr
