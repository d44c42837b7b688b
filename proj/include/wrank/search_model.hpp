#pragma once

#include <cmath>
#include <vector>

#include "wrank/errors.hpp"

namespace wr {

template <typename Scalar>
struct ModelParamsT {
    Scalar r = 0.05;
    Scalar q = 0.15;
    Scalar u_b = 1.0;
    Scalar k = 0.1;
    Scalar R = 0.4;
    Scalar sigma = 1.0;
    Scalar alpha0 = 0.5;
    Scalar alpha1 = 0.5;

    Scalar rq() const { return r + q; }
    Scalar k_bar() const { return (r + q) * k; }
    Scalar R_bar() const { return (r + q) * R; }

    void validate() const {
        using std::isfinite;
        if (!(r > 0)) throw DomainError("model: r must be > 0");
        if (!(q >= 0)) throw DomainError("model: q must be >= 0");
        if (!(k >= 0) || !(R >= 0)) throw DomainError("model: k and R must be >= 0");
        if (!(sigma > 0)) throw DomainError("model: sigma must be > 0");
        if (!(alpha0 >= 0) || !(alpha1 >= 0)) throw DomainError("model: arrival rates must be >= 0");
    }
};
using ModelParams = ModelParamsT<double>;

struct VacancyLottery {
    double p = 1.0;
    double U = 0.0;
};

// Finite representation of F0(p, U).
struct VacancyDistribution {
    std::vector<VacancyLottery> atoms;
    std::vector<double> weights;

    static VacancyDistribution uniform(std::vector<VacancyLottery> atoms);
    std::size_t size() const { return atoms.size(); }
    void validate() const;
};

template <typename S>
S softplus(S x) {
    using std::exp;
    using std::log1p;
    if (x > S(30)) return x + log1p(exp(-x));
    return log1p(exp(x));
}

template <typename S>
S logistic_cdf(S x) {
    using std::exp;
    if (x >= S(0)) return S(1) / (S(1) + exp(-x));
    S e = exp(x);
    return e / (S(1) + e);
}

// U*(p) = rV0 - Rbar + (kbar + Rbar)/p
template <typename S>
S reservation_utility(S rV0, S p, const ModelParamsT<S>& m) {
    if (!(p > S(0))) throw DomainError("reservation_utility: p must be > 0");
    return rV0 - m.R_bar() + (m.k_bar() + m.R_bar()) / p;
}

template <typename S>
S surplus(S U, S p, S rV0, const ModelParamsT<S>& m) {
    return U - reservation_utility(rV0, p, m);
}

template <typename S>
S application_probability(S delta, S sigma) {
    if (!(sigma > S(0))) throw DomainError("application_probability: sigma must be > 0");
    return logistic_cdf(delta / sigma);
}

template <typename S>
S gamma_closed(S p, S delta, S sigma) {
    if (!(sigma > S(0))) throw DomainError("gamma_closed: sigma must be > 0");
    if (!(p >= S(0)) || p > S(1)) throw DomainError("gamma_closed: p outside [0,1]");
    return p * sigma * softplus(delta / sigma);
}

// Expected surplus given an application, per unit of sigma, as a function of p_a.
template <typename S>
S m_factor(S pa) {
    using std::log1p;
    if (!(pa >= S(0))) throw DomainError("m_factor: p_a must be >= 0");
    if (!(pa < S(1))) throw DomainError("m_factor: diverges as p_a -> 1");
    if (pa == S(0)) return S(1);
    if (pa < S(1e-8)) return S(1) + pa / S(2) + pa * pa / S(3);
    return -log1p(-pa) / pa;
}

struct GammaFactors {
    double p = 0.0;
    double p_a = 0.0;
    double m = 0.0;  // sigma * m(p_a), utility units
    double product() const { return p * p_a * m; }
    double p_h() const { return p * p_a; }
};

inline GammaFactors decompose_gamma(double p, double delta, double sigma) {
    GammaFactors f;
    f.p = p;
    f.p_a = application_probability(delta, sigma);
    // -log(1 - p_a) is softplus(delta/sigma); going through 1 - p_a loses digits as p_a -> 1
    f.m = f.p_a > 0.0 ? sigma * softplus(delta / sigma) / f.p_a : sigma;
    return f;
}

// V_e - V_0 for a job paying w
template <typename S>
S employment_value_gain(S w, S rV0, const ModelParamsT<S>& m) {
    if (!(m.rq() > S(0))) throw DomainError("employment_value_gain: r+q must be > 0");
    return (w - rV0) / m.rq();
}

// Gamma of one lottery when the seeker's reservation rule uses rate z.
inline double gamma_at(const VacancyLottery& v, double z, const ModelParams& m) {
    return gamma_closed(v.p, surplus(v.U, v.p, z, m), m.sigma);
}

// Right-hand side of the unemployment value equation evaluated at z.
double baseline_map(double z, const ModelParams& m, const VacancyDistribution& dist);

struct ValueSolve {
    double value = 0.0;
    int iterations = 0;
    double residual = 0.0;
    bool bisection = false;
};

ValueSolve solve_value_unemployment_detail(const ModelParams& m, const VacancyDistribution& dist);
double solve_value_unemployment(const ModelParams& m, const VacancyDistribution& dist);

// Mass assigned to each atom when the top share s (by score) is selected.
// Ties go to the lower atom index; the boundary atom is included fractionally
// so that the selected mass is exactly s.
std::vector<double> selection_weights(const std::vector<double>& weights, const std::vector<double>& scores,
                                      double s);

double value_with_rs_myopic(const ModelParams& m, const VacancyDistribution& dist,
                            const std::vector<double>& scores, double s, double rV0_baseline);

// Gamma of every atom evaluated at rate z (the myopic score when z = rV0).
std::vector<double> gamma_scores(const ModelParams& m, const VacancyDistribution& dist, double z);

struct BeliefEffects {
    double full = 0.0;
    double pure = 0.0;
    double info = 0.0;
    double rV0_subjective = 0.0;
    double rV0_true = 0.0;
    double rV1_myopic = 0.0;
};

// scores are indexed like truth.atoms
BeliefEffects belief_decomposition(const VacancyDistribution& subjective, const VacancyDistribution& truth,
                                   const std::vector<double>& scores, double s, const ModelParams& m);

}  // namespace wr
