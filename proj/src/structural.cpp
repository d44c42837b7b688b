#include "wrank/errors.hpp"
#include "wrank/estimation.hpp"
#include "wrank/search_model.hpp"

namespace wr {

FitResult fit_structural_logit(const Eigen::VectorXd& applied, const Eigen::VectorXd& U, const Eigen::VectorXd& p,
                               const std::vector<std::int64_t>& clusters, bool constrained) {
    const Eigen::Index n = applied.size();
    if (U.size() != n || p.size() != n) throw InputError("structural logit: columns must have equal length");
    if (p.minCoeff() <= 0.0) throw InputError("structural logit: hiring probabilities must be positive");
    Eigen::VectorXd inv_p = p.cwiseInverse();
    if (constrained) {
        Eigen::MatrixXd X(n, 2);
        X.col(0) = U;
        X.col(1) = Eigen::VectorXd::Ones(n) - inv_p;
        return fit_logit(applied, X, {"U", "one_minus_inv_p"}, clusters);
    }
    Eigen::MatrixXd X(n, 3);
    X.col(0).setOnes();
    X.col(1) = U;
    X.col(2) = inv_p;
    return fit_logit(applied, X, {"const", "U", "inv_p"}, clusters);
}

StructuralBundle recover_structural(const FitResult& fit) {
    StructuralBundle b;
    b.alpha = fit.coef_of("U");
    bool constrained = false;
    for (const auto& n : fit.names) constrained = constrained || n == "one_minus_inv_p";
    if (constrained) {
        b.beta = fit.coef_of("one_minus_inv_p");
        b.gamma = b.beta;
        b.constrained = true;
    } else {
        b.beta = -fit.coef_of("inv_p");
        b.gamma = fit.coef_of("const");
    }
    if (!(b.alpha > 0.0))
        throw DomainError("structural recovery: utility coefficient must be positive, got " + std::to_string(b.alpha));
    b.sigma = 1.0 / b.alpha;
    b.kr_bar = b.beta / b.alpha;
    return b;
}

double StructuralBundle::delta_hat(double p, double U) const { return U - kr_bar / p + gamma / alpha; }

double StructuralBundle::gamma_hat(double p, double U) const {
    return p * softplus(alpha * U + gamma - beta / p) / alpha;
}

}  // namespace wr
