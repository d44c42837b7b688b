#pragma once

#include <Eigen/Dense>

namespace wr {

struct GaussLegendre {
    Eigen::VectorXd nodes;    // on [-1, 1]
    Eigen::VectorXd weights;
};

// Cached per node count; safe to call from several threads.
const GaussLegendre& gauss_legendre(int n);

// Integral of f over [a, b] with the n-node rule.
template <typename F>
double integrate(F&& f, double a, double b, int n) {
    const GaussLegendre& gl = gauss_legendre(n);
    const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += gl.weights[i] * f(mid + half * gl.nodes[i]);
    return half * s;
}

}  // namespace wr
