#pragma once

// Reference computations written independently of the library: plain loops,
// fine grids and exhaustive enumeration.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

namespace oracle {

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Composite Simpson on [a, b] with n (even) panels.
inline double simpson(const std::function<double(double)>& f, double a, double b, int n = 20000) {
    const double h = (b - a) / n;
    double s = f(a) + f(b);
    for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
    return s * h / 3.0;
}

// p * E[(delta + eps)^+] for logistic eps with scale sigma, integrating the
// survival function: E[X^+] = int_0^inf P(X > t) dt.
inline double gamma_logistic(double p, double delta, double sigma) {
    auto surv = [&](double t) { return logistic((delta - t) / sigma); };
    double hi = std::max(0.0, delta) + 60.0 * sigma;
    return p * simpson(surv, 0.0, hi, 40000);
}

// Fixed point of z = u_b + alpha0/(r+q) * sum_a w_a p_a sigma softplus((U_a - U*(p_a; z))/sigma)
// by plain bisection, written out from the model definitions.
struct Atom {
    double p, U;
};

inline double value_map(double z, double r, double q, double u_b, double k, double R, double sigma, double alpha,
                        const std::vector<Atom>& atoms, const std::vector<double>& w) {
    const double kb = (r + q) * k, Rb = (r + q) * R;
    double e = 0.0;
    for (std::size_t a = 0; a < atoms.size(); ++a) {
        double ustar = z - Rb + (kb + Rb) / atoms[a].p;
        double x = (atoms[a].U - ustar) / sigma;
        double sp = x > 30 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
        e += w[a] * atoms[a].p * sigma * sp;
    }
    return u_b + alpha / (r + q) * e;
}

inline double bisect(const std::function<double(double)>& g, double lo, double hi, int iters = 200) {
    // g decreasing with g(lo) > 0 > g(hi)
    for (int i = 0; i < iters; ++i) {
        double mid = 0.5 * (lo + hi);
        (g(mid) > 0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

// OLS coefficients from the normal equations.
inline Eigen::VectorXd ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    return (X.transpose() * X).ldlt().solve(X.transpose() * y);
}

// CR1 cluster-robust covariance for OLS, looping cluster by cluster.
inline Eigen::MatrixXd ols_cr1(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const std::vector<std::int64_t>& g) {
    Eigen::VectorXd b = ols(X, y);
    Eigen::VectorXd e = y - X * b;
    Eigen::MatrixXd bread = (X.transpose() * X).inverse();
    std::vector<std::int64_t> ids = g;
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(X.cols(), X.cols());
    for (auto id : ids) {
        Eigen::VectorXd s = Eigen::VectorXd::Zero(X.cols());
        for (Eigen::Index i = 0; i < X.rows(); ++i)
            if (g[i] == id) s += X.row(i).transpose() * e[i];
        meat += s * s.transpose();
    }
    const double G = static_cast<double>(ids.size()), N = static_cast<double>(X.rows()), K = static_cast<double>(X.cols());
    return G / (G - 1) * (N - 1) / (N - K) * bread * meat * bread;
}

}  // namespace oracle
