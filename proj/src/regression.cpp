#include <algorithm>
#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <map>
#include <sstream>

#include "wrank/errors.hpp"
#include "wrank/estimation.hpp"
#include "wrank/search_model.hpp"

namespace wr {

double normal_p_value(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

double normal_quantile(double u) {
    return boost::math::quantile(boost::math::normal_distribution<double>(), u);
}

int FitResult::index(const std::string& name) const {
    for (std::size_t k = 0; k < names.size(); ++k)
        if (names[k] == name) return static_cast<int>(k);
    throw InputError("fit has no coefficient named '" + name + "'");
}

Clusters Clusters::from_ids(const std::vector<std::int64_t>& ids) {
    std::vector<std::int64_t> u(ids);
    std::sort(u.begin(), u.end());
    u.erase(std::unique(u.begin(), u.end()), u.end());
    Clusters c;
    c.count = static_cast<int>(u.size());
    c.group.resize(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i)
        c.group[i] = static_cast<int>(std::lower_bound(u.begin(), u.end(), ids[i]) - u.begin());
    return c;
}

Eigen::MatrixXd cluster_meat(const Eigen::MatrixXd& scores, const Clusters& cl) {
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(cl.count, scores.cols());
    for (Eigen::Index i = 0; i < scores.rows(); ++i) sums.row(cl.group[i]) += scores.row(i);
    return sums.transpose() * sums;
}

void check_full_rank(const Eigen::MatrixXd& X, const std::vector<std::string>& names) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    qr.setThreshold(1e-10);
    if (qr.rank() == X.cols()) return;
    std::ostringstream os;
    os << "rank-deficient design (rank " << qr.rank() << " of " << X.cols() << "); dependent columns:";
    for (Eigen::Index k = qr.rank(); k < X.cols(); ++k) {
        int c = qr.colsPermutation().indices()[k];
        os << ' ' << (c < static_cast<int>(names.size()) ? names[c] : std::to_string(c));
    }
    throw NumericError(os.str());
}

namespace {

std::vector<std::int64_t> default_clusters(const std::vector<std::int64_t>& c, Eigen::Index n) {
    if (!c.empty()) {
        if (static_cast<Eigen::Index>(c.size()) != n) throw InputError("one cluster id per row required");
        return c;
    }
    std::vector<std::int64_t> out(n);
    for (Eigen::Index i = 0; i < n; ++i) out[i] = i;
    return out;
}

void finish_inference(FitResult& f) {
    const Eigen::Index k = f.coef.size();
    f.vcov = 0.5 * (f.vcov + f.vcov.transpose());
    f.se.resize(k);
    f.z.resize(k);
    f.p_value.resize(k);
    for (Eigen::Index j = 0; j < k; ++j) {
        f.se[j] = std::sqrt(std::max(f.vcov(j, j), 0.0));
        f.z[j] = f.se[j] > 0 ? f.coef[j] / f.se[j] : 0.0;
        f.p_value[j] = f.se[j] > 0 ? normal_p_value(f.z[j]) : 1.0;
    }
}

}  // namespace

WaldTest wald_test(const FitResult& fit, const std::vector<std::string>& subset) {
    WaldTest w;
    w.names = subset;
    w.df1 = static_cast<int>(subset.size());
    w.df2 = static_cast<int>(std::max<Eigen::Index>(fit.n_clusters - 1, 1));
    if (subset.empty()) return w;
    std::vector<int> idx;
    for (const auto& n : subset) idx.push_back(fit.index(n));
    const int q = static_cast<int>(idx.size());
    Eigen::VectorXd b(q);
    Eigen::MatrixXd V(q, q);
    for (int a = 0; a < q; ++a) {
        b[a] = fit.coef[idx[a]];
        for (int c = 0; c < q; ++c) V(a, c) = fit.vcov(idx[a], idx[c]);
    }
    if (b.cwiseAbs().maxCoeff() < 1e-14) return w;
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(V);
    cod.setThreshold(1e-12);
    if (cod.rank() == 0) return w;
    w.F = std::max(0.0, b.dot(cod.solve(b)) / q);
    boost::math::fisher_f_distribution<double> dist(w.df1, w.df2);
    w.p_value = w.F > 0 ? boost::math::cdf(boost::math::complement(dist, w.F)) : 1.0;
    return w;
}

Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& X) {
    Eigen::MatrixXd out(X.rows(), X.cols() + 1);
    out.col(0).setOnes();
    out.rightCols(X.cols()) = X;
    return out;
}

std::vector<std::string> with_intercept(const std::vector<std::string>& names) {
    std::vector<std::string> out{"const"};
    out.insert(out.end(), names.begin(), names.end());
    return out;
}

FitResult ols(const Eigen::VectorXd& y, const Eigen::MatrixXd& X, const std::vector<std::string>& names,
              const std::vector<std::int64_t>& clusters) {
    const Eigen::Index n = X.rows(), k = X.cols();
    if (y.size() != n) throw InputError("ols: outcome length does not match design");
    if (static_cast<Eigen::Index>(names.size()) != k) throw InputError("ols: one name per column required");
    if (n <= k) throw InputError("ols: fewer rows than columns");
    check_full_rank(X, names);
    Clusters cl = Clusters::from_ids(default_clusters(clusters, n));
    FitResult f;
    f.names = names;
    f.n_obs = n;
    f.n_clusters = cl.count;
    Eigen::MatrixXd XtX = X.transpose() * X;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(XtX);
    f.coef = ldlt.solve(X.transpose() * y);
    Eigen::VectorXd u = y - X * f.coef;
    Eigen::MatrixXd bread = ldlt.solve(Eigen::MatrixXd::Identity(k, k));
    Eigen::MatrixXd meat = cluster_meat(X.array().colwise() * u.array(), cl);
    const double G = cl.count;
    double adj = (G > 1 ? G / (G - 1.0) : 1.0) * (n - 1.0) / static_cast<double>(n - k);
    f.vcov = adj * bread * meat * bread;
    finish_inference(f);
    return f;
}

FitResult fit_reduced_form(const Eigen::VectorXd& y, const std::vector<int>& arm,
                           const std::vector<std::string>& arm_names, const std::vector<int>& slot,
                           const std::vector<std::int64_t>& clusters, bool slot_dummies) {
    const Eigen::Index n = y.size();
    const int A = static_cast<int>(arm_names.size());
    if (A < 2) throw InputError("reduced form needs at least two arms");
    if (static_cast<Eigen::Index>(arm.size()) != n) throw InputError("reduced form: one arm per row required");
    int max_slot = 1;
    if (slot_dummies) {
        if (static_cast<Eigen::Index>(slot.size()) != n) throw InputError("reduced form: one slot per row required");
        for (int s : slot) max_slot = std::max(max_slot, s);
    }
    std::vector<std::string> names{"const"};
    for (int a = 1; a < A; ++a) names.push_back("arm_" + arm_names[a]);
    std::vector<int> slot_levels;
    if (slot_dummies) {
        std::vector<char> seen(max_slot + 1, 0);
        for (int s : slot) seen[s] = 1;
        for (int s = 2; s <= max_slot; ++s)
            if (seen[s]) {
                slot_levels.push_back(s);
                names.push_back("slot_" + std::to_string(s));
            }
    }
    Eigen::MatrixXd X = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(names.size()));
    X.col(0).setOnes();
    for (Eigen::Index i = 0; i < n; ++i) {
        if (arm[i] < 0 || arm[i] >= A) throw InputError("reduced form: arm index out of range");
        if (arm[i] > 0) X(i, arm[i]) = 1.0;
        if (slot_dummies && slot[i] > 1) {
            auto it = std::find(slot_levels.begin(), slot_levels.end(), slot[i]);
            X(i, A + (it - slot_levels.begin())) = 1.0;
        }
    }
    FitResult f = ols(y, X, names, clusters);
    std::vector<std::string> arm_cols(names.begin() + 1, names.begin() + A);
    f.joint = wald_test(f, arm_cols);
    return f;
}

namespace {

enum class Family { logit, poisson };

double glm_loglik(Family fam, const Eigen::VectorXd& y, const Eigen::VectorXd& eta) {
    double ll = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        if (fam == Family::logit) ll += y[i] * eta[i] - softplus(eta[i]);
        else ll += y[i] * eta[i] - std::exp(eta[i]) - std::lgamma(y[i] + 1.0);
    }
    return ll;
}

FitResult fit_glm(Family fam, const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
                  const std::vector<std::string>& names, const std::vector<std::int64_t>& clusters,
                  const NewtonOptions& opt) {
    const Eigen::Index n = X.rows(), k = X.cols();
    const char* label = fam == Family::logit ? "logit" : "poisson";
    if (y.size() != n) throw InputError(std::string(label) + ": outcome length does not match design");
    if (static_cast<Eigen::Index>(names.size()) != k) throw InputError(std::string(label) + ": one name per column");
    if (n == 0) throw InputError(std::string(label) + ": no rows");
    const double ybar = y.mean();
    if (fam == Family::logit) {
        for (Eigen::Index i = 0; i < n; ++i)
            if (y[i] != 0.0 && y[i] != 1.0) throw InputError("logit: outcome must be binary");
        if (ybar == 0.0 || ybar == 1.0) throw DegenerateError("logit: outcome has no variation");
    } else {
        if (y.minCoeff() < 0) throw InputError("poisson: negative outcome");
        if (ybar == 0.0) throw DegenerateError("poisson: all-zero outcome");
    }
    check_full_rank(X, names);
    Clusters cl = Clusters::from_ids(default_clusters(clusters, n));

    Eigen::VectorXd theta = Eigen::VectorXd::Zero(k);
    if (!names.empty() && names[0] == "const")
        theta[0] = fam == Family::logit ? std::log(ybar / (1.0 - ybar)) : std::log(ybar);
    Eigen::VectorXd scale(k);  // column sd, 1 for constants
    for (Eigen::Index c = 0; c < k; ++c) {
        double sd = std::sqrt((X.col(c).array() - X.col(c).mean()).square().mean());
        scale[c] = sd > 0 ? sd : 1.0;
    }
    Eigen::VectorXd eta = X * theta, mu(n), w(n);
    double ll = glm_loglik(fam, y, eta);
    FitResult f;
    f.names = names;
    f.n_obs = n;
    f.n_clusters = cl.count;
    f.conv.converged = false;
    f.conv.status = "iteration limit";
    Eigen::MatrixXd H;
    for (int it = 0; it <= opt.max_iter; ++it) {
        for (Eigen::Index i = 0; i < n; ++i) {
            if (fam == Family::logit) {
                mu[i] = logistic_cdf(eta[i]);
                w[i] = mu[i] * (1.0 - mu[i]);
            } else {
                mu[i] = std::exp(eta[i]);
                w[i] = mu[i];
            }
        }
        Eigen::VectorXd grad = X.transpose() * (y - mu);
        H = X.transpose() * (X.array().colwise() * w.array()).matrix();
        f.conv.iterations = it;
        f.conv.grad_norm = grad.cwiseAbs().maxCoeff() / static_cast<double>(n);
        Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
        const bool solvable = ldlt.info() == Eigen::Success && ldlt.isPositive();
        Eigen::VectorXd step = solvable ? Eigen::VectorXd(ldlt.solve(grad)) : Eigen::VectorXd::Zero(k);
        f.conv.step_norm = solvable ? step.cwiseProduct(scale).cwiseAbs().maxCoeff() : 0.0;
        if (f.conv.grad_norm < opt.tol && solvable && f.conv.step_norm < opt.step_tol) {
            f.conv.converged = true;
            f.conv.status = "ok";
            break;
        }
        if (it == opt.max_iter) break;
        if (!solvable) {
            f.conv.status = "singular information matrix";
            break;
        }
        double t = 1.0, ll_new = ll;
        Eigen::VectorXd cand, eta_new;
        bool moved = false;
        for (int h = 0; h < 60; ++h) {
            cand = theta + t * step;
            eta_new = X * cand;
            ll_new = glm_loglik(fam, y, eta_new);
            if (std::isfinite(ll_new) && ll_new >= ll - 1e-12 * std::abs(ll)) {
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if (!moved) {
            f.conv.status = "step halving failed";
            break;
        }
        bool rising = ll_new > ll;
        theta = cand;
        eta = eta_new;
        ll = ll_new;
        if (rising && theta.cwiseProduct(scale).cwiseAbs().maxCoeff() > opt.separation_bound) {
            Eigen::Index at;
            theta.cwiseProduct(scale).cwiseAbs().maxCoeff(&at);
            throw SeparationError(std::string(label) + ": coefficient on '" + names[at] +
                                  "' diverges (perfect or quasi-perfect separation)");
        }
    }
    if (!f.conv.converged && f.conv.status == "iteration limit" && f.conv.grad_norm < opt.tol) {
        // the score is flat but Newton keeps moving: the optimum is at infinity
        Eigen::Index at;
        Eigen::VectorXd last = H.ldlt().solve(X.transpose() * (y - mu));
        last.cwiseProduct(scale).cwiseAbs().maxCoeff(&at);
        throw SeparationError(std::string(label) + ": coefficient on '" + names[at] +
                              "' diverges (perfect or quasi-perfect separation)");
    }
    if (!f.conv.converged) {
        std::ostringstream os;
        os << label << " did not converge (" << f.conv.status << "), gradient norm " << f.conv.grad_norm;
        throw NumericError(os.str());
    }
    f.coef = theta;
    f.loglik = ll;
    Eigen::MatrixXd bread = H.ldlt().solve(Eigen::MatrixXd::Identity(k, k));
    Eigen::MatrixXd meat = cluster_meat(X.array().colwise() * (y - mu).array(), cl);
    const double G = cl.count;
    f.vcov = (G > 1 ? G / (G - 1.0) : 1.0) * bread * meat * bread;
    finish_inference(f);
    return f;
}

}  // namespace

FitResult fit_logit(const Eigen::VectorXd& y, const Eigen::MatrixXd& X, const std::vector<std::string>& names,
                    const std::vector<std::int64_t>& clusters, const NewtonOptions& opt) {
    return fit_glm(Family::logit, y, X, names, clusters, opt);
}

FitResult fit_poisson(const Eigen::VectorXd& y, const Eigen::MatrixXd& X, const std::vector<std::string>& names,
                      const std::vector<std::int64_t>& clusters, const NewtonOptions& opt) {
    return fit_glm(Family::poisson, y, X, names, clusters, opt);
}

}  // namespace wr
