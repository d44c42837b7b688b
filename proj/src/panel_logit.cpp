#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include "wrank/errors.hpp"
#include "wrank/estimation.hpp"

namespace wr {

namespace {

struct Group {
    std::vector<Eigen::Index> rows;
    int successes = 0;
};

// Log conditional likelihood of one group, with its score and Hessian. The
// normaliser sums exp(x'theta) over all subsets with the observed number of
// successes; it is built by recursion over rows instead of enumeration.
double group_terms(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Group& g, const Eigen::VectorXd& theta,
                   Eigen::VectorXd* score, Eigen::MatrixXd* hess) {
    const Eigen::Index K = X.cols();
    const int s = g.successes;
    const int n = static_cast<int>(g.rows.size());
    std::vector<double> idx(n);
    double shift = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) {
        idx[i] = X.row(g.rows[i]).dot(theta);
        shift = std::max(shift, idx[i]);
    }
    std::vector<double> f(s + 1, 0.0);
    std::vector<Eigen::VectorXd> gr(s + 1, Eigen::VectorXd::Zero(K));
    std::vector<Eigen::MatrixXd> H;
    if (hess) H.assign(s + 1, Eigen::MatrixXd::Zero(K, K));
    f[0] = 1.0;
    for (int i = 0; i < n; ++i) {
        const double e = std::exp(idx[i] - shift);
        Eigen::VectorXd x = X.row(g.rows[i]).transpose();
        for (int c = std::min(i + 1, s); c >= 1; --c) {
            if (hess)
                H[c] += e * (H[c - 1] + gr[c - 1] * x.transpose() + x * gr[c - 1].transpose() +
                             f[c - 1] * x * x.transpose());
            gr[c] += e * (gr[c - 1] + f[c - 1] * x);
            f[c] += e * f[c - 1];
        }
    }
    double obs = 0.0;
    Eigen::VectorXd xsum = Eigen::VectorXd::Zero(K);
    for (int i = 0; i < n; ++i)
        if (y[g.rows[i]] > 0.5) {
            obs += idx[i];
            xsum += X.row(g.rows[i]).transpose();
        }
    const double ll = obs - (std::log(f[s]) + s * shift);
    Eigen::VectorXd mean = gr[s] / f[s];
    if (score) *score = xsum - mean;
    if (hess) *hess = H[s] / f[s] - mean * mean.transpose();  // conditional covariance of sum x
    return ll;
}

}  // namespace

FitResult fit_conditional_logit_fe(const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
                                   const std::vector<std::string>& names, const std::vector<std::int64_t>& groups,
                                   int max_group, const NewtonOptions& opt) {
    const Eigen::Index n = X.rows(), K = X.cols();
    if (y.size() != n || static_cast<Eigen::Index>(groups.size()) != n)
        throw InputError("conditional logit: outcome, design and groups must have equal length");
    if (static_cast<Eigen::Index>(names.size()) != K) throw InputError("conditional logit: one name per column");
    for (Eigen::Index i = 0; i < n; ++i)
        if (y[i] != 0.0 && y[i] != 1.0) throw InputError("conditional logit: outcome must be binary");

    std::map<std::int64_t, Group> by_id;
    for (Eigen::Index i = 0; i < n; ++i) {
        Group& g = by_id[groups[i]];
        g.rows.push_back(i);
        if (y[i] > 0.5) ++g.successes;
    }
    std::vector<Group> movers;
    int dropped = 0;
    for (auto& [id, g] : by_id) {
        if (max_group > 0 && static_cast<int>(g.rows.size()) > max_group) {
            std::ostringstream os;
            os << "conditional logit: group " << id << " has " << g.rows.size() << " rows (limit " << max_group << ")";
            throw InputError(os.str());
        }
        if (g.successes == 0 || g.successes == static_cast<int>(g.rows.size())) ++dropped;
        else movers.push_back(std::move(g));
    }
    if (movers.empty()) throw DegenerateError("conditional logit: no group has within-group outcome variation");

    Eigen::Index used = 0;
    for (const auto& g : movers) used += static_cast<Eigen::Index>(g.rows.size());
    {
        Eigen::MatrixXd Xm(used, K);
        Eigen::Index r = 0;
        for (const auto& g : movers) {
            Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(K);
            for (auto i : g.rows) mean += X.row(i);
            mean /= static_cast<double>(g.rows.size());
            for (auto i : g.rows) Xm.row(r++) = X.row(i) - mean;
        }
        check_full_rank(Xm, names);  // within-group variation is what identifies theta
    }

    auto total = [&](const Eigen::VectorXd& th, Eigen::VectorXd* grad, Eigen::MatrixXd* info) {
        double ll = 0.0;
        if (grad) grad->setZero(K);
        if (info) info->setZero(K, K);
        Eigen::VectorXd sg;
        Eigen::MatrixXd hg;
        for (const auto& g : movers) {
            ll += group_terms(X, y, g, th, grad ? &sg : nullptr, info ? &hg : nullptr);
            if (grad) *grad += sg;
            if (info) *info += hg;
        }
        return ll;
    };

    FitResult f;
    f.names = names;
    f.n_obs = used;
    f.n_clusters = static_cast<Eigen::Index>(movers.size());
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(K), grad;
    Eigen::MatrixXd info;
    double ll = total(theta, nullptr, nullptr);
    f.conv.converged = false;
    f.conv.status = "iteration limit";
    for (int it = 0; it <= opt.max_iter; ++it) {
        total(theta, &grad, &info);
        f.conv.iterations = it;
        f.conv.grad_norm = grad.cwiseAbs().maxCoeff() / static_cast<double>(used);
        if (f.conv.grad_norm < opt.tol) {
            f.conv.converged = true;
            f.conv.status = "ok";
            break;
        }
        if (it == opt.max_iter) break;
        Eigen::VectorXd step = info.ldlt().solve(grad);
        double t = 1.0, ll_new = ll;
        Eigen::VectorXd cand;
        bool moved = false;
        for (int h = 0; h < 60; ++h) {
            cand = theta + t * step;
            ll_new = total(cand, nullptr, nullptr);
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
        ll = ll_new;
        if (rising && theta.cwiseAbs().maxCoeff() > opt.separation_bound)
            throw SeparationError("conditional logit: coefficients diverge (separation within groups)");
    }
    if (!f.conv.converged) {
        std::ostringstream os;
        os << "conditional logit did not converge (" << f.conv.status << "), gradient norm " << f.conv.grad_norm;
        throw NumericError(os.str());
    }
    f.coef = theta;
    f.loglik = ll;

    Eigen::MatrixXd scores(movers.size(), K);
    for (std::size_t gi = 0; gi < movers.size(); ++gi) {
        Eigen::VectorXd sg;
        group_terms(X, y, movers[gi], theta, &sg, nullptr);
        scores.row(gi) = sg.transpose();
    }
    Clusters cl;
    cl.count = static_cast<int>(movers.size());
    cl.group.resize(movers.size());
    for (std::size_t gi = 0; gi < movers.size(); ++gi) cl.group[gi] = static_cast<int>(gi);
    Eigen::MatrixXd bread = info.ldlt().solve(Eigen::MatrixXd::Identity(K, K));
    const double G = cl.count;
    f.vcov = (G > 1 ? G / (G - 1.0) : 1.0) * bread * cluster_meat(scores, cl) * bread;
    f.vcov = 0.5 * (f.vcov + f.vcov.transpose());
    f.se = f.vcov.diagonal().cwiseMax(0.0).cwiseSqrt();
    f.z.resize(K);
    f.p_value.resize(K);
    for (Eigen::Index j = 0; j < K; ++j) {
        f.z[j] = f.se[j] > 0 ? f.coef[j] / f.se[j] : 0.0;
        f.p_value[j] = f.se[j] > 0 ? normal_p_value(f.z[j]) : 1.0;
    }
    f.notes.push_back(std::to_string(dropped) + " groups without outcome variation dropped");
    return f;
}

}  // namespace wr
