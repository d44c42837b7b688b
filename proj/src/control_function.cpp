#include <cmath>
#include <sstream>

#include "wrank/errors.hpp"
#include "wrank/estimation.hpp"
#include "wrank/rng.hpp"

namespace wr {

void PairDataset::validate() const {
    const Eigen::Index n = rows();
    if (n == 0) throw InputError("pair dataset is empty");
    auto check = [&](const Eigen::MatrixXd& M, const std::vector<std::string>& names, const char* what) {
        if (M.cols() > 0 && M.rows() != n) throw InputError(std::string("pair dataset: ") + what + " row count mismatch");
        if (static_cast<Eigen::Index>(names.size()) != M.cols())
            throw InputError(std::string("pair dataset: one name per ") + what + " column");
        if (!M.allFinite()) throw InputError(std::string("pair dataset: non-finite value in ") + what);
    };
    check(W, w_names, "W");
    check(Z, z_names, "Z");
    check(T, t_names, "T");
    if (W.cols() == 0) throw InputError("pair dataset: no behavioral regressors");
    if (static_cast<Eigen::Index>(cluster.size()) != n) throw InputError("pair dataset: cluster id required on every row");
    if (!y.allFinite()) throw InputError("pair dataset: non-finite outcome");
}

PairDataset PairDataset::take_clusters(const std::vector<int>& draw, const Clusters& cl) const {
    std::vector<std::vector<Eigen::Index>> members(cl.count);
    for (Eigen::Index i = 0; i < rows(); ++i) members[cl.group[i]].push_back(i);
    Eigen::Index n = 0;
    for (int g : draw) n += static_cast<Eigen::Index>(members[g].size());
    PairDataset out;
    out.w_names = w_names;
    out.z_names = z_names;
    out.t_names = t_names;
    out.y.resize(n);
    out.W.resize(n, W.cols());
    out.Z.resize(Z.cols() > 0 ? n : 0, Z.cols());
    out.T.resize(T.cols() > 0 ? n : 0, T.cols());
    out.cluster.resize(n);
    Eigen::Index r = 0;
    for (std::size_t d = 0; d < draw.size(); ++d)
        for (Eigen::Index i : members[draw[d]]) {
            out.y[r] = y[i];
            out.W.row(r) = W.row(i);
            if (Z.cols() > 0) out.Z.row(r) = Z.row(i);
            if (T.cols() > 0) out.T.row(r) = T.row(i);
            out.cluster[r] = static_cast<std::int64_t>(d);  // repeated draws count as distinct clusters
            ++r;
        }
    return out;
}

namespace {

const std::vector<std::string> kConst{"const"};

Eigen::MatrixXd hcat(std::initializer_list<const Eigen::MatrixXd*> parts, Eigen::Index n) {
    Eigen::Index k = 0;
    for (auto* p : parts) k += p->cols();
    Eigen::MatrixXd out(n, k);
    Eigen::Index c = 0;
    for (auto* p : parts) {
        if (p->cols() == 0) continue;
        out.middleCols(c, p->cols()) = *p;
        c += p->cols();
    }
    return out;
}

std::vector<std::string> concat(std::initializer_list<const std::vector<std::string>*> parts) {
    std::vector<std::string> out;
    for (auto* p : parts) out.insert(out.end(), p->begin(), p->end());
    return out;
}

struct Stages {
    Eigen::MatrixXd Pi, v_hat, X2;
    std::vector<std::string> names2, rho_names;
};

Stages build_stages(const PairDataset& d) {
    const Eigen::Index n = d.rows();
    Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(n, 1);
    Eigen::MatrixXd Xfs = hcat({&ones, &d.T, &d.Z}, n);
    check_full_rank(Xfs, concat({&kConst, &d.t_names, &d.z_names}));
    Stages s;
    s.Pi = Xfs.colPivHouseholderQr().solve(d.W);
    s.v_hat = d.W - Xfs * s.Pi;
    s.X2 = hcat({&ones, &d.W, &d.Z, &s.v_hat}, n);
    for (const auto& w : d.w_names) s.rho_names.push_back("v_" + w);
    s.names2 = concat({&kConst, &d.w_names, &d.z_names, &s.rho_names});
    return s;
}

// Coefficients only, from the normal equations; the bootstrap replications
// do not need the pivoted QR the main fit uses.
Eigen::MatrixXd normal_solve(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y) {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(X.transpose() * X);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
        throw NumericError("bootstrap replication has a singular design");
    return ldlt.solve(X.transpose() * Y);
}

Eigen::VectorXd replicate_coef(bool lpm, const PairDataset& d) {
    const Eigen::Index n = d.rows();
    Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(n, 1);
    Eigen::MatrixXd Xfs = hcat({&ones, &d.T, &d.Z}, n);
    Eigen::MatrixXd v_hat = d.W - Xfs * normal_solve(Xfs, d.W);
    Eigen::MatrixXd X2 = hcat({&ones, &d.W, &d.Z, &v_hat}, n);
    if (lpm) return normal_solve(X2, d.y);
    std::vector<std::string> names(X2.cols(), "x");
    names[0] = "const";
    for (std::size_t c = 1; c < names.size(); ++c) names[c] += std::to_string(c);
    return fit_poisson(d.y, X2, names, d.cluster).coef;
}

enum class Second { lpm, poisson };

FitResult second_stage(Second kind, const PairDataset& d, const Stages& s) {
    if (kind == Second::lpm) return ols(d.y, s.X2, s.names2, d.cluster);
    return fit_poisson(d.y, s.X2, s.names2, d.cluster);
}

ControlFunctionFit fit_cf(Second kind, const PairDataset& d, const CfOptions& opt) {
    d.validate();
    if (d.T.cols() == 0) throw InputError("control function needs at least one excluded instrument");
    if (d.T.cols() < d.W.cols()) throw InputError("control function: fewer instruments than behavioral regressors");
    ControlFunctionFit out;
    Stages s = build_stages(d);
    out.Pi = s.Pi;
    out.v_hat = s.v_hat;
    out.theta_names = d.w_names;
    out.rho_names = s.rho_names;

    // first-stage strength per behavioral regressor
    {
        const Eigen::Index n = d.rows();
        Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(n, 1);
        Eigen::MatrixXd Xfs = hcat({&ones, &d.T, &d.Z}, n);
        auto names = concat({&kConst, &d.t_names, &d.z_names});
        for (Eigen::Index c = 0; c < d.W.cols(); ++c) {
            FitResult fs = ols(d.W.col(c), Xfs, names, d.cluster);
            WaldTest w = wald_test(fs, d.t_names);
            out.first_stage_F.push_back(w.F);
            if (w.F < 1.0) out.weak_first_stage = true;
        }
    }

    out.second = second_stage(kind, d, s);
    if (out.weak_first_stage) out.second.notes.push_back("weak first stage (F < 1)");
    out.se_naive = out.second.se;

    if (kind == Second::poisson) {
        Eigen::VectorXd idx = s.X2 * out.second.coef;
        double scale = idx.array().exp().mean();
        out.ame.resize(d.W.cols());
        for (Eigen::Index c = 0; c < d.W.cols(); ++c) out.ame[c] = out.second.coef[1 + c] * scale;
    }

    if (opt.bootstrap > 0) {
        Clusters cl = Clusters::from_ids(d.cluster);
        const Eigen::Index k = out.second.coef.size();
        std::vector<Eigen::VectorXd> draws;
        Stream rng(opt.seed, 0, hash_name("cf-bootstrap"));
        for (int b = 0; b < opt.bootstrap; ++b) {
            std::vector<int> pick(cl.count);
            for (int& g : pick) g = static_cast<int>(rng.below(static_cast<std::uint64_t>(cl.count)));
            try {
                PairDataset db = d.take_clusters(pick, cl);
                draws.push_back(replicate_coef(kind == Second::lpm, db));
            } catch (const Error&) {
                ++out.bootstrap_failed;
            }
        }
        out.bootstrap_reps = static_cast<int>(draws.size());
        if (out.bootstrap_reps >= 2) {
            Eigen::VectorXd mean = Eigen::VectorXd::Zero(k);
            for (const auto& v : draws) mean += v;
            mean /= static_cast<double>(draws.size());
            Eigen::MatrixXd V = Eigen::MatrixXd::Zero(k, k);
            for (const auto& v : draws) V += (v - mean) * (v - mean).transpose();
            V /= static_cast<double>(draws.size() - 1);
            out.second.vcov = V;
            for (Eigen::Index j = 0; j < k; ++j) {
                out.second.se[j] = std::sqrt(std::max(V(j, j), 0.0));
                out.second.z[j] = out.second.se[j] > 0 ? out.second.coef[j] / out.second.se[j] : 0.0;
                out.second.p_value[j] = out.second.se[j] > 0 ? normal_p_value(out.second.z[j]) : 1.0;
            }
            std::ostringstream os;
            os << "standard errors from " << out.bootstrap_reps << " cluster bootstrap replications";
            if (out.bootstrap_failed) os << " (" << out.bootstrap_failed << " failed)";
            out.second.notes.push_back(os.str());
        } else {
            out.second.notes.push_back("bootstrap unusable; sandwich standard errors kept");
        }
    }
    return out;
}

}  // namespace

ControlFunctionFit fit_lpm_cf(const PairDataset& d, const CfOptions& opt) { return fit_cf(Second::lpm, d, opt); }

ControlFunctionFit fit_poisson_cf(const PairDataset& d, const CfOptions& opt) {
    return fit_cf(Second::poisson, d, opt);
}

FitResult two_stage_least_squares(const PairDataset& d) {
    d.validate();
    const Eigen::Index n = d.rows();
    Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(n, 1);
    Eigen::MatrixXd X = hcat({&ones, &d.W, &d.Z}, n);
    Eigen::MatrixXd Zi = hcat({&ones, &d.T, &d.Z}, n);
    auto names = concat({&kConst, &d.w_names, &d.z_names});
    check_full_rank(Zi, concat({&kConst, &d.t_names, &d.z_names}));
    Eigen::MatrixXd Xhat = Zi * Zi.colPivHouseholderQr().solve(X);
    check_full_rank(Xhat, names);
    Eigen::MatrixXd A = Xhat.transpose() * X;
    FitResult f;
    f.names = names;
    f.n_obs = n;
    f.coef = A.colPivHouseholderQr().solve(Xhat.transpose() * d.y);
    Eigen::VectorXd u = d.y - X * f.coef;
    Clusters cl = Clusters::from_ids(d.cluster);
    f.n_clusters = cl.count;
    const Eigen::Index k = X.cols();
    Eigen::MatrixXd bread = (Xhat.transpose() * Xhat).ldlt().solve(Eigen::MatrixXd::Identity(k, k));
    Eigen::MatrixXd meat = cluster_meat(Xhat.array().colwise() * u.array(), cl);
    const double G = cl.count;
    f.vcov = (G > 1 ? G / (G - 1.0) : 1.0) * (n - 1.0) / static_cast<double>(n - k) * bread * meat * bread;
    f.vcov = 0.5 * (f.vcov + f.vcov.transpose());
    f.se = f.vcov.diagonal().cwiseMax(0.0).cwiseSqrt();
    f.z = f.coef.cwiseQuotient(f.se);
    f.p_value.resize(k);
    for (Eigen::Index j = 0; j < k; ++j) f.p_value[j] = normal_p_value(f.z[j]);
    return f;
}

}  // namespace wr
