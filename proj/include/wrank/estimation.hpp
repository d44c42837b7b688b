#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "wrank/scorers.hpp"

namespace wr {

struct Convergence {
    int iterations = 0;
    double grad_norm = 0.0;  // max-norm of the per-observation mean score
    double step_norm = 0.0;  // last Newton step, column-sd units
    bool converged = true;
    std::string status = "ok";
};

struct WaldTest {
    std::vector<std::string> names;
    double F = 0.0;
    double p_value = 1.0;
    int df1 = 0;
    int df2 = 0;
};

struct FitResult {
    std::vector<std::string> names;
    Eigen::VectorXd coef, se, z, p_value;
    Eigen::MatrixXd vcov;  // cluster-robust
    std::optional<WaldTest> joint;
    Eigen::Index n_obs = 0;
    Eigen::Index n_clusters = 0;
    Convergence conv;
    double loglik = std::numeric_limits<double>::quiet_NaN();
    std::vector<std::string> notes;

    int index(const std::string& name) const;  // throws when absent
    double coef_of(const std::string& name) const { return coef[index(name)]; }
    double se_of(const std::string& name) const { return se[index(name)]; }
};

// Cluster ids mapped to 0..G-1 in order of first appearance after sorting.
struct Clusters {
    std::vector<int> group;
    int count = 0;
    static Clusters from_ids(const std::vector<std::int64_t>& ids);
};

// sum_g (sum_{i in g} s_i)(sum_{i in g} s_i)' for per-row score contributions s (rows x k)
Eigen::MatrixXd cluster_meat(const Eigen::MatrixXd& scores, const Clusters& cl);

// Throws NumericError naming the columns that make X rank deficient.
void check_full_rank(const Eigen::MatrixXd& X, const std::vector<std::string>& names);

// Joint Wald F over the named coefficients; denominator df = clusters - 1.
WaldTest wald_test(const FitResult& fit, const std::vector<std::string>& subset);

FitResult ols(const Eigen::VectorXd& y, const Eigen::MatrixXd& X, const std::vector<std::string>& names,
              const std::vector<std::int64_t>& clusters);

// [1, X] with "const" as the first name.
Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& X);
std::vector<std::string> with_intercept(const std::vector<std::string>& names);

// Outcome on arm dummies (arm 0 omitted) and slot dummies (slot 1 omitted),
// seeker-clustered, with the joint F over the arm coefficients.
FitResult fit_reduced_form(const Eigen::VectorXd& y, const std::vector<int>& arm, const std::vector<std::string>& arm_names,
                           const std::vector<int>& slot, const std::vector<std::int64_t>& clusters,
                           bool slot_dummies = true);

struct NewtonOptions {
    int max_iter = 200;
    double tol = 1e-8;
    // converged needs the Newton step, in column-sd units, below this too;
    // under separation the gradient vanishes but the steps do not
    double step_tol = 1e-6;
    // |coef| * sd(column) beyond this while the likelihood still rises
    double separation_bound = 50.0;
};

// Binary logit MLE; X should carry its own intercept column.
FitResult fit_logit(const Eigen::VectorXd& y, const Eigen::MatrixXd& X, const std::vector<std::string>& names,
                    const std::vector<std::int64_t>& clusters, const NewtonOptions& opt = {});

// Poisson MLE (log link).
FitResult fit_poisson(const Eigen::VectorXd& y, const Eigen::MatrixXd& X, const std::vector<std::string>& names,
                      const std::vector<std::int64_t>& clusters, const NewtonOptions& opt = {});

// Pair-level data for the application models. An intercept is always added.
struct PairDataset {
    Eigen::VectorXd y;
    Eigen::MatrixXd W;  // behavioral regressors, possibly mismeasured
    std::vector<std::string> w_names;
    Eigen::MatrixXd Z;  // exogenous controls
    std::vector<std::string> z_names;
    Eigen::MatrixXd T;  // excluded instruments
    std::vector<std::string> t_names;
    std::vector<std::int64_t> cluster;

    Eigen::Index rows() const { return y.size(); }
    void validate() const;
    PairDataset take_clusters(const std::vector<int>& cluster_draw, const Clusters& cl) const;
};

struct ControlFunctionFit {
    Eigen::MatrixXd Pi;     // first stage, (1 + T + Z) x W
    Eigen::MatrixXd v_hat;  // first-stage residuals
    std::vector<double> first_stage_F;
    bool weak_first_stage = false;
    FitResult second;            // coefficients on const, W, Z, v_hat
    Eigen::VectorXd se_naive;    // second-stage sandwich, ignoring generated regressors
    int bootstrap_reps = 0;      // successful replications; se above is bootstrap when > 0
    int bootstrap_failed = 0;
    Eigen::VectorXd ame;         // Poisson only: theta_j * mean(exp(index))
    std::vector<std::string> theta_names, rho_names;
};

struct CfOptions {
    int bootstrap = 200;
    std::uint64_t seed = 17;
};

ControlFunctionFit fit_lpm_cf(const PairDataset& d, const CfOptions& opt = {});
ControlFunctionFit fit_poisson_cf(const PairDataset& d, const CfOptions& opt = {});

// 2SLS of y on [1, W, Z] with instruments [1, T, Z], cluster-robust covariance.
FitResult two_stage_least_squares(const PairDataset& d);

// Conditional (fixed-effect) logit. Groups with no within-group variation in
// the outcome are dropped and counted in notes. X carries no intercept.
FitResult fit_conditional_logit_fe(const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
                                   const std::vector<std::string>& names, const std::vector<std::int64_t>& groups,
                                   int max_group = 20, const NewtonOptions& opt = {});

struct ApplicationRecord {
    double score = 0.0;
    int hired = 0;
    int vacancy_rank = 1;  // rank of the seeker among the vacancy's applicants
};

enum class RankMode { none, application, two_sided };
RankMode parse_rank_mode(const std::string& s);

struct HazardFit {
    FitResult fit;
    double intercept = 0.0;
    double slope = 0.0;
    std::vector<double> alpha_js;  // application-rank effects, rank 1 pinned to 0
    std::vector<double> alpha_v;   // vacancy-side rank effects, rank 1 pinned to 0
    double loglik = 0.0;
    double aic = 0.0;
    int rows = 0;
    std::vector<std::string> notes;
    CalibrationCoefficients calibration() const { return {intercept, slope}; }
};

// Each sequence is one seeker's applications in chronological order. Rows after
// the first hire are not at risk and are ignored; ranks above max_rank pool.
HazardFit fit_hazard_calibration(const std::vector<std::vector<ApplicationRecord>>& sequences, RankMode mode,
                                 int max_rank = 10);

// Structural parameters implied by the application logit F(alpha U - beta/p + gamma).
struct StructuralBundle {
    double alpha = 0.0, beta = 0.0, gamma = 0.0;
    double sigma = 0.0;   // 1 / alpha
    double kr_bar = 0.0;  // beta / alpha
    bool constrained = false;

    double delta_hat(double p, double U) const;
    double gamma_hat(double p, double U) const;
};

// Unconstrained regressors: const, U, inv_p. Constrained (beta = gamma): U, one_minus_inv_p.
FitResult fit_structural_logit(const Eigen::VectorXd& applied, const Eigen::VectorXd& U, const Eigen::VectorXd& p,
                               const std::vector<std::int64_t>& clusters, bool constrained = false);
StructuralBundle recover_structural(const FitResult& fit);

// Two-sided normal p-value and the normal quantile used for CIs.
double normal_p_value(double z);
double normal_quantile(double u);

}  // namespace wr
