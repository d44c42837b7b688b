#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "wrank/estimation.hpp"
#include "wrank/experiment.hpp"

namespace wr {

// Column-wise z-scoring with the transform kept for later use.
struct Standardizer {
    std::vector<std::string> names;
    std::vector<double> mean, sd;

    double apply(std::size_t c, double raw) const { return (raw - mean[c]) / sd[c]; }
};

struct WelfareOptions {
    std::vector<std::string> score_columns;  // empty: every score column in the log
    bool slot_controls = true;
    int list_length = 10;
    double sigma_scale = 1.0;  // 1: unit-scale normalization; else multiply the welfare score
    int min_rows = 30;
};

// A fitted logit on standardized scores. Controls enter the fit but are held
// at their estimation-sample means for prediction, so displayed and pool rows
// are scored the same way.
struct ProbabilityModel {
    FitResult fit;
    Standardizer z;
    std::vector<int> log_columns;  // indices into InteractionLog::scores, aligned with z.names
    std::vector<int> active;       // standardized columns with nonzero spread, in fit order
    double intercept = 0.0;        // includes the mean control contribution
    Eigen::VectorXd slopes;        // one per z column; zero for inactive ones
    std::vector<std::string> notes;

    // raw: one value per z column
    template <typename Raw>
    double index(const Raw& raw) const {
        double s = intercept;
        for (std::size_t c = 0; c < z.names.size(); ++c)
            if (slopes[c] != 0.0) s += slopes[c] * z.apply(c, static_cast<double>(raw[c]));
        return s;
    }
};

// Mean and sd of each selected score column over rows with mask != 0.
Standardizer standardize_scores(const InteractionLog& log, const std::vector<char>& mask,
                                const std::vector<std::string>& columns);

// Step 1: hire on applied rows. Step 2: application on all rows. `mask` picks
// the estimation sample.
ProbabilityModel fit_hire_given_apply(const InteractionLog& log, const std::vector<char>& mask,
                                      const Standardizer& z, const WelfareOptions& opt);
ProbabilityModel fit_apply(const InteractionLog& log, const std::vector<char>& mask, const Standardizer& z,
                           const WelfareOptions& opt);

// p * (-log(1 - p_a)); unit shock scale.
double gamma_hat(double p_hat, double pa_hat);

struct OptimalSet {
    std::vector<int> vacancies;  // best first
    std::vector<double> gamma;
    bool short_list = false;
};

// Top-k of a pool by welfare score, ties to the lower index.
OptimalSet optimal_set(const std::vector<double>& pool_gamma, int k);

// Per displayed item, the gap to the matching order statistic of the optimal
// set: displayed items sorted by welfare score, paired rank by rank.
std::vector<double> optimal_gaps(std::vector<double> displayed_gamma, const OptimalSet& best);

// Full-pool raw scores per seeker, kept in single precision.
struct PoolScores {
    std::vector<std::string> names;
    std::unordered_map<std::int64_t, std::size_t> index;
    std::vector<Eigen::MatrixXf> columns;  // vacancies x names

    const Eigen::MatrixXf& of(std::int64_t seeker) const;
};

PoolScores build_pool_scores(const Market& m, const ScorerRegistry& reg, const std::vector<std::int64_t>& seekers,
                             const std::vector<std::string>& names, int threads);

struct SplitSpec {
    int splits = 50;
    double fraction = 0.5;
    int bootstrap = 1000;
    std::uint64_t seed = 2024;
    int max_resample = 100;

    void validate() const;
};

enum Metric { metric_p = 0, metric_pa, metric_ph, metric_gamma, metric_gap, metric_count };
const char* metric_name(int metric);

struct ArmMetric {
    double estimate = 0.0;
    double ci95_low = 0.0, ci95_high = 0.0;
    double ci99_low = 0.0, ci99_high = 0.0;
};

struct SplitOutcome {
    // [arm][metric], the last arm is the welfare-optimal pseudo-arm
    std::vector<std::array<ArmMetric, metric_count>> arms;
    std::vector<char> zero_applications;  // per real arm, in the evaluation half
    double identity_error = 0.0;          // max |p_h - p * p_a|
};

struct CounterfactualList {
    std::int64_t seeker = 0;
    std::vector<int> vacancies;
    std::vector<double> gamma;
};

struct WelfareEstimates {
    std::vector<std::string> arms;  // real arms then "gamma_optimal"
    std::vector<std::array<ArmMetric, metric_count>> median;
    std::vector<SplitOutcome> per_split;
    int resampled = 0;
    int zero_application_flags = 0;
    double identity_error = 0.0;
    ProbabilityModel first_hire, first_apply;  // from split 0
    std::vector<CounterfactualList> counterfactual;  // split 0 evaluation half
};

WelfareEstimates evaluate_arms(const InteractionLog& log, const PoolScores& pool, const SplitSpec& split,
                               const WelfareOptions& opt, int threads = 1);

// Ground-truth means per arm of true p, p_a, p_h and Gamma on displayed rows.
std::vector<std::array<double, 4>> true_arm_means(const InteractionLog& log);

}  // namespace wr
