#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "wrank/market.hpp"
#include "wrank/ranking.hpp"
#include "wrank/scorers.hpp"

namespace wr {

// How a registered scorer turns a seeker row into one score per vacancy.
//  criteria : the weighted criteria score
//  bilinear : trained bilinear score, mapped through the calibration when `calibrated`
//  signal   : logit(target) + N(0, noise_sd^2), target in {p, pa, ph, gamma, utility}
//             (gamma uses log, utility is used as is)
//  blend    : sum of weight * component score over other registered scorers
struct ScorerSpec {
    std::string name;
    std::string kind = "signal";
    std::string target = "p";
    double noise_sd = 0.0;
    bool calibrated = true;
    std::vector<std::pair<std::string, double>> components;
};

// Vacancy-side work for the bilinear scorer, shared by all seekers.
struct BilinearCache {
    std::vector<Eigen::MatrixXd> Apsi;  // per block: vacancies x latent
    const BilinearScorer* scorer = nullptr;
    static BilinearCache build(const BilinearScorer& s, const Eigen::MatrixXd& vacancy_features);
    Eigen::VectorXd scores(const Eigen::Ref<const Eigen::VectorXd>& seeker_features) const;
};

struct ScorerRegistry {
    std::vector<ScorerSpec> specs;
    std::optional<BilinearScorer> bilinear;
    CalibrationCoefficients calibration;

    int index(const std::string& name) const;  // -1 when absent
    bool needs_bilinear() const;
    void validate() const;
    // vacancies x scorers, columns ordered like specs
    Eigen::MatrixXd score_columns(const Market& m, std::size_t seeker, const SeekerRow& row,
                                  const BilinearCache* cache) const;
};

struct ArmSpec {
    std::string name;
    std::string kind = "top";  // top | mix
    std::string scorer;        // top: ranking score
    std::string p_scorer;      // mix
    std::string u_scorer;      // mix
    double fraction = 0.5;     // mix
};

struct ExperimentDesign {
    std::vector<ArmSpec> arms;
    std::vector<double> shares;
    int list_length = 10;
    int n_preselect = 15;
    double dropout = 0.0;
    double enrollment = 1.0;
    double click_offset = 2.0;  // in units of sigma
    ConsiderationCutoffs cutoffs;

    void validate(const ScorerRegistry& reg) const;
};

struct Assignment {
    std::vector<int> arm;        // per seeker
    std::vector<char> enrolled;  // per seeker
    int strata_used = 0;
    int strata_empty = 0;
};

Assignment assign_treatments(const std::vector<SeekerProfile>& seekers, const ExperimentDesign& design,
                             const StrataSpec& strata, std::uint64_t seed);

// Arm dummies (reference arm 0 omitted), one row per seeker.
Eigen::MatrixXd treatment_dummies(const Assignment& a, int n_arms);

// Pair-level interaction records, column-oriented.
struct InteractionLog {
    std::vector<std::string> arm_names;
    std::vector<std::string> score_names;
    std::vector<std::int64_t> seeker;
    std::vector<int> arm, vacancy, slot;
    std::vector<int> clicked, applied, hired;
    std::vector<int> short_list;
    std::vector<double> true_p, true_U, true_pa, true_gamma;
    std::vector<std::vector<double>> scores;  // one column per score name

    std::size_t rows() const { return seeker.size(); }
    int score_index(const std::string& name) const;
    void check_invariants() const;
};

// The displayed list for one seeker under an arm.
RankedList arm_list(const ArmSpec& arm, const ScorerRegistry& reg, const Eigen::MatrixXd& columns,
                    const ExperimentDesign& design, std::int64_t seeker, const std::vector<char>& available);

struct ExperimentRun {
    InteractionLog log;
    int short_lists = 0;
};

ExperimentRun run_experiment(const Market& m, const Assignment& a, const ExperimentDesign& design,
                             const ScorerRegistry& reg, std::uint64_t seed, int threads = 1);

struct MeasurementErrorSpec {
    std::vector<std::string> columns;
    double variance = 0.0;
    std::uint64_t seed = 0;
};

InteractionLog inject_measurement_error(InteractionLog log, const MeasurementErrorSpec& spec);

struct SpellRecord {
    int applications = 0;
    int rejections = 0;
    bool hired = false;
    double hire_time = -1.0;
    double discounted_utility = 0.0;
};

struct SearchSimOptions {
    double horizon = 200.0;
    double dt = 0.02;
};

// Discrete-time life path starting unemployed: arrivals with probability
// min(alpha0 dt, 1) per step, applications by the reservation rule at rV0,
// employment ends at rate q. Utility flows are discounted at rate r.
SpellRecord simulate_sequential_search(const VacancyDistribution& dist, const ModelParams& m, double rV0,
                                       const SearchSimOptions& opt, std::uint64_t seed, std::uint64_t spell_id = 0);

}  // namespace wr
