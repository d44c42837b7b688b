#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "wrank/scorers.hpp"
#include "wrank/search_model.hpp"

namespace wr {

struct StrataSpec {
    int occupation = 14;
    int support = 3;
    int location = 12;
};

// Latent structure of the synthetic market.
//  criteria fit:  c_k = exp(-(a_ik - b_jk)^2 / 2), u = sum_k w_k c_k
//  utility:       U = u_b + c_i + utility_offset + utility_loading * z(u) + utility_noise * xi
//  hiring:        logit p = hire_intercept + hire_loading * (rho z(u) + sqrt(1-rho^2) h) + hire_noise * eta
// with h a planted block-bilinear form in the skill features, scaled to unit variance.
struct MarketSpec {
    int n_seekers = 1000;
    int n_vacancies = 200;
    std::vector<int> skill_blocks{2, 2, 2};  // geography, skills, other
    double utility_offset = -2.3;
    double utility_loading = 1.0;
    double utility_noise = 1.0;
    double individual_effect_sd = 0.3;
    double hire_intercept = -2.5;
    double hire_loading = 1.0;
    double hire_noise = 0.5;
    double corr_pU = 0.3;
    double p_min = 1e-4;
    StrataSpec strata;
    std::uint64_t seed = 1;

    void validate() const;
    int skill_dim() const;
};

struct SeekerProfile {
    std::int64_t id = 0;
    int occupation = 0;
    int support = 0;
    int location = 0;
    double age = 0.0;
    double female = 0.0;
    double tenure = 0.0;
    Eigen::VectorXd pref;   // one entry per criterion
    Eigen::VectorXd skill;  // concatenated skill blocks
    double effect = 0.0;    // individual utility shifter c_i
    double rV0 = 0.0;
};

struct Vacancy {
    int id = 0;
    Eigen::VectorXd pref;
    Eigen::VectorXd skill;
    double mean_p = 0.0;  // averages over seekers, for the vacancy table
    double mean_U = 0.0;
};

// Ground truth for one seeker over the whole vacancy pool.
struct SeekerRow {
    Eigen::VectorXd u_score, hire_factor, p, U, delta, pa, gamma;
};

struct Market {
    MarketSpec spec;
    ModelParams model;
    WeightProfile weights;
    std::vector<SeekerProfile> seekers;
    std::vector<Vacancy> vacancies;
    std::vector<Eigen::MatrixXd> hire_maps;  // planted affinity per skill block
    double hire_scale = 1.0;
    int clipped_p = 0;  // pairs whose p hit the clip

    SeekerRow row(std::size_t seeker) const;
    VacancyDistribution distribution(const SeekerRow& r) const;
    Eigen::MatrixXd seeker_skills() const;
    Eigen::MatrixXd vacancy_skills() const;
};

// Mean and sd of the criteria score under the market's feature law.
struct CriteriaMoments {
    double mean = 0.0;
    double sd = 1.0;
};
CriteriaMoments criteria_moments(const WeightProfile& w);

Market sample_market(const MarketSpec& spec, const ModelParams& model, const WeightProfile& weights = WeightProfile::pes(),
                     int threads = 1);

// Positive (seeker, vacancy) pairs for scorer training: for each seeker in
// `seekers`, one hire drawn with probability proportional to p * p_a.
std::vector<Match> sample_historical_matches(const Market& m, const std::vector<int>& seekers, std::uint64_t seed);

}  // namespace wr
