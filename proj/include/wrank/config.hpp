#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wrank/experiment.hpp"
#include "wrank/market.hpp"
#include "wrank/scorers.hpp"
#include "wrank/search_model.hpp"
#include "wrank/welfare.hpp"

namespace wr {

struct TrainingConfig {
    int latent_dim = 4;
    double history_share = 0.5;  // seekers whose past hire feeds training; the rest are held out
    TripletHyper hyper;
};

struct RankConfig {
    int seekers = 100;  // first N seekers get a full score matrix
};

struct MeasurementErrorConfig {
    std::vector<std::string> columns;
    double variance = 0.0;
};

struct EstimationConfig {
    std::string utility_column = "urec";
    std::string hire_column = "xgboost";  // logit scale; 1/P uses its logistic transform
    std::string calibration_column = "xgboost";
    int bootstrap = 200;
    MeasurementErrorConfig measurement_error;
    std::string hazard_mode = "application";
    int max_rank = 10;
};

struct NonMyopicConfig {
    int seekers = 20;
    double share = 0.1;
    double x_min = -1.0, x_max = 1.0;
    int x_steps = 21;
};

struct FigureConfig {
    int surface_p = 25;
    int surface_delta = 41;
    double delta_min = -6.0, delta_max = 4.0;
    double sigma = 1.0;
};

struct WelfareConfig {
    SplitSpec split;
    WelfareOptions options;
};

struct RunConfig {
    std::uint64_t seed = 1;
    ModelParams model;
    MarketSpec market;
    WeightProfile weights = WeightProfile::pes();
    std::vector<ScorerSpec> scorers;
    CalibrationCoefficients calibration;
    TrainingConfig training;
    ExperimentDesign experiment;
    RankConfig rank;
    EstimationConfig estimation;
    WelfareConfig welfare;
    NonMyopicConfig nonmyopic;
    FigureConfig figures;

    static RunConfig defaults();  // six-arm beta test
    void validate() const;
    ScorerRegistry registry() const;  // without a trained bilinear scorer
    bool needs_training() const;
    // Seed for a named stage, derived from the master seed.
    std::uint64_t stage_seed(const char* tag) const;
};

// Strict parse: unknown keys and type mismatches throw SchemaError with the
// field path; JSON syntax errors report line and column.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);
// Every field, defaults included; parse(serialize(c)) reproduces c.
std::string serialize_config(const RunConfig& c);

}  // namespace wr
