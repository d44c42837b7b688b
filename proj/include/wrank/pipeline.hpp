#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "wrank/config.hpp"
#include "wrank/experiment.hpp"
#include "wrank/io.hpp"

namespace wr {

enum class Stage { simulate, train, rank, experiment, estimate, welfare, report, figure_data };

Stage parse_stage(const std::string& s);  // UsageError when unknown
const char* stage_name(Stage s);

struct RunContext {
    RunConfig config;
    std::filesystem::path out = "out";
    int threads = 1;
    std::vector<std::string> figures;  // figure-data keys; empty means all
};

// Runs one stage, writing its artifacts and updating the manifest.
void run_stage(Stage stage, const RunContext& ctx);

// Figure tables as CSV text.
std::vector<double> m_curve_grid();
std::string m_curves_csv();
std::string gamma_surface_csv(const FigureConfig& f);
const std::vector<std::string>& figure_keys();

// Interaction log <-> CSV. Arm names fix the arm index order.
std::string interactions_csv(const InteractionLog& log);
InteractionLog read_interactions(const std::string& text, const std::vector<std::string>& arm_names);

struct Violation {
    std::size_t line = 0;  // 1-based file line; 0 for file-level problems
    std::string message;
};

struct ValidationReport {
    std::string schema;
    std::size_t rows = 0;
    std::vector<Violation> violations;
    std::size_t total_violations = 0;  // may exceed violations.size()
    bool ok() const { return total_violations == 0; }
    std::string to_json() const;
};

const std::vector<std::string>& dataset_schemas();
ValidationReport validate_dataset_text(const std::string& text, const std::string& schema);
ValidationReport validate_dataset(const std::filesystem::path& path, const std::string& schema);

}  // namespace wr
