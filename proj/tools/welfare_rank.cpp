#include <CLI11.hpp>
#include <iostream>

#include "wrank/config.hpp"
#include "wrank/errors.hpp"
#include "wrank/pipeline.hpp"

namespace {

int exit_code(wr::ErrorKind k) {
    switch (k) {
        case wr::ErrorKind::usage: return 2;
        case wr::ErrorKind::config:
        case wr::ErrorKind::schema:
        case wr::ErrorKind::input: return 3;
        case wr::ErrorKind::numeric:
        case wr::ErrorKind::separation:
        case wr::ErrorKind::degenerate:
        case wr::ErrorKind::domain: return 4;
    }
    return 4;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"welfare-rank: synthetic job-search market, recommender arms and welfare evaluation"};
    app.set_version_flag("--version", "welfare-rank 1.0");
    std::string stage, config, out = "out", dataset, schema;
    std::optional<std::uint64_t> seed;
    int threads = 1;
    std::vector<std::string> figures;
    app.add_option("stage", stage,
                   "simulate | train | rank | experiment | estimate | welfare | report | figure-data | validate")
        ->required();
    app.add_option("--config", config, "JSON run configuration");
    app.add_option("--seed", seed, "master seed, overrides the config");
    app.add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
    app.add_option("--out", out, "output directory");
    app.add_option("--figure", figures, "figure-data key (repeatable): m-curves, gamma-surface, arm-comparison, rank-divergence");
    app.add_option("--dataset", dataset, "validate: CSV file to check");
    app.add_option("--schema", schema, "validate: interactions | seekers | vacancies | assignment | scores");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (stage == "validate") {
            if (dataset.empty() || schema.empty()) throw wr::UsageError("validate needs --dataset and --schema");
            wr::ValidationReport rep = wr::validate_dataset(dataset, schema);
            std::cout << rep.to_json();
            return rep.ok() ? 0 : 3;
        }
        wr::Stage st = wr::parse_stage(stage);
        if (config.empty()) throw wr::UsageError("--config is required");
        if (!figures.empty() && st != wr::Stage::figure_data) throw wr::UsageError("--figure only applies to figure-data");
        wr::RunContext ctx;
        ctx.config = wr::load_config(config);
        if (seed) ctx.config.seed = *seed;
        ctx.out = out;
        ctx.threads = threads;
        ctx.figures = figures;
        wr::run_stage(st, ctx);
        std::cerr << "welfare-rank: " << stage << " done, outputs in " << out << "\n";
        return 0;
    } catch (const wr::Error& e) {
        std::cerr << "welfare-rank: " << e.what() << "\n";
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "welfare-rank: " << e.what() << "\n";
        return 4;
    }
}
