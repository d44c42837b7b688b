#include <doctest.h>

#include <nlohmann/json.hpp>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sys/wait.h>

#include "wrank/io.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
    int code = -1;
    std::string output;
};

Run cli(const std::string& args) {
    std::string cmd = std::string(WRANK_CLI_PATH) + " " + args + " 2>&1";
    Run r;
    FILE* p = popen(cmd.c_str(), "r");
    REQUIRE(p != nullptr);
    std::array<char, 4096> buf;
    std::size_t got;
    while ((got = fread(buf.data(), 1, buf.size(), p)) > 0) r.output.append(buf.data(), got);
    int status = pclose(p);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

fs::path scratch(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("wrank_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

const char* tiny_config = R"({
  "seed": 5,
  "market": {"n_seekers": 300, "n_vacancies": 120},
  "experiment": {
    "arms": [
      {"name": "vadore0", "kind": "top", "scorer": "vadore0"},
      {"name": "mix_half", "kind": "mix", "p_scorer": "vadore2", "u_scorer": "urec", "fraction": 0.5},
      {"name": "urec", "kind": "top", "scorer": "urec"}
    ],
    "shares": [0.3333333333333333, 0.3333333333333333, 0.3333333333333334]
  },
  "rank": {"seekers": 10},
  "estimation": {"bootstrap": 5},
  "welfare": {"splits": 2, "bootstrap": 20},
  "nonmyopic": {"seekers": 2, "x_steps": 3}
})";

fs::path write_config(const fs::path& dir, const std::string& text) {
    fs::path p = dir / "config.json";
    std::ofstream(p) << text;
    return p;
}

std::string flags(const fs::path& cfg, const fs::path& out) {
    return "--config " + cfg.string() + " --out " + out.string();
}

bool run_all(const fs::path& cfg, const fs::path& out, const std::string& extra = "") {
    for (const char* st : {"simulate", "train", "rank", "experiment", "estimate", "welfare", "report"}) {
        Run r = cli(std::string(st) + " " + flags(cfg, out) + " " + extra);
        if (r.code != 0) {
            MESSAGE(st << ": " << r.output);
            return false;
        }
    }
    return true;
}

}  // namespace

TEST_CASE("usage errors exit with 2") {
    fs::path d = scratch("usage");
    fs::path cfg = write_config(d, tiny_config);
    CHECK(cli("").code == 2);
    CHECK(cli("bogus " + flags(cfg, d / "out")).code == 2);
    CHECK(cli("simulate --out " + (d / "out").string()).code == 2);
    CHECK(cli("simulate " + flags(cfg, d / "out") + " --threads 0").code == 2);
    CHECK(cli("simulate " + flags(cfg, d / "out") + " --figure m-curves").code == 2);
    CHECK(cli("--help").code == 0);
}

TEST_CASE("schema errors exit with 3 and name the problem") {
    fs::path d = scratch("schema");
    fs::path cfg = write_config(d, R"({"market": {"n_seekrs": 10}})");
    Run r = cli("simulate " + flags(cfg, d / "out"));
    CHECK(r.code == 3);
    CHECK(r.output.find("market.n_seekrs") != std::string::npos);
    fs::path bad = write_config(d, "{ not json");
    CHECK(cli("simulate " + flags(bad, d / "out")).code == 3);
    CHECK(cli("simulate --config " + (d / "absent.json").string()).code == 3);
}

TEST_CASE("a stage without its inputs names the missing artifact") {
    fs::path d = scratch("missing");
    fs::path cfg = write_config(d, tiny_config);
    REQUIRE(cli("simulate " + flags(cfg, d / "out")).code == 0);
    Run r = cli("estimate " + flags(cfg, d / "out"));
    CHECK(r.code == 3);
    CHECK(r.output.find("interactions.csv") != std::string::npos);
}

TEST_CASE("dataset validation reports bad rows by line") {
    fs::path d = scratch("validate");
    std::ofstream(d / "bad.csv") << "seeker_id,arm,vacancy_id,slot,clicked,applied,hired,short_list,true_p,true_U,"
                                    "true_pa,true_gamma\n"
                                    "0,a,3,1,1,1,0,0,0.2,1.0,0.3,0.1\n"
                                    "0,a,4,2,0,0,1,0,0.2,1.0,0.3,0.1\n";
    Run r = cli("validate --dataset " + (d / "bad.csv").string() + " --schema interactions");
    CHECK(r.code == 3);
    CHECK(r.output.find("\"line\": 3") != std::string::npos);
    CHECK(r.output.find("hired=1 but applied=0") != std::string::npos);
    std::ofstream(d / "short.csv") << "seeker_id,arm\n0,a\n";
    Run m = cli("validate --dataset " + (d / "short.csv").string() + " --schema interactions");
    CHECK(m.code == 3);
    CHECK(m.output.find("vacancy_id") != std::string::npos);
    CHECK(cli("validate --dataset " + (d / "short.csv").string() + " --schema nonsense").code == 2);
}

TEST_CASE("m-curve figure data") {
    fs::path d = scratch("mcurve");
    fs::path cfg = write_config(d, tiny_config);
    REQUIRE(cli("simulate " + flags(cfg, d / "out")).code == 0);
    Run r = cli("figure-data " + flags(cfg, d / "out") + " --figure m-curves");
    REQUIRE(r.code == 0);
    wr::CsvTable t = wr::parse_csv(wr::read_text(d / "out" / "figure_m_curves.csv"));
    CHECK(t.header == std::vector<std::string>{"p_a", "m_logistic", "m_gumbel", "m_normal"});
    CHECK(t.rows.size() == 200);
    bool found = false;
    for (const auto& row : t.rows)
        if (std::stod(row[0]) == 0.5) {
            found = true;
            CHECK(std::abs(std::stod(row[1]) - 1.386294) < 5e-7);
        }
    CHECK(found);
    CHECK(std::stod(t.rows.front()[0]) == doctest::Approx(0.001));
    CHECK(std::stod(t.rows.back()[0]) == doctest::Approx(0.95));
    CHECK(cli("figure-data " + flags(cfg, d / "out") + " --figure pie-chart").code == 2);
}

TEST_CASE("full pipeline: artifacts, reruns and thread counts") {
    fs::path d = scratch("pipeline");
    fs::path cfg = write_config(d, tiny_config);
    REQUIRE(run_all(cfg, d / "a"));
    REQUIRE(run_all(cfg, d / "b", "--threads 3"));
    for (const char* f : {"seekers.csv", "vacancies.csv", "interactions.csv", "assignment.csv", "scores.csv"}) {
        CHECK(fs::exists(d / "a" / f));
        Run v = cli(std::string("validate --dataset ") + (d / "a" / f).string() + " --schema " +
                    std::string(f).substr(0, std::string(f).find('.')));
        CHECK_MESSAGE(v.code == 0, f << ": " << v.output);
    }
    auto manifest = [](const fs::path& dir) { return nlohmann::json::parse(wr::read_text(dir / "manifest.json")); };
    nlohmann::json ma = manifest(d / "a"), mb = manifest(d / "b");
    CHECK(ma.at("artifacts") == mb.at("artifacts"));
    REQUIRE(run_all(cfg, d / "a"));
    CHECK(manifest(d / "a").at("artifacts") == ma.at("artifacts"));

    nlohmann::json rep = nlohmann::json::parse(wr::read_text(d / "a" / "report.json"));
    // four panels for each of the three arms and the optimal benchmark
    CHECK(rep.at("arm_metrics").size() == 16);
    for (const auto& row : rep.at("arm_metrics")) {
        CHECK(row.at("ci_low").get<double>() <= row.at("estimate").get<double>());
        CHECK(row.at("estimate").get<double>() <= row.at("ci_high").get<double>());
    }
    CHECK(rep.at("nonmyopic").at("seekers").size() == 2);
    CHECK(rep.at("nonmyopic").at("shift_scan_seeker0").size() == 3);

    REQUIRE(cli("figure-data " + flags(cfg, d / "a")).code == 0);
    wr::CsvTable arms = wr::parse_csv(wr::read_text(d / "a" / "figure_arm_comparison.csv"));
    CHECK(arms.header == std::vector<std::string>{"arm", "metric", "estimate", "ci_low", "ci_high"});
    CHECK(fs::exists(d / "a" / "figure_gamma_surface.csv"));
    CHECK(fs::exists(d / "a" / "figure_rank_divergence.csv"));

    // a changed config invalidates downstream stages until simulate reruns
    fs::path cfg2 = write_config(scratch("pipeline_cfg2"), [] {
        std::string t = tiny_config;
        return t.replace(t.find("\"seed\": 5"), 9, "\"seed\": 6");
    }());
    Run stale = cli("estimate " + flags(cfg2, d / "a"));
    CHECK(stale.code == 3);
    CHECK(stale.output.find("simulate") != std::string::npos);
}
