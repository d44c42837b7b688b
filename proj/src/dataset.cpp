#include <charconv>
#include <cmath>
#include <map>
#include <nlohmann/json.hpp>
#include <set>

#include "wrank/errors.hpp"
#include "wrank/pipeline.hpp"

namespace wr {

namespace {

const char* kInteractionColumns[] = {"seeker_id", "arm",        "vacancy_id", "slot",    "clicked",
                                     "applied",   "hired",      "short_list", "true_p",  "true_U",
                                     "true_pa",   "true_gamma"};

bool parse_int(const std::string& s, std::int64_t& out) {
    auto r = std::from_chars(s.data(), s.data() + s.size(), out);
    return r.ec == std::errc() && r.ptr == s.data() + s.size() && !s.empty();
}

bool parse_double(const std::string& s, double& out) {
    auto r = std::from_chars(s.data(), s.data() + s.size(), out);
    return r.ec == std::errc() && r.ptr == s.data() + s.size() && !s.empty();
}

}  // namespace

std::string interactions_csv(const InteractionLog& log) {
    std::vector<std::string> header(std::begin(kInteractionColumns), std::end(kInteractionColumns));
    for (const auto& s : log.score_names) header.push_back("score_" + s);
    CsvWriter w(header);
    for (std::size_t i = 0; i < log.rows(); ++i) {
        w.field(log.seeker[i]).field(log.arm_names.at(log.arm[i])).field(log.vacancy[i]).field(log.slot[i]);
        w.field(log.clicked[i]).field(log.applied[i]).field(log.hired[i]).field(log.short_list[i]);
        w.field(log.true_p[i]).field(log.true_U[i]).field(log.true_pa[i]).field(log.true_gamma[i]);
        for (const auto& col : log.scores) w.field(col[i]);
        w.end_row();
    }
    return w.str();
}

InteractionLog read_interactions(const std::string& text, const std::vector<std::string>& arm_names) {
    ValidationReport rep = validate_dataset_text(text, "interactions");
    if (!rep.ok()) {
        const Violation& v = rep.violations.front();
        throw SchemaError("interactions: line " + std::to_string(v.line) + ": " + v.message + " (" +
                          std::to_string(rep.total_violations) + " violations)");
    }
    CsvTable t = parse_csv(text);
    InteractionLog log;
    log.arm_names = arm_names;
    std::vector<int> score_cols;
    for (std::size_t c = 0; c < t.header.size(); ++c)
        if (t.header[c].rfind("score_", 0) == 0) {
            log.score_names.push_back(t.header[c].substr(6));
            score_cols.push_back(static_cast<int>(c));
        }
    log.scores.resize(score_cols.size());
    std::map<std::string, int> arm_index;
    for (std::size_t a = 0; a < arm_names.size(); ++a) arm_index[arm_names[a]] = static_cast<int>(a);
    auto col = [&](const char* n) { return t.column(n); };
    const int c_seeker = col("seeker_id"), c_arm = col("arm"), c_vac = col("vacancy_id"), c_slot = col("slot"),
              c_click = col("clicked"), c_apply = col("applied"), c_hire = col("hired"), c_short = col("short_list"),
              c_p = col("true_p"), c_U = col("true_U"), c_pa = col("true_pa"), c_g = col("true_gamma");
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        auto it = arm_index.find(row[c_arm]);
        if (it == arm_index.end())
            throw SchemaError("interactions: line " + std::to_string(r + 2) + ": arm '" + row[c_arm] +
                              "' is not in the configured design");
        log.seeker.push_back(std::stoll(row[c_seeker]));
        log.arm.push_back(it->second);
        log.vacancy.push_back(std::stoi(row[c_vac]));
        log.slot.push_back(std::stoi(row[c_slot]));
        log.clicked.push_back(std::stoi(row[c_click]));
        log.applied.push_back(std::stoi(row[c_apply]));
        log.hired.push_back(std::stoi(row[c_hire]));
        log.short_list.push_back(std::stoi(row[c_short]));
        double x = 0;
        parse_double(row[c_p], x), log.true_p.push_back(x);
        parse_double(row[c_U], x), log.true_U.push_back(x);
        parse_double(row[c_pa], x), log.true_pa.push_back(x);
        parse_double(row[c_g], x), log.true_gamma.push_back(x);
        for (std::size_t k = 0; k < score_cols.size(); ++k) {
            parse_double(row[score_cols[k]], x);
            log.scores[k].push_back(x);
        }
    }
    return log;
}

const std::vector<std::string>& dataset_schemas() {
    static const std::vector<std::string> s{"interactions", "seekers", "vacancies", "assignment", "scores"};
    return s;
}

namespace {

enum class Kind { integer, count, flag, number, probability, nonneg, text };

struct ColumnRule {
    std::string name;
    Kind kind;
};

std::vector<ColumnRule> rules_for(const std::string& schema) {
    using K = Kind;
    if (schema == "interactions")
        return {{"seeker_id", K::integer}, {"arm", K::text},          {"vacancy_id", K::integer},
                {"slot", K::count},        {"clicked", K::flag},      {"applied", K::flag},
                {"hired", K::flag},        {"short_list", K::flag},   {"true_p", K::probability},
                {"true_U", K::number},     {"true_pa", K::probability}, {"true_gamma", K::nonneg}};
    if (schema == "seekers")
        return {{"seeker_id", K::integer}, {"occupation", K::integer}, {"support", K::integer},
                {"location", K::integer},  {"age", K::number},         {"female", K::flag},
                {"tenure", K::nonneg},     {"effect", K::number},      {"true_rV0", K::number}};
    if (schema == "vacancies") return {{"vacancy_id", K::integer}, {"true_p", K::probability}, {"true_U", K::number}};
    if (schema == "assignment") return {{"seeker_id", K::integer}, {"arm", K::text}, {"enrolled", K::flag}};
    if (schema == "scores")
        return {{"seeker_id", K::integer}, {"vacancy_id", K::integer}, {"algo", K::text}, {"score", K::number},
                {"rank", K::count}};
    throw UsageError("unknown dataset schema '" + schema + "'");
}

const char* describe(Kind k) {
    switch (k) {
        case Kind::integer: return "an integer";
        case Kind::count: return "an integer >= 1";
        case Kind::flag: return "0 or 1";
        case Kind::number: return "a finite number";
        case Kind::probability: return "a probability in [0,1]";
        case Kind::nonneg: return "a number >= 0";
        case Kind::text: return "non-empty text";
    }
    return "";
}

bool check(Kind k, const std::string& s) {
    std::int64_t i = 0;
    double d = 0.0;
    switch (k) {
        case Kind::integer: return parse_int(s, i);
        case Kind::count: return parse_int(s, i) && i >= 1;
        case Kind::flag: return s == "0" || s == "1";
        case Kind::number: return parse_double(s, d) && std::isfinite(d);
        case Kind::probability: return parse_double(s, d) && d >= 0.0 && d <= 1.0;
        case Kind::nonneg: return parse_double(s, d) && d >= 0.0 && std::isfinite(d);
        case Kind::text: return !s.empty();
    }
    return false;
}

}  // namespace

std::string ValidationReport::to_json() const {
    nlohmann::ordered_json j;
    j["schema"] = schema;
    j["rows"] = rows;
    j["ok"] = ok();
    j["total_violations"] = total_violations;
    nlohmann::ordered_json v = nlohmann::ordered_json::array();
    for (const auto& x : violations) v.push_back({{"line", x.line}, {"message", x.message}});
    j["violations"] = v;
    return j.dump(2) + "\n";
}

ValidationReport validate_dataset_text(const std::string& text, const std::string& schema) {
    const std::size_t kMaxListed = 200;
    ValidationReport rep;
    rep.schema = schema;
    std::vector<ColumnRule> rules = rules_for(schema);
    auto add = [&](std::size_t line, std::string msg) {
        ++rep.total_violations;
        if (rep.violations.size() < kMaxListed) rep.violations.push_back({line, std::move(msg)});
    };
    CsvTable t;
    try {
        t = parse_csv(text);
    } catch (const SchemaError& e) {
        add(0, e.what());
        return rep;
    }
    rep.rows = t.rows.size();
    if (t.header.empty()) {
        add(1, "empty file: header row missing");
        return rep;
    }
    std::vector<int> idx;
    bool missing = false;
    for (const auto& r : rules) {
        int c = t.column(r.name);
        if (c < 0) {
            add(1, "missing column '" + r.name + "'");
            missing = true;
        }
        idx.push_back(c);
    }
    std::vector<int> extra_numeric;
    for (std::size_t c = 0; c < t.header.size(); ++c)
        if (schema == "interactions" && t.header[c].rfind("score_", 0) == 0) extra_numeric.push_back(static_cast<int>(c));
    if (missing) return rep;

    const int c_click = t.column("clicked"), c_apply = t.column("applied"), c_hire = t.column("hired");
    const int c_seeker = t.column("seeker_id"), c_slot = t.column("slot");
    std::set<std::pair<std::string, std::string>> seen_slots, seen_ids;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        const std::size_t line = r + 2;
        if (row.size() != t.header.size()) {
            add(line, "expected " + std::to_string(t.header.size()) + " fields, found " + std::to_string(row.size()));
            continue;
        }
        bool typed = true;
        for (std::size_t k = 0; k < rules.size(); ++k)
            if (!check(rules[k].kind, row[idx[k]])) {
                add(line, "column '" + rules[k].name + "' must be " + describe(rules[k].kind) + ", found '" +
                              row[idx[k]] + "'");
                typed = false;
            }
        for (int c : extra_numeric)
            if (!check(Kind::number, row[c])) {
                add(line, "column '" + t.header[c] + "' must be a finite number, found '" + row[c] + "'");
                typed = false;
            }
        if (!typed) continue;
        if (schema == "interactions") {
            if (row[c_apply] == "1" && row[c_click] == "0") add(line, "applied=1 but clicked=0");
            if (row[c_hire] == "1" && row[c_apply] == "0") add(line, "hired=1 but applied=0");
            if (!seen_slots.insert({row[c_seeker], row[c_slot]}).second)
                add(line, "slot " + row[c_slot] + " repeated for seeker " + row[c_seeker]);
        } else if (schema == "seekers" || schema == "assignment" || schema == "vacancies") {
            const std::string key = schema == "vacancies" ? row[t.column("vacancy_id")] : row[c_seeker];
            if (!seen_ids.insert({key, ""}).second) add(line, "duplicate id " + key);
        }
    }
    return rep;
}

ValidationReport validate_dataset(const std::filesystem::path& path, const std::string& schema) {
    rules_for(schema);  // reject unknown schema names before touching the file
    return validate_dataset_text(read_text(path), schema);
}

}  // namespace wr
