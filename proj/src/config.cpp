#include "wrank/config.hpp"

#include <nlohmann/json.hpp>
#include <set>

#include "wrank/errors.hpp"
#include "wrank/io.hpp"
#include "wrank/rng.hpp"

namespace wr {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

[[noreturn]] void type_error(const std::string& path, const char* want) {
    throw SchemaError("config field '" + path + "': expected " + want);
}

void read_value(const json& j, double& x, const std::string& path) {
    if (!j.is_number()) type_error(path, "a number");
    x = j.get<double>();
}
void read_value(const json& j, int& x, const std::string& path) {
    if (!j.is_number_integer()) type_error(path, "an integer");
    x = j.get<int>();
}
void read_value(const json& j, std::uint64_t& x, const std::string& path) {
    if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<std::int64_t>() >= 0))
        type_error(path, "a non-negative integer");
    x = j.get<std::uint64_t>();
}
void read_value(const json& j, bool& x, const std::string& path) {
    if (!j.is_boolean()) type_error(path, "true or false");
    x = j.get<bool>();
}
void read_value(const json& j, std::string& x, const std::string& path) {
    if (!j.is_string()) type_error(path, "a string");
    x = j.get<std::string>();
}
template <typename T>
void read_value(const json& j, std::vector<T>& xs, const std::string& path) {
    if (!j.is_array()) type_error(path, "an array");
    xs.clear();
    for (std::size_t i = 0; i < j.size(); ++i) {
        T t{};
        read_value(j[i], t, path + "[" + std::to_string(i) + "]");
        xs.push_back(t);
    }
}

class Reader {
public:
    Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) type_error(path_.empty() ? "<root>" : path_, "an object");
    }

    template <typename T>
    void operator()(const char* key, T& x) {
        used_.insert(key);
        auto it = j_.find(key);
        if (it != j_.end()) read_value(*it, x, at(key));
    }

    template <typename F>
    void object(const char* key, F f) {
        used_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) return;
        Reader sub(*it, at(key));
        f(sub);
        sub.finish();
    }

    template <typename T, typename F>
    void list(const char* key, std::vector<T>& xs, F f) {
        used_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) return;
        if (!it->is_array()) type_error(at(key), "an array of objects");
        xs.clear();
        for (std::size_t i = 0; i < it->size(); ++i) {
            T t{};
            Reader sub((*it)[i], at(key) + "[" + std::to_string(i) + "]");
            f(sub, t);
            sub.finish();
            xs.push_back(std::move(t));
        }
    }

    void finish() const {
        for (const auto& [k, v] : j_.items())
            if (!used_.count(k)) throw SchemaError("unknown config key '" + at(k) + "'");
    }

private:
    std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
    const json& j_;
    std::string path_;
    std::set<std::string> used_;
};

class Writer {
public:
    template <typename T>
    void operator()(const char* key, T& x) {
        j_[key] = x;
    }

    template <typename F>
    void object(const char* key, F f) {
        Writer sub;
        f(sub);
        j_[key] = std::move(sub.j_);
    }

    template <typename T, typename F>
    void list(const char* key, std::vector<T>& xs, F f) {
        ojson arr = ojson::array();
        for (auto& x : xs) {
            Writer sub;
            f(sub, x);
            arr.push_back(std::move(sub.j_));
        }
        j_[key] = std::move(arr);
    }

    ojson j_ = ojson::object();
};

template <typename V>
void visit(V& v, RunConfig& c) {
    v("seed", c.seed);
    v.object("model", [&](V& s) {
        ModelParams& m = c.model;
        s("r", m.r);
        s("q", m.q);
        s("u_b", m.u_b);
        s("k", m.k);
        s("R", m.R);
        s("sigma", m.sigma);
        s("alpha0", m.alpha0);
        s("alpha1", m.alpha1);
    });
    v.object("market", [&](V& s) {
        MarketSpec& m = c.market;
        s("n_seekers", m.n_seekers);
        s("n_vacancies", m.n_vacancies);
        s("skill_blocks", m.skill_blocks);
        s("utility_offset", m.utility_offset);
        s("utility_loading", m.utility_loading);
        s("utility_noise", m.utility_noise);
        s("individual_effect_sd", m.individual_effect_sd);
        s("hire_intercept", m.hire_intercept);
        s("hire_loading", m.hire_loading);
        s("hire_noise", m.hire_noise);
        s("corr_pU", m.corr_pU);
        s("p_min", m.p_min);
        s.object("strata", [&](V& t) {
            t("occupation", m.strata.occupation);
            t("support", m.strata.support);
            t("location", m.strata.location);
        });
    });
    v.list("weights", c.weights.criteria, [](V& s, std::pair<std::string, double>& w) {
        s("name", w.first);
        s("weight", w.second);
    });
    v.list("scorers", c.scorers, [](V& s, ScorerSpec& sc) {
        s("name", sc.name);
        s("kind", sc.kind);
        s("target", sc.target);
        s("noise_sd", sc.noise_sd);
        s("calibrated", sc.calibrated);
        s.list("components", sc.components, [](V& t, std::pair<std::string, double>& w) {
            t("scorer", w.first);
            t("weight", w.second);
        });
    });
    v.object("calibration", [&](V& s) {
        s("intercept", c.calibration.intercept);
        s("slope", c.calibration.slope);
    });
    v.object("training", [&](V& s) {
        TrainingConfig& t = c.training;
        s("latent_dim", t.latent_dim);
        s("history_share", t.history_share);
        s("margin", t.hyper.margin);
        s("learning_rate", t.hyper.learning_rate);
        s("epochs", t.hyper.epochs);
        s("negatives", t.hyper.negatives);
        s("batch_size", t.hyper.batch_size);
    });
    v.object("experiment", [&](V& s) {
        ExperimentDesign& e = c.experiment;
        s.list("arms", e.arms, [](V& t, ArmSpec& a) {
            t("name", a.name);
            t("kind", a.kind);
            t("scorer", a.scorer);
            t("p_scorer", a.p_scorer);
            t("u_scorer", a.u_scorer);
            t("fraction", a.fraction);
        });
        s("shares", e.shares);
        s("list_length", e.list_length);
        s("n_preselect", e.n_preselect);
        s("dropout", e.dropout);
        s("enrollment", e.enrollment);
        s("click_offset", e.click_offset);
        s.object("cutoffs", [&](V& t) {
            t("top", e.cutoffs.top);
            t("mid", e.cutoffs.mid);
            t("wide", e.cutoffs.wide);
        });
    });
    v.object("rank", [&](V& s) { s("seekers", c.rank.seekers); });
    v.object("estimation", [&](V& s) {
        EstimationConfig& e = c.estimation;
        s("utility_column", e.utility_column);
        s("hire_column", e.hire_column);
        s("calibration_column", e.calibration_column);
        s("bootstrap", e.bootstrap);
        s.object("measurement_error", [&](V& t) {
            t("columns", e.measurement_error.columns);
            t("variance", e.measurement_error.variance);
        });
        s("hazard_mode", e.hazard_mode);
        s("max_rank", e.max_rank);
    });
    v.object("welfare", [&](V& s) {
        WelfareConfig& w = c.welfare;
        s("splits", w.split.splits);
        s("fraction", w.split.fraction);
        s("bootstrap", w.split.bootstrap);
        s("max_resample", w.split.max_resample);
        s("score_columns", w.options.score_columns);
        s("slot_controls", w.options.slot_controls);
        s("sigma_scale", w.options.sigma_scale);
        s("min_rows", w.options.min_rows);
    });
    v.object("nonmyopic", [&](V& s) {
        NonMyopicConfig& n = c.nonmyopic;
        s("seekers", n.seekers);
        s("share", n.share);
        s("x_min", n.x_min);
        s("x_max", n.x_max);
        s("x_steps", n.x_steps);
    });
    v.object("figures", [&](V& s) {
        FigureConfig& f = c.figures;
        s("surface_p", f.surface_p);
        s("surface_delta", f.surface_delta);
        s("delta_min", f.delta_min);
        s("delta_max", f.delta_max);
        s("sigma", f.sigma);
    });
}

}  // namespace

RunConfig RunConfig::defaults() {
    RunConfig c;
    c.market.n_seekers = 6000;
    c.market.n_vacancies = 300;
    auto signal = [](const char* name, const char* target, double noise) {
        ScorerSpec s;
        s.name = name;
        s.kind = "signal";
        s.target = target;
        s.noise_sd = noise;
        return s;
    };
    ScorerSpec v0;
    v0.name = "vadore0";
    v0.kind = "bilinear";
    v0.calibrated = false;
    ScorerSpec u;
    u.name = "urec";
    u.kind = "criteria";
    ScorerSpec mix;
    mix.name = "mix";
    mix.kind = "blend";
    mix.components = {{"vadore2", 1.0}, {"urec", 10.0}};
    c.scorers = {v0, signal("vadore2", "ph", 0.6), signal("application", "pa", 0.7), signal("xgboost", "p", 1.0), u, mix};

    auto top = [](const char* name, const char* scorer) {
        ArmSpec a;
        a.name = name;
        a.kind = "top";
        a.scorer = scorer;
        return a;
    };
    ArmSpec half;
    half.name = "mix_half";
    half.kind = "mix";
    half.p_scorer = "vadore2";
    half.u_scorer = "urec";
    half.fraction = 0.5;
    c.experiment.arms = {top("vadore0", "vadore0"), top("vadore2", "vadore2"), half,
                         top("application", "application"), top("xgboost", "xgboost"), top("urec", "urec")};
    c.experiment.shares.assign(6, 1.0 / 6.0);
    return c;
}

void RunConfig::validate() const {
    model.validate();
    market.validate();
    weights.validate();
    if (static_cast<int>(weights.size()) < 1) throw ConfigError("weights: need at least one criterion");
    ScorerRegistry reg = registry();
    reg.validate();
    experiment.validate(reg);
    welfare.split.validate();
    if (training.latent_dim < 1) throw ConfigError("training.latent_dim must be >= 1");
    if (!(training.history_share > 0.0 && training.history_share <= 1.0))
        throw ConfigError("training.history_share must lie in (0,1]");
    if (!(training.hyper.margin > 0.0)) throw ConfigError("training.margin must be > 0");
    if (training.hyper.epochs < 0 || training.hyper.negatives < 1 || training.hyper.batch_size < 1)
        throw ConfigError("training: epochs >= 0, negatives >= 1 and batch_size >= 1 required");
    if (rank.seekers < 0) throw ConfigError("rank.seekers must be >= 0");
    for (const auto* col : {&estimation.utility_column, &estimation.hire_column, &estimation.calibration_column})
        if (reg.index(*col) < 0) throw ConfigError("estimation: no scorer named '" + *col + "'");
    parse_rank_mode(estimation.hazard_mode);
    if (estimation.max_rank < 1) throw ConfigError("estimation.max_rank must be >= 1");
    if (estimation.bootstrap < 0) throw ConfigError("estimation.bootstrap must be >= 0");
    for (const auto& n : welfare.options.score_columns)
        if (reg.index(n) < 0) throw ConfigError("welfare: no scorer named '" + n + "'");
    if (!(welfare.options.sigma_scale > 0.0)) throw ConfigError("welfare.sigma_scale must be > 0");
    if (!(nonmyopic.share > 0.0 && nonmyopic.share <= 1.0)) throw ConfigError("nonmyopic.share must lie in (0,1]");
    if (nonmyopic.x_steps < 1 || nonmyopic.seekers < 0) throw ConfigError("nonmyopic: x_steps >= 1, seekers >= 0");
    if (figures.surface_p < 2 || figures.surface_delta < 2 || !(figures.delta_max > figures.delta_min) ||
        !(figures.sigma > 0.0))
        throw ConfigError("figures: grid needs at least two points per axis and sigma > 0");
}

ScorerRegistry RunConfig::registry() const {
    ScorerRegistry reg;
    reg.specs = scorers;
    reg.calibration = calibration;
    return reg;
}

bool RunConfig::needs_training() const { return registry().needs_bilinear(); }

std::uint64_t RunConfig::stage_seed(const char* tag) const { return substream_seed(seed, 0, hash_name(tag)); }

RunConfig parse_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        // the message carries line and column
        throw SchemaError(std::string("config is not valid JSON: ") + e.what());
    }
    RunConfig c = RunConfig::defaults();
    try {
        Reader r(j, "");
        visit(r, c);
        r.finish();
    } catch (const json::exception& e) {
        throw SchemaError(std::string("config: ") + e.what());
    }
    c.validate();
    return c;
}

RunConfig load_config(const std::string& path) { return parse_config(read_text(path)); }

std::string serialize_config(const RunConfig& c) {
    RunConfig copy = c;
    Writer w;
    visit(w, copy);
    return w.j_.dump(2) + "\n";
}

}  // namespace wr
