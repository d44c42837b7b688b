#include "wrank/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <nlohmann/json.hpp>
#include <numeric>
#include <optional>

#include "wrank/errors.hpp"
#include "wrank/estimation.hpp"
#include "wrank/nonmyopic.hpp"
#include "wrank/parallel.hpp"
#include "wrank/rng.hpp"
#include "wrank/shocks.hpp"
#include "wrank/welfare.hpp"

namespace wr {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

const std::pair<Stage, const char*> kStages[] = {
    {Stage::simulate, "simulate"}, {Stage::train, "train"},       {Stage::rank, "rank"},
    {Stage::experiment, "experiment"}, {Stage::estimate, "estimate"}, {Stage::welfare, "welfare"},
    {Stage::report, "report"},     {Stage::figure_data, "figure-data"}};

std::string dump(const ojson& j) { return j.dump(2) + "\n"; }

ojson fit_json(const FitResult& f) {
    ojson j;
    j["n_obs"] = f.n_obs;
    j["n_clusters"] = f.n_clusters;
    ojson coefs = ojson::array();
    for (std::size_t k = 0; k < f.names.size(); ++k)
        coefs.push_back({{"name", f.names[k]},
                         {"coef", f.coef[k]},
                         {"se", f.se[k]},
                         {"p_value", f.p_value[k]}});
    j["coefficients"] = coefs;
    if (f.joint) {
        j["joint"] = {{"F", f.joint->F}, {"p_value", f.joint->p_value}, {"df1", f.joint->df1}, {"df2", f.joint->df2}};
    }
    if (std::isfinite(f.loglik)) j["loglik"] = f.loglik;
    j["converged"] = f.conv.converged;
    j["iterations"] = f.conv.iterations;
    j["notes"] = f.notes;
    return j;
}

// Everything a stage needs besides its own inputs.
struct Session {
    const RunContext& ctx;
    std::string resolved;
    Manifest manifest;
    RunConfig cfg;

    explicit Session(const RunContext& c) : ctx(c), cfg(c.config) {
        cfg.validate();
        resolved = serialize_config(cfg);
        fs::create_directories(ctx.out);
    }

    const fs::path& out() const { return ctx.out; }

    void begin(Stage s) {
        if (s == Stage::simulate) {
            manifest = Manifest{};
        } else {
            manifest = Manifest::load(ctx.out);
            if (manifest.config_sha1.empty())
                throw InputError("no manifest in " + ctx.out.string() + "; run 'simulate' with this config first");
            if (manifest.config_sha1 != git_blob_sha1(resolved))
                throw InputError("outputs in " + ctx.out.string() +
                                 " were produced by a different config; rerun 'simulate' with this config");
        }
        manifest.config_sha1 = git_blob_sha1(resolved);
        manifest.seed = cfg.seed;
        write_atomic(ctx.out / "config.resolved.json", resolved);
    }

    void write(const std::string& name, const std::string& content, Stage s) {
        manifest.write(ctx.out, name, content, stage_name(s));
    }
    std::string require(const std::string& name) const { return manifest.require(ctx.out, name); }
    void finish() const { manifest.save(ctx.out); }

    Market market() const {
        MarketSpec spec = cfg.market;
        spec.seed = cfg.stage_seed("market");
        return sample_market(spec, cfg.model, cfg.weights, ctx.threads);
    }

    ScorerRegistry registry() const {
        ScorerRegistry reg = cfg.registry();
        if (reg.needs_bilinear()) reg.bilinear = parse_scorer(require("scorer.txt"));
        return reg;
    }

    InteractionLog log() const {
        std::vector<std::string> arms;
        for (const auto& a : cfg.experiment.arms) arms.push_back(a.name);
        return read_interactions(require("interactions.csv"), arms);
    }
};

std::vector<BlockShape> bilinear_shapes(const RunConfig& c) {
    std::vector<BlockShape> shapes;
    for (std::size_t b = 0; b < c.market.skill_blocks.size(); ++b) {
        int d = c.market.skill_blocks[b];
        shapes.push_back({"block" + std::to_string(b), d, d, c.training.latent_dim});
    }
    return shapes;
}

// Seekers split into a training history and a holdout, by a seeded shuffle.
std::pair<std::vector<int>, std::vector<int>> history_split(const RunConfig& c) {
    std::vector<int> ids(c.market.n_seekers);
    std::iota(ids.begin(), ids.end(), 0);
    Stream rng(c.stage_seed("history"));
    std::shuffle(ids.begin(), ids.end(), rng.engine());
    std::size_t n_train = static_cast<std::size_t>(std::llround(c.training.history_share * ids.size()));
    n_train = std::clamp<std::size_t>(n_train, 1, ids.size());
    std::vector<int> train(ids.begin(), ids.begin() + n_train), hold(ids.begin() + n_train, ids.end());
    std::sort(train.begin(), train.end());
    std::sort(hold.begin(), hold.end());
    return {train, hold};
}

void stage_simulate(Session& s) {
    Market m = s.market();
    const int K = static_cast<int>(s.cfg.weights.size());
    const int D = s.cfg.market.skill_dim();

    CsvWriter seekers({"seeker_id", "occupation", "support", "location", "age", "female", "tenure", "effect",
                       "true_rV0"});
    for (const auto& p : m.seekers) {
        seekers.field(p.id).field(p.occupation).field(p.support).field(p.location).field(p.age);
        seekers.field(static_cast<int>(p.female)).field(p.tenure).field(p.effect).field(p.rV0);
        seekers.end_row();
    }
    std::vector<std::string> vh{"vacancy_id"};
    for (const auto& [name, w] : s.cfg.weights.criteria) vh.push_back("pref_" + name);
    for (int d = 0; d < D; ++d) vh.push_back("skill_" + std::to_string(d));
    vh.push_back("true_p");
    vh.push_back("true_U");
    CsvWriter vac(vh);
    for (const auto& v : m.vacancies) {
        vac.field(v.id);
        for (int k = 0; k < K; ++k) vac.field(v.pref[k]);
        for (int d = 0; d < D; ++d) vac.field(v.skill[d]);
        vac.field(v.mean_p).field(v.mean_U).end_row();
    }
    auto [train, hold] = history_split(s.cfg);
    std::vector<Match> tm = sample_historical_matches(m, train, s.cfg.stage_seed("history-train"));
    std::vector<Match> hm = sample_historical_matches(m, hold, s.cfg.stage_seed("history-holdout"));
    CsvWriter hist({"seeker_id", "vacancy_id", "split"});
    for (const auto& x : tm) hist.field(x.seeker).field(x.vacancy).field("train").end_row();
    for (const auto& x : hm) hist.field(x.seeker).field(x.vacancy).field("holdout").end_row();

    double mean_rv0 = 0.0;
    for (const auto& p : m.seekers) mean_rv0 += p.rV0 / static_cast<double>(m.seekers.size());
    ojson j;
    j["seekers"] = m.seekers.size();
    j["vacancies"] = m.vacancies.size();
    j["clipped_p"] = m.clipped_p;
    j["mean_true_rV0"] = mean_rv0;
    j["history_train"] = tm.size();
    j["history_holdout"] = hm.size();

    s.write("seekers.csv", seekers.str(), Stage::simulate);
    s.write("vacancies.csv", vac.str(), Stage::simulate);
    s.write("history.csv", hist.str(), Stage::simulate);
    s.write("market.json", dump(j), Stage::simulate);
}

std::vector<Match> read_history(const Session& s, const std::string& split) {
    CsvTable t = parse_csv(s.require("history.csv"));
    int cs = t.column("seeker_id"), cv = t.column("vacancy_id"), cp = t.column("split");
    if (cs < 0 || cv < 0 || cp < 0) throw SchemaError("history.csv: missing columns");
    std::vector<Match> out;
    for (const auto& r : t.rows)
        if (r.at(cp) == split) out.push_back({std::stoi(r.at(cs)), std::stoi(r.at(cv))});
    return out;
}

void stage_train(Session& s) {
    Market m = s.market();
    ojson j;
    if (!s.cfg.needs_training()) {
        j["trained"] = false;
        j["note"] = "no bilinear scorer registered";
        s.write("train.json", dump(j), Stage::train);
        return;
    }
    std::vector<Match> train = read_history(s, "train"), hold = read_history(s, "holdout");
    Eigen::MatrixXd X = m.seeker_skills(), Y = m.vacancy_skills();
    std::vector<int> pool(m.vacancies.size());
    std::iota(pool.begin(), pool.end(), 0);
    TripletHyper hyper = s.cfg.training.hyper;
    hyper.seed = s.cfg.stage_seed("train");
    BilinearScorer init = make_bilinear(bilinear_shapes(s.cfg), hyper);
    BilinearScorer fit = train_triplet(train, X, Y, pool, init);

    BilinearCache cache = BilinearCache::build(fit, Y);
    const int J = static_cast<int>(m.vacancies.size());
    const int k = std::min(10, J);
    std::vector<RankedList> lists(hold.size());
    std::vector<int> matches(hold.size());
    parallel_for(hold.size(), s.ctx.threads, [&](std::size_t i) {
        Eigen::VectorXd sc = cache.scores(X.row(hold[i].seeker).transpose());
        lists[i] = rank_top_k(std::span<const double>(sc.data(), sc.size()), J, hold[i].seeker);
        matches[i] = hold[i].vacancy;
    });
    RecallResult rec = recall_at_k(lists, matches, k);
    j["trained"] = true;
    j["train_matches"] = train.size();
    j["holdout_matches"] = hold.size();
    j["final_loss"] = fit.final_loss;
    j["k"] = k;
    j["holdout_recall"] = rec.value;
    j["random_baseline"] = static_cast<double>(k) / J;
    j["parameters"] = fit.n_params();
    s.write("scorer.txt", serialize_scorer(fit), Stage::train);
    s.write("train.json", dump(j), Stage::train);
}

void stage_rank(Session& s) {
    Market m = s.market();
    ScorerRegistry reg = s.registry();
    std::optional<BilinearCache> cache;
    if (reg.bilinear) cache = BilinearCache::build(*reg.bilinear, m.vacancy_skills());
    const std::size_t n = std::min<std::size_t>(s.cfg.rank.seekers, m.seekers.size());
    const int J = static_cast<int>(m.vacancies.size());
    const int S = static_cast<int>(reg.specs.size());
    const int cu = reg.index(s.cfg.estimation.utility_column), cp = reg.index(s.cfg.estimation.hire_column);
    std::vector<std::vector<RankedList>> full(n);
    parallel_for(n, s.ctx.threads, [&](std::size_t i) {
        Eigen::MatrixXd cols = reg.score_columns(m, i, m.row(i), cache ? &*cache : nullptr);
        full[i].resize(S);
        for (int c = 0; c < S; ++c)
            full[i][c] = rank_top_k(std::span<const double>(cols.col(c).data(), J), J, static_cast<std::int64_t>(i));
    });
    CsvWriter w({"seeker_id", "vacancy_id", "algo", "score", "rank"});
    for (std::size_t i = 0; i < n; ++i)
        for (int c = 0; c < S; ++c) {
            std::vector<std::pair<int, double>> byvac(J);
            std::vector<int> rank_of(J);
            for (int r = 0; r < J; ++r) {
                const auto& e = full[i][c].entries[r];
                byvac[e.vacancy] = {e.vacancy, e.score};
                rank_of[e.vacancy] = r + 1;
            }
            for (int v = 0; v < J; ++v)
                w.field(static_cast<std::int64_t>(i)).field(v).field(reg.specs[c].name).field(byvac[v].second)
                    .field(rank_of[v]).end_row();
        }
    std::vector<RankedList> u_full(n), p_full(n);
    for (std::size_t i = 0; i < n; ++i) {
        u_full[i] = full[i][cu];
        p_full[i] = full[i][cp];
    }
    RankDivergence div = rank_divergence(u_full, p_full);
    CsvWriter d({"seeker_id", "u_rank_of_p_top", "p_rank_of_u_top"});
    for (std::size_t i = 0; i < n; ++i)
        d.field(static_cast<std::int64_t>(i)).field(div.u_rank_of_p_top[i]).field(div.p_rank_of_u_top[i]).end_row();
    auto median = [](std::vector<int> v) {
        if (v.empty()) return 0.0;
        std::sort(v.begin(), v.end());
        std::size_t h = v.size() / 2;
        return v.size() % 2 ? static_cast<double>(v[h]) : 0.5 * (v[h - 1] + v[h]);
    };
    ojson j;
    j["seekers"] = n;
    j["vacancies"] = J;
    j["algorithms"] = [&] {
        std::vector<std::string> names;
        for (const auto& sp : reg.specs) names.push_back(sp.name);
        return names;
    }();
    j["utility_column"] = s.cfg.estimation.utility_column;
    j["hire_column"] = s.cfg.estimation.hire_column;
    j["median_u_rank_of_p_top"] = median(div.u_rank_of_p_top);
    j["median_p_rank_of_u_top"] = median(div.p_rank_of_u_top);
    s.write("scores.csv", w.str(), Stage::rank);
    s.write("rank_divergence.csv", d.str(), Stage::rank);
    s.write("rank.json", dump(j), Stage::rank);
}

void stage_experiment(Session& s) {
    Market m = s.market();
    ScorerRegistry reg = s.registry();
    const std::uint64_t seed = s.cfg.stage_seed("experiment");
    Assignment a = assign_treatments(m.seekers, s.cfg.experiment, s.cfg.market.strata, seed);
    ExperimentRun run = run_experiment(m, a, s.cfg.experiment, reg, seed, s.ctx.threads);
    run.log.check_invariants();

    CsvWriter as({"seeker_id", "arm", "enrolled"});
    for (std::size_t i = 0; i < m.seekers.size(); ++i)
        as.field(m.seekers[i].id).field(s.cfg.experiment.arms[a.arm[i]].name).field(static_cast<int>(a.enrolled[i]))
            .end_row();
    std::string inter = interactions_csv(run.log);
    ValidationReport rep = validate_dataset_text(inter, "interactions");
    if (!rep.ok())
        throw SchemaError("generated interactions fail validation at line " +
                          std::to_string(rep.violations.front().line) + ": " + rep.violations.front().message);

    const std::size_t A = run.log.arm_names.size();
    std::vector<std::int64_t> seekers(A, 0), rows(A, 0), clicks(A, 0), apps(A, 0), hires(A, 0);
    for (std::size_t i = 0; i < m.seekers.size(); ++i)
        if (a.enrolled[i]) ++seekers[a.arm[i]];
    for (std::size_t r = 0; r < run.log.rows(); ++r) {
        int k = run.log.arm[r];
        ++rows[k];
        clicks[k] += run.log.clicked[r];
        apps[k] += run.log.applied[r];
        hires[k] += run.log.hired[r];
    }
    std::vector<std::array<double, 4>> truth = true_arm_means(run.log);
    ojson arms = ojson::array();
    for (std::size_t k = 0; k < A; ++k)
        arms.push_back({{"arm", run.log.arm_names[k]},
                        {"seekers", seekers[k]},
                        {"rows", rows[k]},
                        {"clicks", clicks[k]},
                        {"applications", apps[k]},
                        {"hires", hires[k]},
                        {"true_p", truth[k][0]},
                        {"true_p_a", truth[k][1]},
                        {"true_p_h", truth[k][2]},
                        {"true_gamma", truth[k][3]}});
    ojson j;
    j["rows"] = run.log.rows();
    j["short_lists"] = run.short_lists;
    j["strata_used"] = a.strata_used;
    j["strata_empty"] = a.strata_empty;
    j["arms"] = arms;
    s.write("assignment.csv", as.str(), Stage::experiment);
    s.write("interactions.csv", inter, Stage::experiment);
    s.write("experiment.json", dump(j), Stage::experiment);
}

// Application models on displayed rows: W = (utility score, 1/P from the hire
// score), instruments = arm dummies, controls = slot dummies.
PairDataset application_pairs(const InteractionLog& log, const EstimationConfig& e) {
    const int cu = log.score_index(e.utility_column), cp = log.score_index(e.hire_column);
    if (cu < 0 || cp < 0) throw SchemaError("estimation columns missing from the interaction log");
    const Eigen::Index n = static_cast<Eigen::Index>(log.rows());
    const int A = static_cast<int>(log.arm_names.size());
    int max_slot = 1;
    for (int sl : log.slot) max_slot = std::max(max_slot, sl);
    std::vector<char> slot_seen(max_slot + 1, 0);
    for (int sl : log.slot) slot_seen[sl] = 1;
    std::vector<int> slots;
    for (int sl = 2; sl <= max_slot; ++sl)
        if (slot_seen[sl]) slots.push_back(sl);

    PairDataset d;
    d.y.resize(n);
    d.W.resize(n, 2);
    d.w_names = {e.utility_column, "inv_p_" + e.hire_column};
    d.T = Eigen::MatrixXd::Zero(n, A - 1);
    for (int k = 1; k < A; ++k) d.t_names.push_back("arm_" + log.arm_names[k]);
    d.Z = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(slots.size()));
    for (int sl : slots) d.z_names.push_back("slot_" + std::to_string(sl));
    for (Eigen::Index r = 0; r < n; ++r) {
        d.y[r] = log.applied[r];
        d.W(r, 0) = log.scores[cu][r];
        d.W(r, 1) = 1.0 / logistic_cdf(log.scores[cp][r]);
        if (log.arm[r] > 0) d.T(r, log.arm[r] - 1) = 1.0;
        auto it = std::find(slots.begin(), slots.end(), log.slot[r]);
        if (it != slots.end()) d.Z(r, it - slots.begin()) = 1.0;
        d.cluster.push_back(log.seeker[r]);
    }
    return d;
}

ojson cf_json(const ControlFunctionFit& f) {
    ojson j = fit_json(f.second);
    j["first_stage_F"] = f.first_stage_F;
    j["weak_first_stage"] = f.weak_first_stage;
    j["bootstrap_reps"] = f.bootstrap_reps;
    j["bootstrap_failed"] = f.bootstrap_failed;
    if (f.ame.size() > 0) j["ame"] = std::vector<double>(f.ame.data(), f.ame.data() + f.ame.size());
    return j;
}

template <typename Fn>
ojson guarded(Fn&& fn) {
    try {
        return fn();
    } catch (const Error& e) {
        // one failed estimator should not hide the others
        return ojson{{"error", e.what()}};
    }
}

ojson estimate_block(const InteractionLog& log, const RunConfig& cfg, int threads) {
    (void)threads;
    const EstimationConfig& e = cfg.estimation;
    ojson j;
    PairDataset d = application_pairs(log, e);
    CfOptions cf;
    cf.bootstrap = e.bootstrap;
    cf.seed = cfg.stage_seed("cf");
    j["ols"] = guarded([&] {
        return fit_json(ols(d.y, with_intercept([&] {
                                  Eigen::MatrixXd X(d.rows(), d.W.cols() + d.Z.cols());
                                  X << d.W, d.Z;
                                  return X;
                              }()),
                            with_intercept([&] {
                                auto n = d.w_names;
                                n.insert(n.end(), d.z_names.begin(), d.z_names.end());
                                return n;
                            }()),
                            d.cluster));
    });
    j["lpm_cf"] = guarded([&] { return cf_json(fit_lpm_cf(d, cf)); });
    j["poisson_cf"] = guarded([&] { return cf_json(fit_poisson_cf(d, cf)); });
    j["two_sls"] = guarded([&] { return fit_json(two_stage_least_squares(d)); });
    j["fe_logit"] = guarded([&] { return fit_json(fit_conditional_logit_fe(d.y, d.W, d.w_names, d.cluster)); });
    return j;
}

void stage_estimate(Session& s) {
    InteractionLog log = s.log();
    const EstimationConfig& e = s.cfg.estimation;
    const Eigen::Index n = static_cast<Eigen::Index>(log.rows());
    if (n == 0) throw DegenerateError("estimate: the interaction log is empty");
    ojson j;

    ojson rf;
    const char* outcomes[] = {"clicked", "applied", "hired"};
    const std::vector<int>* cols[] = {&log.clicked, &log.applied, &log.hired};
    for (int o = 0; o < 3; ++o) {
        Eigen::VectorXd y(n);
        for (Eigen::Index r = 0; r < n; ++r) y[r] = (*cols[o])[r];
        rf[outcomes[o]] = guarded([&] { return fit_json(fit_reduced_form(y, log.arm, log.arm_names, log.slot, log.seeker)); });
    }
    j["reduced_form"] = rf;

    Eigen::VectorXd applied(n), U(n), p(n);
    for (Eigen::Index r = 0; r < n; ++r) {
        applied[r] = log.applied[r];
        U[r] = log.true_U[r];
        p[r] = log.true_p[r];
    }
    ojson st;
    for (bool constrained : {false, true}) {
        st[constrained ? "constrained" : "unconstrained"] = guarded([&] {
            FitResult f = fit_structural_logit(applied, U, p, log.seeker, constrained);
            StructuralBundle b = recover_structural(f);
            ojson x = fit_json(f);
            x["alpha"] = b.alpha;
            x["beta"] = b.beta;
            x["gamma"] = b.gamma;
            x["sigma"] = b.sigma;
            x["kr_bar"] = b.kr_bar;
            return x;
        });
    }
    j["structural"] = st;
    j["application"] = estimate_block(log, s.cfg, s.ctx.threads);

    if (!e.measurement_error.columns.empty() && e.measurement_error.variance > 0) {
        MeasurementErrorSpec me{e.measurement_error.columns, e.measurement_error.variance, s.cfg.stage_seed("noise")};
        j["application_noisy"] = estimate_block(inject_measurement_error(log, me), s.cfg, s.ctx.threads);
    }

    // hazard calibration on application sequences, slot order standing in for time
    const int cc = log.score_index(e.calibration_column);
    std::map<int, std::vector<std::pair<double, std::int64_t>>> applicants;  // vacancy -> (score, seeker)
    for (Eigen::Index r = 0; r < n; ++r)
        if (log.applied[r]) applicants[log.vacancy[r]].push_back({log.scores[cc][r], log.seeker[r]});
    for (auto& [v, list] : applicants)
        std::sort(list.begin(), list.end(), [](const auto& a, const auto& b) {
            return a.first != b.first ? a.first > b.first : a.second < b.second;
        });
    std::map<std::int64_t, std::vector<std::pair<int, ApplicationRecord>>> seq;
    for (Eigen::Index r = 0; r < n; ++r) {
        if (!log.applied[r]) continue;
        const auto& list = applicants[log.vacancy[r]];
        int vr = 1;
        for (const auto& x : list) {
            if (x.second == log.seeker[r]) break;
            ++vr;
        }
        seq[log.seeker[r]].push_back({log.slot[r], {log.scores[cc][r], log.hired[r], vr}});
    }
    std::vector<std::vector<ApplicationRecord>> sequences;
    for (auto& [id, v] : seq) {
        std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
        std::vector<ApplicationRecord> rec;
        for (auto& x : v) rec.push_back(x.second);
        sequences.push_back(std::move(rec));
    }
    ojson hz;
    for (const char* mode : {"none", "application", "two_sided"}) {
        hz[mode] = guarded([&] {
            HazardFit h = fit_hazard_calibration(sequences, parse_rank_mode(mode), e.max_rank);
            ojson x = fit_json(h.fit);
            x["intercept"] = h.intercept;
            x["slope"] = h.slope;
            x["loglik"] = h.loglik;
            x["aic"] = h.aic;
            x["rows"] = h.rows;
            x["alpha_js"] = h.alpha_js;
            x["alpha_v"] = h.alpha_v;
            x["notes"] = h.notes;
            return x;
        });
    }
    hz["selected_mode"] = e.hazard_mode;
    hz["column"] = e.calibration_column;
    j["hazard"] = hz;
    s.write("estimation.json", dump(j), Stage::estimate);
}

std::vector<std::string> welfare_columns(const RunConfig& c) {
    if (!c.welfare.options.score_columns.empty()) return c.welfare.options.score_columns;
    std::vector<std::string> out;
    for (const auto& sp : c.scorers)
        if (sp.kind != "blend") out.push_back(sp.name);
    return out;
}

ojson model_json(const ProbabilityModel& pm) {
    ojson j = fit_json(pm.fit);
    j["intercept"] = pm.intercept;
    ojson z = ojson::array();
    for (std::size_t c = 0; c < pm.z.names.size(); ++c)
        z.push_back({{"column", pm.z.names[c]}, {"mean", pm.z.mean[c]}, {"sd", pm.z.sd[c]}, {"slope", pm.slopes[c]}});
    j["standardized"] = z;
    j["model_notes"] = pm.notes;
    return j;
}

void stage_welfare(Session& s) {
    Market m = s.market();
    ScorerRegistry reg = s.registry();
    InteractionLog log = s.log();
    WelfareOptions opt = s.cfg.welfare.options;
    opt.score_columns = welfare_columns(s.cfg);
    opt.list_length = s.cfg.experiment.list_length;
    SplitSpec split = s.cfg.welfare.split;
    split.seed = s.cfg.stage_seed("welfare");

    std::vector<std::int64_t> ids(log.seeker.begin(), log.seeker.end());
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    PoolScores pool = build_pool_scores(m, reg, ids, opt.score_columns, s.ctx.threads);
    WelfareEstimates w = evaluate_arms(log, pool, split, opt, s.ctx.threads);
    std::vector<std::array<double, 4>> truth = true_arm_means(log);

    CsvWriter cmp({"arm", "metric", "estimate", "ci_low", "ci_high"});
    ojson arms = ojson::array();
    for (std::size_t a = 0; a < w.arms.size(); ++a) {
        ojson metrics;
        for (int k = 0; k < metric_count; ++k) {
            const ArmMetric& am = w.median[a][k];
            cmp.field(w.arms[a]).field(metric_name(k)).field(am.estimate).field(am.ci95_low).field(am.ci95_high)
                .end_row();
            metrics[metric_name(k)] = {{"estimate", am.estimate},
                                       {"ci95", {am.ci95_low, am.ci95_high}},
                                       {"ci99", {am.ci99_low, am.ci99_high}}};
        }
        ojson x{{"arm", w.arms[a]}, {"metrics", metrics}};
        if (a < truth.size())
            x["truth"] = {{"p", truth[a][0]}, {"p_a", truth[a][1]}, {"p_h", truth[a][2]}, {"gamma", truth[a][3]}};
        arms.push_back(x);
    }
    CsvWriter cf({"seeker_id", "rank", "vacancy_id", "gamma_hat"});
    for (const auto& c : w.counterfactual)
        for (std::size_t r = 0; r < c.vacancies.size(); ++r)
            cf.field(c.seeker).field(static_cast<int>(r) + 1).field(c.vacancies[r]).field(c.gamma[r]).end_row();

    // point estimates of every split, for dominance checks
    ojson per_split = ojson::array();
    for (const auto& so : w.per_split) {
        ojson row = ojson::object();
        for (std::size_t a = 0; a < w.arms.size() && a < so.arms.size(); ++a) {
            ojson e = ojson::object();
            for (int k = 0; k < metric_count; ++k) e[metric_name(k)] = so.arms[a][k].estimate;
            row[w.arms[a]] = e;
        }
        per_split.push_back(row);
    }

    ojson j;
    j["splits"] = w.per_split.size();
    j["score_columns"] = opt.score_columns;
    j["resampled_splits"] = w.resampled;
    j["zero_application_flags"] = w.zero_application_flags;
    j["identity_error"] = w.identity_error;
    j["arms"] = arms;
    j["per_split"] = per_split;
    j["hire_given_apply_model"] = model_json(w.first_hire);
    j["apply_model"] = model_json(w.first_apply);
    s.write("arm_comparison.csv", cmp.str(), Stage::welfare);
    s.write("counterfactual.csv", cf.str(), Stage::welfare);
    s.write("welfare.json", dump(j), Stage::welfare);
}

void stage_report(Session& s) {
    ojson j;
    ojson wj = ojson::parse(s.require("welfare.json"));
    ojson fig = ojson::array();
    const char* panels[] = {"p", "p_a", "p_h", "gamma"};
    for (const auto& a : wj.at("arms"))
        for (const char* k : panels) {
            const auto& mm = a.at("metrics").at(k);
            fig.push_back({{"arm", a.at("arm")}, {"metric", k}, {"estimate", mm.at("estimate")},
                           {"ci_low", mm.at("ci95")[0]}, {"ci_high", mm.at("ci95")[1]}});
        }
    j["arm_metrics"] = fig;
    j["welfare_gap"] = [&] {
        ojson g = ojson::array();
        for (const auto& a : wj.at("arms"))
            g.push_back({{"arm", a.at("arm")}, {"gamma_gap", a.at("metrics").at("gamma_gap").at("estimate")}});
        return g;
    }();

    ojson ej = ojson::parse(s.require("estimation.json"));
    ojson hi;
    auto pick = [&](const ojson& fit, const std::string& name) -> ojson {
        if (!fit.contains("coefficients")) return nullptr;
        for (const auto& c : fit.at("coefficients"))
            if (c.at("name") == name) return {{"coef", c.at("coef")}, {"se", c.at("se")}};
        return nullptr;
    };
    const std::string inv_p = "inv_p_" + s.cfg.estimation.hire_column;
    for (const char* model : {"ols", "lpm_cf", "poisson_cf", "two_sls", "fe_logit"}) {
        const ojson& f = ej.at("application").at(model);
        hi[model] = {{s.cfg.estimation.utility_column, pick(f, s.cfg.estimation.utility_column)},
                     {inv_p, pick(f, inv_p)}};
    }
    hi["structural"] = ej.at("structural");
    hi["hazard"] = ojson::object();
    for (const char* mode : {"none", "application", "two_sided"}) {
        const ojson& h = ej.at("hazard").at(mode);
        if (h.contains("error")) hi["hazard"][mode] = h;
        else hi["hazard"][mode] = {{"intercept", h.at("intercept")}, {"slope", h.at("slope")}, {"aic", h.at("aic")}};
    }
    j["estimation"] = hi;

    // forward-looking seekers on the first few seekers' true pools
    Market m = s.market();
    const NonMyopicConfig& nm = s.cfg.nonmyopic;
    const std::size_t n = std::min<std::size_t>(nm.seekers, m.seekers.size());
    std::vector<NonMyopicSummary> sums(n);
    parallel_for(n, s.ctx.threads, [&](std::size_t i) {
        SeekerRow row = m.row(i);
        VacancyDistribution d = m.distribution(row);
        AdjustedValueProblem prob = AdjustedValueProblem::make(
            m.model, d, std::vector<double>(row.gamma.data(), row.gamma.data() + row.gamma.size()), nm.share);
        sums[i] = analyze_nonmyopic(prob);
    });
    ojson rows = ojson::array();
    for (std::size_t i = 0; i < n; ++i) {
        const auto& x = sums[i];
        rows.push_back({{"seeker_id", static_cast<std::int64_t>(i)},
                        {"rV0", x.rV0},
                        {"rV1_myopic", x.rV1_myopic},
                        {"rV1_adj", x.rV1_adj},
                        {"delta_m", x.delta_m},
                        {"delta_adj", x.delta_adj},
                        {"theta_m", x.theta_m},
                        {"theta_adj", x.theta_adj},
                        {"bracket_lower", x.bracket.lower},
                        {"bracket_upper", x.bracket.upper},
                        {"U0_star_1", x.U0_star_1},
                        {"U1_star_1", x.U1_star_1}});
    }
    ojson nmj;
    nmj["share"] = nm.share;
    nmj["seekers"] = rows;
    if (n > 0) {
        std::vector<double> xs(nm.x_steps);
        for (int k = 0; k < nm.x_steps; ++k)
            xs[k] = nm.x_steps == 1 ? nm.x_min : nm.x_min + (nm.x_max - nm.x_min) * k / (nm.x_steps - 1);
        SeekerRow row = m.row(0);
        ojson scan = ojson::array();
        for (const auto& r : shift_scan(m.model, m.distribution(row), nm.share, xs))
            scan.push_back({{"x", r.x}, {"rV1_adj", r.rV1_adj}, {"residual", r.residual}});
        nmj["shift_scan_seeker0"] = scan;
    }
    j["nonmyopic"] = nmj;
    s.write("report.json", dump(j), Stage::report);
}

void stage_figures(Session& s) {
    std::vector<std::string> keys = s.ctx.figures.empty() ? figure_keys() : s.ctx.figures;
    for (const auto& k : keys) {
        if (std::find(figure_keys().begin(), figure_keys().end(), k) == figure_keys().end())
            throw UsageError("unknown figure key '" + k + "'");
    }
    for (const auto& k : keys) {
        if (k == "m-curves") s.write("figure_m_curves.csv", m_curves_csv(), Stage::figure_data);
        else if (k == "gamma-surface")
            s.write("figure_gamma_surface.csv", gamma_surface_csv(s.cfg.figures), Stage::figure_data);
        else if (k == "arm-comparison")
            s.write("figure_arm_comparison.csv", s.require("arm_comparison.csv"), Stage::figure_data);
        else if (k == "rank-divergence")
            s.write("figure_rank_divergence.csv", s.require("rank_divergence.csv"), Stage::figure_data);
    }
}

}  // namespace

Stage parse_stage(const std::string& s) {
    for (const auto& [st, name] : kStages)
        if (s == name) return st;
    throw UsageError("unknown stage '" + s + "'");
}

const char* stage_name(Stage s) {
    for (const auto& [st, name] : kStages)
        if (st == s) return name;
    return "?";
}

void run_stage(Stage stage, const RunContext& ctx) {
    Session s(ctx);
    if (stage == Stage::figure_data)
        for (const auto& k : ctx.figures)
            if (std::find(figure_keys().begin(), figure_keys().end(), k) == figure_keys().end())
                throw UsageError("unknown figure key '" + k + "'");
    s.begin(stage);
    switch (stage) {
        case Stage::simulate: stage_simulate(s); break;
        case Stage::train: stage_train(s); break;
        case Stage::rank: stage_rank(s); break;
        case Stage::experiment: stage_experiment(s); break;
        case Stage::estimate: stage_estimate(s); break;
        case Stage::welfare: stage_welfare(s); break;
        case Stage::report: stage_report(s); break;
        case Stage::figure_data: stage_figures(s); break;
    }
    s.finish();
}

const std::vector<std::string>& figure_keys() {
    static const std::vector<std::string> k{"m-curves", "gamma-surface", "arm-comparison", "rank-divergence"};
    return k;
}

std::vector<double> m_curve_grid() {
    // two even pieces that meet at 0.5 so the midpoint is an exact row
    std::vector<double> g;
    const int lo = 106, hi = 95;
    for (int i = 0; i < lo; ++i) g.push_back(0.001 + (0.5 - 0.001) * i / (lo - 1));
    for (int i = 1; i < hi; ++i) g.push_back(0.5 + (0.95 - 0.5) * i / (hi - 1));
    g[lo - 1] = 0.5;
    g.back() = 0.95;
    return g;
}

std::string m_curves_csv() {
    const ShockDistribution gum = ShockDistribution::matched(ShockFamily::gumbel, 1.0);
    const ShockDistribution nor = ShockDistribution::matched(ShockFamily::normal, 1.0);
    CsvWriter w({"p_a", "m_logistic", "m_gumbel", "m_normal"});
    for (double pa : m_curve_grid())
        w.field(pa).field(m_factor(pa)).field(m_curve(pa, gum)).field(m_curve(pa, nor)).end_row();
    return w.str();
}

std::string gamma_surface_csv(const FigureConfig& f) {
    CsvWriter w({"p", "delta", "sigma", "p_a", "gamma"});
    for (int i = 0; i < f.surface_p; ++i) {
        double p = static_cast<double>(i + 1) / f.surface_p;
        for (int k = 0; k < f.surface_delta; ++k) {
            double d = f.delta_min + (f.delta_max - f.delta_min) * k / (f.surface_delta - 1);
            w.field(p).field(d).field(f.sigma).field(application_probability(d, f.sigma))
                .field(gamma_closed(p, d, f.sigma)).end_row();
        }
    }
    return w.str();
}

}  // namespace wr
