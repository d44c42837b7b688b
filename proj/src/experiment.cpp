#include "wrank/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "wrank/errors.hpp"
#include "wrank/parallel.hpp"
#include "wrank/rng.hpp"

namespace wr {

BilinearCache BilinearCache::build(const BilinearScorer& s, const Eigen::MatrixXd& Y) {
    if (Y.cols() != s.vacancy_dim()) throw SchemaError("vacancy features do not match the scorer blocks");
    BilinearCache c;
    c.scorer = &s;
    int off = 0;
    for (const auto& b : s.blocks) {
        Eigen::MatrixXd psi = (Y.middleCols(off, b.shape.vacancy_dim) * b.V.transpose()).rowwise() + b.e.transpose();
        c.Apsi.push_back(psi * b.A.transpose());
        off += b.shape.vacancy_dim;
    }
    return c;
}

Eigen::VectorXd BilinearCache::scores(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(Apsi.empty() ? 0 : Apsi.front().rows());
    int off = 0;
    for (std::size_t b = 0; b < Apsi.size(); ++b) {
        const auto& blk = scorer->blocks[b];
        Eigen::VectorXd phi = blk.W * x.segment(off, blk.shape.seeker_dim) + blk.c;
        out += Apsi[b] * phi;
        off += blk.shape.seeker_dim;
    }
    return out;
}

int ScorerRegistry::index(const std::string& name) const {
    for (std::size_t k = 0; k < specs.size(); ++k)
        if (specs[k].name == name) return static_cast<int>(k);
    return -1;
}

bool ScorerRegistry::needs_bilinear() const {
    return std::any_of(specs.begin(), specs.end(), [](const ScorerSpec& s) { return s.kind == "bilinear"; });
}

void ScorerRegistry::validate() const {
    for (std::size_t k = 0; k < specs.size(); ++k) {
        const ScorerSpec& s = specs[k];
        if (s.name.empty()) throw ConfigError("scorer without a name");
        if (index(s.name) != static_cast<int>(k)) throw ConfigError("duplicate scorer '" + s.name + "'");
        if (s.kind == "signal") {
            static const char* targets[] = {"p", "pa", "ph", "gamma", "utility"};
            if (std::find(std::begin(targets), std::end(targets), s.target) == std::end(targets))
                throw ConfigError("scorer '" + s.name + "': unknown signal target '" + s.target + "'");
            if (!(s.noise_sd >= 0)) throw ConfigError("scorer '" + s.name + "': noise_sd must be >= 0");
        } else if (s.kind == "blend") {
            if (s.components.empty()) throw ConfigError("scorer '" + s.name + "': blend needs components");
            for (const auto& [c, w] : s.components) {
                int at = index(c);
                if (at < 0 || specs[at].kind == "blend")
                    throw ConfigError("scorer '" + s.name + "': blend component '" + c + "' must be a non-blend scorer");
            }
        } else if (s.kind != "criteria" && s.kind != "bilinear") {
            throw ConfigError("scorer '" + s.name + "': unknown kind '" + s.kind + "'");
        }
    }
}

Eigen::MatrixXd ScorerRegistry::score_columns(const Market& m, std::size_t seeker, const SeekerRow& row,
                                              const BilinearCache* cache) const {
    const Eigen::Index J = row.p.size();
    Eigen::MatrixXd out(J, static_cast<Eigen::Index>(specs.size()));
    const double sigma = m.model.sigma;
    for (std::size_t k = 0; k < specs.size(); ++k) {
        const ScorerSpec& s = specs[k];
        if (s.kind == "criteria") {
            out.col(k) = row.u_score;
        } else if (s.kind == "bilinear") {
            if (!cache) throw InputError("scorer '" + s.name + "' needs a trained bilinear scorer");
            Eigen::VectorXd raw = cache->scores(m.seekers[seeker].skill);
            if (s.calibrated)
                for (Eigen::Index j = 0; j < J; ++j) raw[j] = apply_calibration(raw[j], calibration);
            out.col(k) = raw;
        } else if (s.kind == "signal") {
            Stream rng(m.spec.seed, static_cast<std::uint64_t>(m.seekers[seeker].id), hash_name("signal:" + s.name));
            for (Eigen::Index j = 0; j < J; ++j) {
                double base = 0.0;
                if (s.target == "p") base = std::log(row.p[j] / (1.0 - row.p[j]));
                else if (s.target == "pa") base = row.delta[j] / sigma;
                else if (s.target == "ph") {
                    double ph = row.p[j] * row.pa[j];
                    base = std::log(ph) - std::log1p(-ph);
                } else if (s.target == "gamma") base = std::log(std::max(row.gamma[j], 1e-300));
                else base = row.U[j];
                out(j, k) = base + s.noise_sd * rng.normal();
            }
        }
    }
    for (std::size_t k = 0; k < specs.size(); ++k) {
        if (specs[k].kind != "blend") continue;
        out.col(k).setZero();
        for (const auto& [c, w] : specs[k].components) out.col(k) += w * out.col(index(c));
    }
    return out;
}

void ExperimentDesign::validate(const ScorerRegistry& reg) const {
    if (arms.empty()) throw ConfigError("experiment: no arms");
    if (shares.size() != arms.size()) throw ConfigError("experiment: one share per arm required");
    double total = 0.0;
    for (double s : shares) {
        if (!(s >= 0)) throw ConfigError("experiment: negative arm share");
        total += s;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ConfigError("experiment: arm shares must sum to 1");
    auto need = [&](const std::string& arm, const std::string& sc) {
        if (reg.index(sc) < 0) throw ConfigError("arm '" + arm + "' names unregistered scorer '" + sc + "'");
    };
    for (const auto& a : arms) {
        if (a.kind == "top") need(a.name, a.scorer);
        else if (a.kind == "mix") {
            need(a.name, a.p_scorer);
            need(a.name, a.u_scorer);
            if (!(a.fraction >= 0 && a.fraction <= 1)) throw ConfigError("arm '" + a.name + "': fraction outside [0,1]");
        } else
            throw ConfigError("arm '" + a.name + "': unknown kind '" + a.kind + "'");
    }
    if (list_length < 1 || n_preselect < list_length) throw ConfigError("experiment: need 1 <= list_length <= n_preselect");
    if (!(dropout >= 0 && dropout < 1)) throw ConfigError("experiment: dropout outside [0,1)");
    if (!(enrollment > 0 && enrollment <= 1)) throw ConfigError("experiment: enrollment outside (0,1]");
    if (!(click_offset >= 0)) throw ConfigError("experiment: click offset must be >= 0");
}

Assignment assign_treatments(const std::vector<SeekerProfile>& seekers, const ExperimentDesign& design,
                             const StrataSpec& strata, std::uint64_t seed) {
    const int A = static_cast<int>(design.arms.size());
    if (A == 0) throw ConfigError("assignment: no arms");
    Assignment out;
    out.arm.assign(seekers.size(), 0);
    out.enrolled.assign(seekers.size(), 0);
    const int n_strata = strata.occupation * strata.support * strata.location;
    std::vector<std::vector<std::size_t>> members(n_strata);
    for (std::size_t i = 0; i < seekers.size(); ++i) {
        const auto& s = seekers[i];
        if (s.occupation < 0 || s.occupation >= strata.occupation || s.support < 0 || s.support >= strata.support ||
            s.location < 0 || s.location >= strata.location)
            throw InputError("seeker " + std::to_string(s.id) + " has a stratum label outside the declared sets");
        members[(s.occupation * strata.support + s.support) * strata.location + s.location].push_back(i);
    }
    const std::uint64_t tag = hash_name("assign");
    for (int g = 0; g < n_strata; ++g) {
        auto& mem = members[g];
        if (mem.empty()) {
            ++out.strata_empty;
            continue;
        }
        ++out.strata_used;
        Stream rng(seed, static_cast<std::uint64_t>(g), tag);
        const double n = static_cast<double>(mem.size());
        std::vector<int> count(A);
        std::vector<std::pair<double, double>> key(A);  // (fractional part, random tie-break)
        int assigned = 0;
        for (int a = 0; a < A; ++a) {
            double target = design.shares[a] * n;
            count[a] = static_cast<int>(std::floor(target + 1e-9));
            assigned += count[a];
            key[a] = {target - count[a], rng.uniform()};
        }
        std::vector<int> order(A);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](int x, int y) {
            // remainders equal up to rounding are ordered at random, not by arm index
            if (std::abs(key[x].first - key[y].first) > 1e-9) return key[x].first > key[y].first;
            return key[x].second > key[y].second;
        });
        for (int r = 0; r < static_cast<int>(mem.size()) - assigned; ++r) ++count[order[r % A]];
        std::vector<int> labels;
        for (int a = 0; a < A; ++a) labels.insert(labels.end(), count[a], a);
        std::shuffle(labels.begin(), labels.end(), rng.engine());
        for (std::size_t k = 0; k < mem.size(); ++k) out.arm[mem[k]] = labels[k];
    }
    const std::uint64_t etag = hash_name("enroll");
    for (std::size_t i = 0; i < seekers.size(); ++i) {
        Stream rng(seed, static_cast<std::uint64_t>(seekers[i].id), etag);
        out.enrolled[i] = design.enrollment >= 1.0 || rng.bernoulli(design.enrollment);
    }
    return out;
}

Eigen::MatrixXd treatment_dummies(const Assignment& a, int n_arms) {
    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(a.arm.size(), std::max(n_arms - 1, 0));
    for (std::size_t i = 0; i < a.arm.size(); ++i)
        if (a.arm[i] > 0) T(i, a.arm[i] - 1) = 1.0;
    return T;
}

int InteractionLog::score_index(const std::string& name) const {
    for (std::size_t k = 0; k < score_names.size(); ++k)
        if (score_names[k] == name) return static_cast<int>(k);
    return -1;
}

void InteractionLog::check_invariants() const {
    for (std::size_t r = 0; r < rows(); ++r) {
        if (applied[r] && !clicked[r]) throw SchemaError("row " + std::to_string(r) + ": applied without click");
        if (hired[r] && !applied[r]) throw SchemaError("row " + std::to_string(r) + ": hired without application");
    }
}

RankedList arm_list(const ArmSpec& arm, const ScorerRegistry& reg, const Eigen::MatrixXd& cols,
                    const ExperimentDesign& design, std::int64_t seeker, const std::vector<char>& available) {
    const int J = static_cast<int>(cols.rows());
    RankedList pre;
    if (arm.kind == "top") {
        Eigen::VectorXd s = cols.col(reg.index(arm.scorer));
        pre = rank_top_k(std::span<const double>(s.data(), J), design.n_preselect, seeker);
    } else {
        Eigen::VectorXd p = cols.col(reg.index(arm.p_scorer));
        Eigen::VectorXd u = cols.col(reg.index(arm.u_scorer));
        std::span<const double> ps(p.data(), J), us(u.data(), J);
        RankedList ur = rank_top_k(us, J), pr = rank_top_k(ps, J);
        ConsiderationSet cs = consideration_set(ur, pr, design.cutoffs);
        pre = mix_rank(cs, arm.fraction, ps, us, design.n_preselect, seeker);
    }
    return display_list(pre, available, design.list_length);
}

ExperimentRun run_experiment(const Market& m, const Assignment& a, const ExperimentDesign& design,
                             const ScorerRegistry& reg, std::uint64_t seed, int threads) {
    design.validate(reg);
    reg.validate();
    std::optional<BilinearCache> cache;
    if (reg.needs_bilinear()) {
        if (!reg.bilinear) throw InputError("experiment needs a trained bilinear scorer");
        cache = BilinearCache::build(*reg.bilinear, m.vacancy_skills());
    }
    const double sigma = m.model.sigma;
    const std::size_t N = m.seekers.size();
    const int C = static_cast<int>(reg.specs.size());
    std::vector<InteractionLog> parts(N);
    const std::uint64_t avail_tag = hash_name("availability"), shock_tag = hash_name("shock");
    parallel_for(N, threads, [&](std::size_t i) {
        if (!a.enrolled[i]) return;
        const SeekerProfile& s = m.seekers[i];
        SeekerRow row = m.row(i);
        Eigen::MatrixXd cols = reg.score_columns(m, i, row, cache ? &*cache : nullptr);
        std::vector<char> available(row.p.size(), 1);
        if (design.dropout > 0) {
            Stream av(seed, static_cast<std::uint64_t>(s.id), avail_tag);
            for (auto& x : available) x = !av.bernoulli(design.dropout);
        }
        const ArmSpec& arm = design.arms[a.arm[i]];
        RankedList list = arm_list(arm, reg, cols, design, s.id, available);
        Stream rng(seed, static_cast<std::uint64_t>(s.id), shock_tag);
        InteractionLog& L = parts[i];
        L.scores.resize(C);
        for (std::size_t r = 0; r < list.size(); ++r) {
            int j = list.entries[r].vacancy;
            double eps = rng.logistic(sigma);
            double u_hire = rng.uniform();
            double x = row.delta[j] + eps;
            int applied = x > 0;
            L.seeker.push_back(s.id);
            L.arm.push_back(a.arm[i]);
            L.vacancy.push_back(j);
            L.slot.push_back(static_cast<int>(r) + 1);
            L.clicked.push_back(x + design.click_offset * sigma > 0);
            L.applied.push_back(applied);
            L.hired.push_back(applied && u_hire < row.p[j]);
            L.short_list.push_back(list.short_list);
            L.true_p.push_back(row.p[j]);
            L.true_U.push_back(row.U[j]);
            L.true_pa.push_back(row.pa[j]);
            L.true_gamma.push_back(row.gamma[j]);
            for (int k = 0; k < C; ++k) L.scores[k].push_back(cols(j, k));
        }
    });
    ExperimentRun run;
    InteractionLog& log = run.log;
    for (const auto& arm : design.arms) log.arm_names.push_back(arm.name);
    for (const auto& s : reg.specs) log.score_names.push_back(s.name);
    log.scores.resize(C);
    auto append = [](auto& dst, const auto& src) { dst.insert(dst.end(), src.begin(), src.end()); };
    for (std::size_t i = 0; i < N; ++i) {
        const InteractionLog& p = parts[i];
        if (p.seeker.empty()) continue;
        if (p.short_list.front()) ++run.short_lists;
        append(log.seeker, p.seeker);
        append(log.arm, p.arm);
        append(log.vacancy, p.vacancy);
        append(log.slot, p.slot);
        append(log.clicked, p.clicked);
        append(log.applied, p.applied);
        append(log.hired, p.hired);
        append(log.short_list, p.short_list);
        append(log.true_p, p.true_p);
        append(log.true_U, p.true_U);
        append(log.true_pa, p.true_pa);
        append(log.true_gamma, p.true_gamma);
        for (int k = 0; k < C; ++k) append(log.scores[k], p.scores[k]);
    }
    return run;
}

InteractionLog inject_measurement_error(InteractionLog log, const MeasurementErrorSpec& spec) {
    if (!(spec.variance >= 0)) throw ConfigError("measurement error variance must be >= 0");
    static const char* protected_cols[] = {"seeker", "arm", "vacancy", "slot", "clicked", "applied", "hired",
                                           "true_p", "true_U", "true_pa", "true_gamma"};
    for (const auto& c : spec.columns) {
        if (std::find(std::begin(protected_cols), std::end(protected_cols), c) != std::end(protected_cols))
            throw SchemaError("column '" + c + "' is not a score column and cannot be perturbed");
        if (log.score_index(c) < 0) throw SchemaError("no score column named '" + c + "'");
    }
    if (spec.variance == 0.0) return log;
    const double sd = std::sqrt(spec.variance);
    for (const auto& c : spec.columns) {
        Stream rng(spec.seed, 0, hash_name("noise:" + c));
        for (double& v : log.scores[log.score_index(c)]) v += sd * rng.normal();
    }
    return log;
}

namespace {

// Steps until the first success of a per-step Bernoulli(prob), at least 1.
std::int64_t geometric_steps(Stream& rng, double prob) {
    if (prob >= 1.0) return 1;
    if (prob <= 0.0) return std::numeric_limits<std::int64_t>::max() / 4;
    double g = std::floor(std::log(rng.uniform()) / std::log1p(-prob));
    return static_cast<std::int64_t>(std::min(g, 1e15)) + 1;
}

std::size_t draw_atom(Stream& rng, const VacancyDistribution& d) {
    double u = rng.uniform(), acc = 0.0;
    for (std::size_t a = 0; a < d.size(); ++a) {
        acc += d.weights[a];
        if (u < acc) return a;
    }
    return d.size() - 1;
}

}  // namespace

SpellRecord simulate_sequential_search(const VacancyDistribution& dist, const ModelParams& m, double rV0,
                                       const SearchSimOptions& opt, std::uint64_t seed, std::uint64_t spell_id) {
    m.validate();
    dist.validate();
    if (!(opt.dt > 0) || !(opt.horizon >= opt.dt)) throw ConfigError("search simulation: need 0 < dt <= horizon");
    Stream rng(seed, spell_id, hash_name("spell"));
    SpellRecord rec;
    const std::int64_t total = static_cast<std::int64_t>(std::ceil(opt.horizon / opt.dt));
    const double rho = std::exp(-m.r * opt.dt);
    const double arrive = std::min(m.alpha0 * opt.dt, 1.0);
    const double separate = std::min(m.q * opt.dt, 1.0);
    // discounted flow x received over steps [n0, n0 + g)
    auto flow = [&](double x, std::int64_t n0, std::int64_t g) {
        return x * opt.dt * std::pow(rho, static_cast<double>(n0)) * (1.0 - std::pow(rho, static_cast<double>(g))) /
               (1.0 - rho);
    };
    std::int64_t n = 0;
    bool employed = false;
    double wage = 0.0;
    while (n < total) {
        std::int64_t g = geometric_steps(rng, employed ? separate : arrive);
        std::int64_t run = std::min(g, total - n);
        rec.discounted_utility += flow(employed ? wage : m.u_b, n, run);
        n += run;
        if (run < g) break;
        double disc = std::pow(rho, static_cast<double>(n - 1));
        if (employed) {
            employed = false;
            continue;
        }
        const VacancyLottery& v = dist.atoms[draw_atom(rng, dist)];
        double eps = rng.logistic(m.sigma);
        if (surplus(v.U, v.p, rV0, m) + eps <= 0) continue;
        ++rec.applications;
        rec.discounted_utility -= m.k * disc;
        if (rng.bernoulli(v.p)) {
            employed = true;
            wage = v.U + eps;
            if (!rec.hired) {
                rec.hired = true;
                rec.hire_time = n * opt.dt;
            }
        } else {
            ++rec.rejections;
            rec.discounted_utility -= m.R * disc;
        }
    }
    return rec;
}

}  // namespace wr
