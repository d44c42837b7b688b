#include "wrank/welfare.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>

#include "wrank/errors.hpp"
#include "wrank/parallel.hpp"
#include "wrank/rng.hpp"
#include "wrank/search_model.hpp"

namespace wr {

Standardizer standardize_scores(const InteractionLog& log, const std::vector<char>& mask,
                                const std::vector<std::string>& columns) {
    if (mask.size() != log.rows()) throw InputError("standardize: one mask entry per row required");
    Standardizer z;
    z.names = columns;
    for (const auto& name : columns) {
        int c = log.score_index(name);
        if (c < 0) throw SchemaError("interaction log has no score column '" + name + "'");
        const auto& v = log.scores[c];
        double n = 0.0, s = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i)
            if (mask[i]) {
                n += 1.0;
                s += v[i];
            }
        if (n < 2) throw InputError("standardize: estimation sample has fewer than two rows");
        double mean = s / n, ss = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i)
            if (mask[i]) ss += (v[i] - mean) * (v[i] - mean);
        z.mean.push_back(mean);
        z.sd.push_back(std::sqrt(ss / n));  // 0 marks a column without spread
    }
    return z;
}

namespace {

enum class Step { hire, apply };

ProbabilityModel fit_step(Step step, const InteractionLog& log, const std::vector<char>& mask, const Standardizer& z,
                          const WelfareOptions& opt) {
    const char* what = step == Step::hire ? "hire-given-apply model" : "application model";
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < log.rows(); ++i)
        if (mask[i] && (step == Step::apply || log.applied[i])) rows.push_back(i);
    const auto& outcome = step == Step::hire ? log.hired : log.applied;
    std::size_t events = 0;
    for (auto i : rows) events += outcome[i] ? 1 : 0;
    if (static_cast<int>(rows.size()) < opt.min_rows)
        throw DegenerateError(std::string(what) + ": only " + std::to_string(rows.size()) + " estimation rows");
    if (events == 0) throw DegenerateError(std::string(what) + ": no events in the estimation sample");

    ProbabilityModel pm;
    pm.z = z;
    std::vector<std::string> names{"const"};
    for (std::size_t c = 0; c < z.names.size(); ++c) {
        int lc = log.score_index(z.names[c]);
        if (lc < 0) throw SchemaError("interaction log has no score column '" + z.names[c] + "'");
        pm.log_columns.push_back(lc);
        if (z.sd[c] > 0.0) {
            pm.active.push_back(static_cast<int>(c));
            names.push_back(z.names[c]);
        } else {
            pm.notes.push_back("score '" + z.names[c] + "' has no spread; left out");
        }
    }
    // slot dummies, keeping only levels with both outcomes present
    std::vector<int> levels;
    if (opt.slot_controls) {
        std::map<int, std::pair<int, int>> tally;  // slot -> (rows, events)
        for (auto i : rows) {
            auto& t = tally[log.slot[i]];
            ++t.first;
            t.second += outcome[i] ? 1 : 0;
        }
        bool first = true;
        for (const auto& [slot, t] : tally) {
            if (first) {  // lowest slot is the reference level
                first = false;
                continue;
            }
            if (t.second > 0 && t.second < t.first) {
                levels.push_back(slot);
                names.push_back("slot_" + std::to_string(slot));
            } else {
                pm.notes.push_back("slot_" + std::to_string(slot) + " has no outcome variation; dummy dropped");
            }
        }
    }
    const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
    const Eigen::Index na = static_cast<Eigen::Index>(pm.active.size());
    Eigen::MatrixXd X = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(names.size()));
    Eigen::VectorXd y(n);
    std::vector<std::int64_t> cl(n);
    for (Eigen::Index r = 0; r < n; ++r) {
        std::size_t i = rows[r];
        X(r, 0) = 1.0;
        for (Eigen::Index a = 0; a < na; ++a) {
            int c = pm.active[a];
            X(r, 1 + a) = z.apply(c, log.scores[pm.log_columns[c]][i]);
        }
        auto it = std::find(levels.begin(), levels.end(), log.slot[i]);
        if (it != levels.end()) X(r, 1 + na + (it - levels.begin())) = 1.0;
        y[r] = outcome[i] ? 1.0 : 0.0;
        cl[r] = log.seeker[i];
    }
    pm.fit = fit_logit(y, X, names, cl);
    pm.intercept = pm.fit.coef[0];
    for (std::size_t k = 0; k < levels.size(); ++k) {
        Eigen::Index col = 1 + na + static_cast<Eigen::Index>(k);
        pm.intercept += pm.fit.coef[col] * X.col(col).mean();
    }
    pm.slopes = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(z.names.size()));
    for (Eigen::Index a = 0; a < na; ++a) pm.slopes[pm.active[a]] = pm.fit.coef[1 + a];
    return pm;
}

}  // namespace

ProbabilityModel fit_hire_given_apply(const InteractionLog& log, const std::vector<char>& mask,
                                      const Standardizer& z, const WelfareOptions& opt) {
    return fit_step(Step::hire, log, mask, z, opt);
}

ProbabilityModel fit_apply(const InteractionLog& log, const std::vector<char>& mask, const Standardizer& z,
                           const WelfareOptions& opt) {
    return fit_step(Step::apply, log, mask, z, opt);
}

double gamma_hat(double p_hat, double pa_hat) {
    if (!(p_hat >= 0.0 && p_hat <= 1.0)) throw DomainError("gamma_hat: p outside [0,1]");
    if (!(pa_hat >= 0.0)) throw DomainError("gamma_hat: p_a must be >= 0");
    if (!(pa_hat < 1.0)) throw DomainError("gamma_hat: p_a = 1 gives an unbounded welfare score");
    return p_hat * -std::log1p(-pa_hat);
}

OptimalSet optimal_set(const std::vector<double>& pool_gamma, int k) {
    if (k < 1) throw ConfigError("optimal set size must be >= 1");
    OptimalSet out;
    const int n = static_cast<int>(pool_gamma.size());
    const int take = std::min(k, n);
    out.short_list = n < k;
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::partial_sort(idx.begin(), idx.begin() + take, idx.end(), [&](int a, int b) {
        if (pool_gamma[a] != pool_gamma[b]) return pool_gamma[a] > pool_gamma[b];
        return a < b;
    });
    out.vacancies.assign(idx.begin(), idx.begin() + take);
    for (int j : out.vacancies) out.gamma.push_back(pool_gamma[j]);
    return out;
}

std::vector<double> optimal_gaps(std::vector<double> displayed, const OptimalSet& best) {
    std::sort(displayed.begin(), displayed.end(), std::greater<>());
    std::vector<double> gaps(displayed.size(), 0.0);
    for (std::size_t r = 0; r < displayed.size(); ++r) {
        // displayed lists longer than the optimal set compare against its last entry
        double star = best.gamma.empty() ? displayed[r] : best.gamma[std::min(r, best.gamma.size() - 1)];
        gaps[r] = std::max(star - displayed[r], 0.0);
    }
    return gaps;
}

const Eigen::MatrixXf& PoolScores::of(std::int64_t seeker) const {
    auto it = index.find(seeker);
    if (it == index.end()) throw InputError("no pool scores for seeker " + std::to_string(seeker));
    return columns[it->second];
}

PoolScores build_pool_scores(const Market& m, const ScorerRegistry& reg, const std::vector<std::int64_t>& seekers,
                             const std::vector<std::string>& names, int threads) {
    PoolScores out;
    out.names = names;
    std::vector<int> cols;
    for (const auto& n : names) {
        int c = reg.index(n);
        if (c < 0) throw SchemaError("no registered scorer named '" + n + "'");
        cols.push_back(c);
    }
    std::optional<BilinearCache> cache;
    if (reg.needs_bilinear()) {
        if (!reg.bilinear) throw InputError("pool scores need a trained bilinear scorer");
        cache = BilinearCache::build(*reg.bilinear, m.vacancy_skills());
    }
    out.columns.resize(seekers.size());
    for (std::size_t k = 0; k < seekers.size(); ++k) out.index[seekers[k]] = k;
    parallel_for(seekers.size(), threads, [&](std::size_t k) {
        std::size_t i = static_cast<std::size_t>(seekers[k]);
        if (i >= m.seekers.size()) throw InputError("pool scores: seeker id out of range");
        Eigen::MatrixXd all = reg.score_columns(m, i, m.row(i), cache ? &*cache : nullptr);
        Eigen::MatrixXf sel(all.rows(), static_cast<Eigen::Index>(cols.size()));
        for (std::size_t c = 0; c < cols.size(); ++c) sel.col(c) = all.col(cols[c]).cast<float>();
        out.columns[k] = std::move(sel);
    });
    return out;
}

void SplitSpec::validate() const {
    if (splits < 1) throw ConfigError("welfare: splits must be >= 1");
    if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("welfare: split fraction must lie in (0,1)");
    if (bootstrap < 0) throw ConfigError("welfare: bootstrap replications must be >= 0");
}

const char* metric_name(int metric) {
    static const char* names[] = {"p", "p_a", "p_h", "gamma", "gamma_gap"};
    if (metric < 0 || metric >= metric_count) throw InputError("metric index out of range");
    return names[metric];
}

namespace {

const double kZ95 = 1.959963984540054;
const double kZ99 = 2.5758293035489004;

struct SeekerTotals {
    std::array<double, metric_count> sum{};
    double count = 0.0;
};

ArmMetric cluster_mean(const std::vector<SeekerTotals>& g, int metric) {
    ArmMetric out;
    double N = 0.0, S = 0.0;
    for (const auto& t : g) {
        N += t.count;
        S += t.sum[metric];
    }
    if (!(N > 0)) return out;
    out.estimate = S / N;
    double v = 0.0;
    for (const auto& t : g) {
        double e = t.sum[metric] - t.count * out.estimate;
        v += e * e;
    }
    const double G = static_cast<double>(g.size());
    double se = G > 1 ? std::sqrt(G / (G - 1.0) * v) / N : 0.0;
    out.ci95_low = out.estimate - kZ95 * se;
    out.ci95_high = out.estimate + kZ95 * se;
    out.ci99_low = out.estimate - kZ99 * se;
    out.ci99_high = out.estimate + kZ99 * se;
    return out;
}

double quantile_sorted(const std::vector<double>& v, double q) {
    if (v.empty()) return 0.0;
    double pos = q * static_cast<double>(v.size() - 1);
    std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    std::size_t hi = std::min(lo + 1, v.size() - 1);
    double w = pos - static_cast<double>(lo);
    return v[lo] * (1.0 - w) + v[hi] * w;
}

ArmMetric bootstrap_mean(const std::vector<SeekerTotals>& g, int metric, int reps, Stream& rng) {
    ArmMetric out = cluster_mean(g, metric);
    if (reps <= 0 || g.size() < 2) return out;
    std::vector<double> draws(reps);
    const std::uint64_t G = g.size();
    for (int b = 0; b < reps; ++b) {
        double N = 0.0, S = 0.0;
        for (std::uint64_t k = 0; k < G; ++k) {
            const auto& t = g[rng.below(G)];
            N += t.count;
            S += t.sum[metric];
        }
        draws[b] = N > 0 ? S / N : 0.0;
    }
    std::sort(draws.begin(), draws.end());
    out.ci95_low = quantile_sorted(draws, 0.025);
    out.ci95_high = quantile_sorted(draws, 0.975);
    out.ci99_low = quantile_sorted(draws, 0.005);
    out.ci99_high = quantile_sorted(draws, 0.995);
    return out;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    if (n == 0) return 0.0;
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct SeekerIndex {
    std::vector<std::int64_t> ids;
    std::vector<std::vector<std::size_t>> rows;
    std::vector<int> arm;
};

SeekerIndex index_seekers(const InteractionLog& log) {
    std::map<std::int64_t, std::vector<std::size_t>> by;
    for (std::size_t i = 0; i < log.rows(); ++i) by[log.seeker[i]].push_back(i);
    SeekerIndex s;
    for (auto& [id, rows] : by) {
        s.ids.push_back(id);
        s.arm.push_back(log.arm[rows.front()]);
        s.rows.push_back(std::move(rows));
    }
    return s;
}

struct SplitWork {
    SplitOutcome outcome;
    int resampled = 0;
    std::optional<ProbabilityModel> hire, apply;
    std::vector<CounterfactualList> lists;
};

SplitWork run_split(int split, const InteractionLog& log, const SeekerIndex& sx, const PoolScores& pool,
                    const SplitSpec& spec, const WelfareOptions& opt, const std::vector<std::string>& columns,
                    bool keep_details) {
    const int A = static_cast<int>(log.arm_names.size());
    const std::size_t G = sx.ids.size();
    SplitWork w;
    Stream rng(spec.seed, static_cast<std::uint64_t>(split), hash_name("split"));
    std::vector<char> in_first(G, 0);
    const std::size_t n1 = static_cast<std::size_t>(std::llround(spec.fraction * static_cast<double>(G)));
    for (int attempt = 0;; ++attempt) {
        std::vector<std::size_t> order(G);
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng.engine());
        std::fill(in_first.begin(), in_first.end(), 0);
        for (std::size_t k = 0; k < n1; ++k) in_first[order[k]] = 1;
        std::vector<char> seen(A, 0);
        for (std::size_t g = 0; g < G; ++g)
            if (!in_first[g]) seen[sx.arm[g]] = 1;
        if (std::all_of(seen.begin(), seen.end(), [](char c) { return c != 0; })) break;
        ++w.resampled;
        if (attempt + 1 >= spec.max_resample)
            throw DegenerateError("welfare: could not draw a split with every arm in the evaluation half");
    }
    std::vector<char> mask(log.rows(), 0);
    for (std::size_t g = 0; g < G; ++g)
        if (in_first[g])
            for (auto i : sx.rows[g]) mask[i] = 1;

    Standardizer z = standardize_scores(log, mask, columns);
    ProbabilityModel hire = fit_hire_given_apply(log, mask, z, opt);
    ProbabilityModel apply = fit_apply(log, mask, z, opt);

    std::vector<std::vector<SeekerTotals>> totals(A + 1);
    std::vector<int> applications(A, 0);
    std::vector<double> raw(columns.size());
    double identity = 0.0;
    for (std::size_t g = 0; g < G; ++g) {
        if (in_first[g]) continue;
        const Eigen::MatrixXf& P = pool.of(sx.ids[g]);
        const Eigen::Index J = P.rows();
        std::vector<double> pool_p(J), pool_pa(J), pool_gamma(J);
        for (Eigen::Index j = 0; j < J; ++j) {
            auto r = P.row(j);
            double ih = hire.index(r), ia = apply.index(r);
            pool_p[j] = logistic_cdf(ih);
            pool_pa[j] = logistic_cdf(ia);
            pool_gamma[j] = opt.sigma_scale * pool_p[j] * softplus(ia);
        }
        OptimalSet best = optimal_set(pool_gamma, opt.list_length);

        SeekerTotals mine, star;
        std::vector<double> shown;
        for (auto i : sx.rows[g]) {
            // same single-precision rounding as the pool, so a shown item scores exactly as in the pool
            for (std::size_t c = 0; c < columns.size(); ++c)
                raw[c] = static_cast<float>(log.scores[hire.log_columns[c]][i]);
            double ih = hire.index(raw), ia = apply.index(raw);
            double p = logistic_cdf(ih), pa = logistic_cdf(ia), ph = p * pa;
            identity = std::max(identity, std::abs(ph - p * pa));
            double gm = opt.sigma_scale * p * softplus(ia);
            mine.sum[metric_p] += p;
            mine.sum[metric_pa] += pa;
            mine.sum[metric_ph] += ph;
            mine.sum[metric_gamma] += gm;
            mine.count += 1.0;
            shown.push_back(gm);
            applications[sx.arm[g]] += log.applied[i];
        }
        for (double gap : optimal_gaps(shown, best)) mine.sum[metric_gap] += gap;
        for (double gap : optimal_gaps(best.gamma, best)) star.sum[metric_gap] += gap;
        for (int j : best.vacancies) {
            star.sum[metric_p] += pool_p[j];
            star.sum[metric_pa] += pool_pa[j];
            star.sum[metric_ph] += pool_p[j] * pool_pa[j];
            star.sum[metric_gamma] += pool_gamma[j];
            star.count += 1.0;
        }
        totals[sx.arm[g]].push_back(mine);
        totals[A].push_back(star);
        if (keep_details) w.lists.push_back({sx.ids[g], best.vacancies, best.gamma});
    }

    w.outcome.arms.resize(A + 1);
    w.outcome.zero_applications.resize(A);
    w.outcome.identity_error = identity;
    for (int a = 0; a <= A; ++a) {
        for (int mtr = 0; mtr < metric_gap; ++mtr) w.outcome.arms[a][mtr] = cluster_mean(totals[a], mtr);
        if (a < A) {
            Stream boot(spec.seed, static_cast<std::uint64_t>(split), hash_name("gap-bootstrap:" + log.arm_names[a]));
            w.outcome.arms[a][metric_gap] = bootstrap_mean(totals[a], metric_gap, spec.bootstrap, boot);
            w.outcome.zero_applications[a] = applications[a] == 0;
        } else {
            w.outcome.arms[a][metric_gap] = cluster_mean(totals[a], metric_gap);
        }
    }
    if (keep_details) {
        w.hire = std::move(hire);
        w.apply = std::move(apply);
    }
    return w;
}

}  // namespace

WelfareEstimates evaluate_arms(const InteractionLog& log, const PoolScores& pool, const SplitSpec& spec,
                               const WelfareOptions& opt, int threads) {
    spec.validate();
    if (opt.list_length < 1) throw ConfigError("welfare: list length must be >= 1");
    log.check_invariants();
    std::vector<std::string> columns = opt.score_columns.empty() ? log.score_names : opt.score_columns;
    if (columns.empty()) throw ConfigError("welfare: no score columns");
    if (pool.names != columns) throw InputError("welfare: pool score columns do not match the model columns");
    const int A = static_cast<int>(log.arm_names.size());
    SeekerIndex sx = index_seekers(log);
    {
        std::vector<char> present(A, 0);
        for (int a : sx.arm) present[a] = 1;
        for (int a = 0; a < A; ++a)
            if (!present[a]) throw DegenerateError("welfare: arm '" + log.arm_names[a] + "' has no seekers in the log");
    }

    std::vector<SplitWork> work(spec.splits);
    parallel_for(work.size(), threads, [&](std::size_t s) {
        work[s] = run_split(static_cast<int>(s), log, sx, pool, spec, opt, columns, s == 0);
    });

    WelfareEstimates est;
    est.arms = log.arm_names;
    est.arms.push_back("gamma_optimal");
    est.median.resize(A + 1);
    for (auto& w : work) {
        est.resampled += w.resampled;
        for (char z : w.outcome.zero_applications) est.zero_application_flags += z ? 1 : 0;
        est.identity_error = std::max(est.identity_error, w.outcome.identity_error);
    }
    for (int a = 0; a <= A; ++a)
        for (int mtr = 0; mtr < metric_count; ++mtr) {
            auto collect = [&](auto field) {
                std::vector<double> v;
                for (const auto& w : work) v.push_back(field(w.outcome.arms[a][mtr]));
                return median(std::move(v));
            };
            ArmMetric& m = est.median[a][mtr];
            m.estimate = collect([](const ArmMetric& x) { return x.estimate; });
            m.ci95_low = collect([](const ArmMetric& x) { return x.ci95_low; });
            m.ci95_high = collect([](const ArmMetric& x) { return x.ci95_high; });
            m.ci99_low = collect([](const ArmMetric& x) { return x.ci99_low; });
            m.ci99_high = collect([](const ArmMetric& x) { return x.ci99_high; });
        }
    est.first_hire = std::move(*work[0].hire);
    est.first_apply = std::move(*work[0].apply);
    est.counterfactual = std::move(work[0].lists);
    for (auto& w : work) est.per_split.push_back(std::move(w.outcome));
    return est;
}

std::vector<std::array<double, 4>> true_arm_means(const InteractionLog& log) {
    const int A = static_cast<int>(log.arm_names.size());
    std::vector<std::array<double, 4>> sum(A, {0, 0, 0, 0});
    std::vector<double> n(A, 0.0);
    for (std::size_t i = 0; i < log.rows(); ++i) {
        int a = log.arm[i];
        sum[a][0] += log.true_p[i];
        sum[a][1] += log.true_pa[i];
        sum[a][2] += log.true_p[i] * log.true_pa[i];
        sum[a][3] += log.true_gamma[i];
        n[a] += 1.0;
    }
    for (int a = 0; a < A; ++a)
        for (auto& x : sum[a]) x = n[a] > 0 ? x / n[a] : 0.0;
    return sum;
}

}  // namespace wr
