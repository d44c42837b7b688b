#include <algorithm>

#include "wrank/errors.hpp"
#include "wrank/estimation.hpp"

namespace wr {

RankMode parse_rank_mode(const std::string& s) {
    if (s == "none") return RankMode::none;
    if (s == "application") return RankMode::application;
    if (s == "two_sided" || s == "two-sided") return RankMode::two_sided;
    throw ConfigError("unknown rank mode '" + s + "' (none|application|two_sided)");
}

HazardFit fit_hazard_calibration(const std::vector<std::vector<ApplicationRecord>>& sequences, RankMode mode,
                                 int max_rank) {
    if (max_rank < 1) throw ConfigError("hazard: max_rank must be >= 1");
    struct Row {
        double score;
        int hired, app_rank, vac_rank;
        std::int64_t seq;
    };
    std::vector<Row> rows;
    for (std::size_t s = 0; s < sequences.size(); ++s) {
        int pos = 0;
        for (const auto& a : sequences[s]) {
            ++pos;
            if (a.hired != 0 && a.hired != 1) throw InputError("hazard: hired must be 0 or 1");
            if (a.vacancy_rank < 1) throw InputError("hazard: vacancy rank must be >= 1");
            rows.push_back({a.score, a.hired, std::min(pos, max_rank), std::min(a.vacancy_rank, max_rank),
                            static_cast<std::int64_t>(s)});
            if (a.hired) break;  // no longer at risk
        }
    }
    if (rows.empty()) throw InputError("hazard: no applications");

    HazardFit out;
    std::vector<std::string> names{"const", "score"};
    std::vector<int> js_levels, v_levels;
    auto levels = [&](auto get, const char* prefix, std::vector<int>& kept) {
        std::vector<int> count(max_rank + 1, 0), hires(max_rank + 1, 0);
        for (const auto& r : rows) ++count[get(r)], hires[get(r)] += r.hired;
        for (int k = 2; k <= max_rank; ++k) {
            const std::string nm = std::string(prefix) + std::to_string(k);
            if (count[k] == 0) {
                out.notes.push_back(nm + " has no observations; dropped");
            } else if (hires[k] == 0 || hires[k] == count[k]) {
                // a dummy that predicts the outcome perfectly has no finite coefficient
                out.notes.push_back(nm + " has no outcome variation; pooled with rank 1");
            } else {
                kept.push_back(k);
                names.push_back(nm);
            }
        }
    };
    if (mode != RankMode::none) levels([](const Row& r) { return r.app_rank; }, "rank_js_", js_levels);
    if (mode == RankMode::two_sided) levels([](const Row& r) { return r.vac_rank; }, "rank_v_", v_levels);

    const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
    Eigen::MatrixXd X = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(names.size()));
    Eigen::VectorXd y(n);
    std::vector<std::int64_t> cl(n);
    const Eigen::Index js_off = 2, v_off = 2 + static_cast<Eigen::Index>(js_levels.size());
    for (Eigen::Index i = 0; i < n; ++i) {
        const Row& r = rows[i];
        X(i, 0) = 1.0;
        X(i, 1) = r.score;
        y[i] = r.hired;
        cl[i] = r.seq;
        auto a = std::find(js_levels.begin(), js_levels.end(), r.app_rank);
        if (a != js_levels.end()) X(i, js_off + (a - js_levels.begin())) = 1.0;
        auto b = std::find(v_levels.begin(), v_levels.end(), r.vac_rank);
        if (b != v_levels.end()) X(i, v_off + (b - v_levels.begin())) = 1.0;
    }
    out.fit = fit_logit(y, X, names, cl);
    out.intercept = out.fit.coef[0];
    out.slope = out.fit.coef[1];
    out.alpha_js.assign(max_rank, 0.0);
    out.alpha_v.assign(max_rank, 0.0);
    for (std::size_t k = 0; k < js_levels.size(); ++k) out.alpha_js[js_levels[k] - 1] = out.fit.coef[js_off + k];
    for (std::size_t k = 0; k < v_levels.size(); ++k) out.alpha_v[v_levels[k] - 1] = out.fit.coef[v_off + k];
    out.loglik = out.fit.loglik;
    out.aic = 2.0 * static_cast<double>(names.size()) - 2.0 * out.loglik;
    out.rows = static_cast<int>(n);
    return out;
}

}  // namespace wr
