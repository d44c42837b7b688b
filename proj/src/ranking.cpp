#include "wrank/ranking.hpp"

#include <algorithm>
#include <cmath>

#include "wrank/errors.hpp"

namespace wr {

namespace {

bool better(const RankedEntry& a, const RankedEntry& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.vacancy < b.vacancy;
}

}  // namespace

int RankedList::rank_of(int vacancy) const {
    for (std::size_t r = 0; r < entries.size(); ++r)
        if (entries[r].vacancy == vacancy) return static_cast<int>(r) + 1;
    return 0;
}

RankedList rank_top_k(std::vector<RankedEntry> scored, int k, std::int64_t seeker) {
    if (k < 1) throw DomainError("rank_top_k: k must be >= 1");
    if (scored.empty()) throw InputError("rank_top_k: no vacancies to rank");
    RankedList out;
    out.seeker = seeker;
    const std::size_t kk = static_cast<std::size_t>(k);
    if (kk < scored.size()) {
        std::partial_sort(scored.begin(), scored.begin() + kk, scored.end(), better);
        scored.resize(kk);
    } else {
        std::sort(scored.begin(), scored.end(), better);
        out.short_list = kk > scored.size();
    }
    out.entries = std::move(scored);
    return out;
}

RankedList rank_top_k(std::span<const double> scores, int k, std::int64_t seeker) {
    std::vector<RankedEntry> v(scores.size());
    for (std::size_t j = 0; j < scores.size(); ++j) v[j] = {static_cast<int>(j), scores[j]};
    return rank_top_k(std::move(v), k, seeker);
}

ConsiderationSet consideration_set(const RankedList& u_ranks, const RankedList& p_ranks,
                                   const ConsiderationCutoffs& cut) {
    if (u_ranks.size() != p_ranks.size()) throw InputError("consideration set: rankings cover different pools");
    const std::size_t n = u_ranks.size();
    ConsiderationSet cs;
    const int smallest = std::min({cut.top, cut.mid, cut.wide});
    if (n <= static_cast<std::size_t>(smallest)) {
        cs.whole_pool = true;
        for (const auto& e : u_ranks.entries) cs.vacancies.push_back(e.vacancy);
        std::sort(cs.vacancies.begin(), cs.vacancies.end());
        return cs;
    }
    int max_id = 0;
    for (const auto& e : u_ranks.entries) max_id = std::max(max_id, e.vacancy);
    std::vector<int> ru(max_id + 1, 0), rp(max_id + 1, 0);
    for (std::size_t r = 0; r < n; ++r) ru[u_ranks.entries[r].vacancy] = static_cast<int>(r) + 1;
    for (std::size_t r = 0; r < n; ++r) {
        int v = p_ranks.entries[r].vacancy;
        if (v > max_id || ru[v] == 0) throw InputError("consideration set: rankings cover different pools");
        rp[v] = static_cast<int>(r) + 1;
    }
    for (int v = 0; v <= max_id; ++v) {
        if (ru[v] == 0) continue;
        int a = ru[v], b = rp[v];
        bool in = a <= cut.top || b <= cut.top || (a <= cut.mid && b <= cut.wide) || (a <= cut.wide && b <= cut.mid);
        if (in) cs.vacancies.push_back(v);
    }
    return cs;
}

RankedList mix_rank(const ConsiderationSet& cs, double fraction, std::span<const double> p_scores,
                    std::span<const double> u_scores, int n_preselect, std::int64_t seeker) {
    if (cs.vacancies.empty()) throw InputError("mix_rank: empty consideration set");
    if (!(fraction >= 0.0 && fraction <= 1.0)) throw DomainError("mix_rank: fraction outside [0,1]");
    const int L = static_cast<int>(cs.vacancies.size());
    std::vector<RankedEntry> byp;
    byp.reserve(L);
    for (int v : cs.vacancies) byp.push_back({v, p_scores[v]});
    int keep = std::max(n_preselect, static_cast<int>(std::ceil(fraction * L - 1e-12)));
    RankedList kept = rank_top_k(std::move(byp), std::min(keep, L));
    std::vector<RankedEntry> byu;
    byu.reserve(kept.size());
    for (const auto& e : kept.entries) byu.push_back({e.vacancy, u_scores[e.vacancy]});
    RankedList out = rank_top_k(std::move(byu), n_preselect, seeker);
    return out;
}

RankedList display_list(const RankedList& preselected, const std::vector<char>& available, int n_show) {
    RankedList out;
    out.seeker = preselected.seeker;
    for (const auto& e : preselected.entries) {
        if (static_cast<int>(out.entries.size()) >= n_show) break;
        if (e.vacancy < static_cast<int>(available.size()) && !available[e.vacancy]) continue;
        out.entries.push_back(e);
    }
    out.short_list = static_cast<int>(out.entries.size()) < n_show;
    return out;
}

RankedList gamma_rank(std::span<const double> p_hat, std::span<const double> pa_hat, int k, std::int64_t seeker) {
    if (p_hat.size() != pa_hat.size()) throw InputError("gamma_rank: length mismatch");
    std::vector<double> g(p_hat.size());
    for (std::size_t j = 0; j < g.size(); ++j) {
        if (!(pa_hat[j] < 1.0)) throw DomainError("gamma_rank: application probability equals 1");
        g[j] = p_hat[j] * -std::log1p(-pa_hat[j]);
    }
    return rank_top_k(std::span<const double>(g), k, seeker);
}

RecallResult recall_at_k(const std::vector<RankedList>& lists, const std::vector<int>& matches, int k) {
    if (lists.size() != matches.size()) throw InputError("recall_at_k: one match entry per list required");
    RecallResult r;
    int hits = 0;
    for (std::size_t i = 0; i < lists.size(); ++i) {
        if (matches[i] < 0) continue;
        int rank = lists[i].rank_of(matches[i]);
        if (rank == 0) {
            ++r.excluded;
            continue;
        }
        ++r.included;
        if (rank <= k) ++hits;
    }
    r.value = r.included > 0 ? static_cast<double>(hits) / r.included : 0.0;
    return r;
}

RankDivergence rank_divergence(const std::vector<RankedList>& u_full, const std::vector<RankedList>& p_full) {
    if (u_full.size() != p_full.size()) throw InputError("rank_divergence: list counts differ");
    RankDivergence d;
    for (std::size_t i = 0; i < u_full.size(); ++i) {
        if (u_full[i].entries.empty() || p_full[i].entries.empty()) continue;
        d.u_rank_of_p_top.push_back(u_full[i].rank_of(p_full[i].entries.front().vacancy));
        d.p_rank_of_u_top.push_back(p_full[i].rank_of(u_full[i].entries.front().vacancy));
    }
    return d;
}

}  // namespace wr
