#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace wr {

struct RankedEntry {
    int vacancy = 0;
    double score = 0.0;
};

// entries[0] is rank 1. Scores never increase with rank; ties by vacancy id.
struct RankedList {
    std::int64_t seeker = -1;
    std::vector<RankedEntry> entries;
    bool short_list = false;

    std::size_t size() const { return entries.size(); }
    int rank_of(int vacancy) const;  // 1-based, 0 when absent
};

RankedList rank_top_k(std::vector<RankedEntry> scored, int k, std::int64_t seeker = -1);
// scores[v] is the score of vacancy v
RankedList rank_top_k(std::span<const double> scores, int k, std::int64_t seeker = -1);

struct ConsiderationCutoffs {
    int top = 25;
    int mid = 50;
    int wide = 100;
};

struct ConsiderationSet {
    std::vector<int> vacancies;  // ascending id
    bool whole_pool = false;     // pool smaller than the smallest cutoff
};

// Both lists must rank the same pool in full.
ConsiderationSet consideration_set(const RankedList& u_ranks, const RankedList& p_ranks,
                                   const ConsiderationCutoffs& cut = {});

// Rank the set by p, keep max(n_preselect, ceil(f L)), re-rank those by u and
// return the first n_preselect.
RankedList mix_rank(const ConsiderationSet& cs, double fraction, std::span<const double> p_scores,
                    std::span<const double> u_scores, int n_preselect = 15, std::int64_t seeker = -1);

// Drops unavailable vacancies and keeps the first n_show.
RankedList display_list(const RankedList& preselected, const std::vector<char>& available, int n_show);

RankedList gamma_rank(std::span<const double> p_hat, std::span<const double> pa_hat, int k,
                      std::int64_t seeker = -1);

struct RecallResult {
    double value = 0.0;
    int included = 0;
    int excluded = 0;
};

// matches[i] is the hired vacancy of lists[i]'s seeker, or -1 for none.
// Seekers whose match is missing from their list are excluded and counted.
RecallResult recall_at_k(const std::vector<RankedList>& lists, const std::vector<int>& matches, int k);

struct RankDivergence {
    std::vector<int> u_rank_of_p_top;  // r^U(i, top vacancy by P)
    std::vector<int> p_rank_of_u_top;  // r^P(i, top vacancy by U)
};

// Full-pool rankings per seeker.
RankDivergence rank_divergence(const std::vector<RankedList>& u_full, const std::vector<RankedList>& p_full);

}  // namespace wr
