#pragma once

#include <vector>

#include "wrank/search_model.hpp"

namespace wr {

// A forward-looking seeker facing a recommender that shows the top share s of
// the pool by `scores`. rV0 is the baseline value without recommendations.
struct AdjustedValueProblem {
    ModelParams model;
    VacancyDistribution dist;
    std::vector<double> scores;  // one per atom
    double share = 1.0;
    double rV0 = 0.0;

    void validate() const;
    static AdjustedValueProblem make(const ModelParams& m, VacancyDistribution d, std::vector<double> scores,
                                     double share);  // solves rV0
};

// Right-hand side of the adjusted value equation at candidate value z.
double adjusted_map(const AdjustedValueProblem& prob, double z);

// Expected hiring rate on the selected vacancies when applications follow the
// reservation rule at z.
double theta(const AdjustedValueProblem& prob, double z);

struct AdjustedSolve {
    double value = 0.0;
    double lower = 0.0, upper = 0.0;  // initial bracket
    int iterations = 0;
};

// Bisection on [u_b, rV1_myopic + |delta_m|]; the map is decreasing in z.
AdjustedSolve solve_adjusted_value_detail(const AdjustedValueProblem& prob, double tol = 1e-10);
double solve_adjusted_value(const AdjustedValueProblem& prob, double tol = 1e-10);

// Independent solver: damped iteration z <- z + lambda (f(z) - z), which is a
// contraction for lambda = 1 / (1 + alpha1 / (r+q)).
double solve_adjusted_value_iterative(const AdjustedValueProblem& prob, double tol = 1e-12, int max_iter = 100000);

struct DeltaBracket {
    double lower = 0.0, upper = 0.0, approx = 0.0;
};

DeltaBracket bracket_delta_adj(double delta_m, double theta_m, double theta_adj, const ModelParams& m);

inline double reservation_shift(double delta_adj, double U0_star_at_p1) { return U0_star_at_p1 + delta_adj; }

struct NonMyopicSummary {
    double rV0 = 0.0, rV1_myopic = 0.0, rV1_adj = 0.0;
    double delta_m = 0.0, delta_adj = 0.0;
    double theta_m = 0.0, theta_adj = 0.0;
    DeltaBracket bracket;
    double U0_star_1 = 0.0, U1_star_1 = 0.0;
};

NonMyopicSummary analyze_nonmyopic(const AdjustedValueProblem& prob);

// Scan of shifted rules: rank by Gamma evaluated at rV0 + x, then solve the
// adjusted value under that ranking. A diagnostic, not an optimizer.
struct ShiftScanRow {
    double x = 0.0;
    double rV1_adj = 0.0;
    double residual = 0.0;  // rV0 + x minus the shifted value equation's right-hand side
};

std::vector<ShiftScanRow> shift_scan(const ModelParams& m, const VacancyDistribution& dist, double share,
                                     const std::vector<double>& xs);

}  // namespace wr
