#include "wrank/nonmyopic.hpp"

#include <cmath>
#include <sstream>

namespace wr {

void AdjustedValueProblem::validate() const {
    model.validate();
    dist.validate();
    if (scores.size() != dist.size()) throw InputError("adjusted value: one score per atom required");
    if (!(share > 0.0 && share <= 1.0)) throw DomainError("adjusted value: share must lie in (0,1]");
    if (!std::isfinite(rV0)) throw DomainError("adjusted value: baseline value not finite");
}

AdjustedValueProblem AdjustedValueProblem::make(const ModelParams& m, VacancyDistribution d,
                                                std::vector<double> scores, double share) {
    AdjustedValueProblem p;
    p.model = m;
    p.rV0 = solve_value_unemployment(m, d);
    p.dist = std::move(d);
    p.scores = std::move(scores);
    p.share = share;
    p.validate();
    return p;
}

namespace {

template <typename F>
double selected_mean(const AdjustedValueProblem& prob, F per_atom) {
    std::vector<double> omega = selection_weights(prob.dist.weights, prob.scores, prob.share);
    double e = 0.0;
    for (std::size_t a = 0; a < omega.size(); ++a)
        if (omega[a] > 0.0) e += omega[a] * per_atom(prob.dist.atoms[a]);
    return e / prob.share;
}

}  // namespace

double adjusted_map(const AdjustedValueProblem& prob, double z) {
    const ModelParams& m = prob.model;
    double e = selected_mean(prob, [&](const VacancyLottery& v) { return gamma_at(v, z, m); });
    return m.u_b + m.alpha1 / m.rq() * e;
}

double theta(const AdjustedValueProblem& prob, double z) {
    const ModelParams& m = prob.model;
    return selected_mean(prob, [&](const VacancyLottery& v) {
        return v.p * application_probability(surplus(v.U, v.p, z, m), m.sigma);
    });
}

AdjustedSolve solve_adjusted_value_detail(const AdjustedValueProblem& prob, double tol) {
    prob.validate();
    const ModelParams& m = prob.model;
    const double rV1m = adjusted_map(prob, prob.rV0);
    const double dm = rV1m - prob.rV0;
    AdjustedSolve out;
    double lo = m.u_b, hi = rV1m + std::abs(dm);
    out.lower = lo;
    out.upper = hi;
    auto g = [&](double z) { return z - adjusted_map(prob, z); };
    double glo = g(lo), ghi = g(hi);
    if (glo > 0.0 || ghi < 0.0) {
        std::ostringstream os;
        os.precision(17);
        os << "adjusted value: bracket [" << lo << ", " << hi << "] does not contain the fixed point (g = " << glo
           << ", " << ghi << ")";
        throw NumericError(os.str());
    }
    while (hi - lo > tol && out.iterations < 400) {
        double mid = 0.5 * (lo + hi);
        if (g(mid) > 0.0) hi = mid;
        else lo = mid;
        ++out.iterations;
    }
    out.value = 0.5 * (lo + hi);
    return out;
}

double solve_adjusted_value(const AdjustedValueProblem& prob, double tol) {
    return solve_adjusted_value_detail(prob, tol).value;
}

double solve_adjusted_value_iterative(const AdjustedValueProblem& prob, double tol, int max_iter) {
    prob.validate();
    const ModelParams& m = prob.model;
    const double lambda = 1.0 / (1.0 + m.alpha1 / m.rq());
    double z = prob.rV0;
    for (int it = 0; it < max_iter; ++it) {
        double step = lambda * (adjusted_map(prob, z) - z);
        z += step;
        if (std::abs(step) < tol) return z;
    }
    throw NumericError("adjusted value: damped iteration did not converge");
}

DeltaBracket bracket_delta_adj(double delta_m, double theta_m, double theta_adj, const ModelParams& m) {
    // the arrival rate is the one under the recommender; with alpha1 = alpha0 this is the usual form
    DeltaBracket b;
    b.lower = delta_m * m.rq() / (m.rq() + m.alpha1 * theta_m);
    b.upper = delta_m * m.rq() / (m.rq() + m.alpha1 * theta_adj);
    b.approx = b.lower;
    return b;
}

NonMyopicSummary analyze_nonmyopic(const AdjustedValueProblem& prob) {
    NonMyopicSummary s;
    s.rV0 = prob.rV0;
    s.rV1_myopic = adjusted_map(prob, prob.rV0);
    s.rV1_adj = solve_adjusted_value(prob);
    s.delta_m = s.rV1_myopic - s.rV0;
    s.delta_adj = s.rV1_adj - s.rV0;
    s.theta_m = theta(prob, s.rV0);
    s.theta_adj = theta(prob, s.rV1_adj);
    s.bracket = bracket_delta_adj(s.delta_m, s.theta_m, s.theta_adj, prob.model);
    s.U0_star_1 = reservation_utility(s.rV0, 1.0, prob.model);
    s.U1_star_1 = reservation_shift(s.delta_adj, s.U0_star_1);
    return s;
}

std::vector<ShiftScanRow> shift_scan(const ModelParams& m, const VacancyDistribution& dist, double share,
                                     const std::vector<double>& xs) {
    const double rV0 = solve_value_unemployment(m, dist);
    std::vector<ShiftScanRow> out;
    for (double x : xs) {
        AdjustedValueProblem p;
        p.model = m;
        p.dist = dist;
        p.scores = gamma_scores(m, dist, rV0 + x);
        p.share = share;
        p.rV0 = rV0;
        ShiftScanRow row;
        row.x = x;
        row.rV1_adj = solve_adjusted_value(p);
        double e = 0.0;
        std::vector<double> omega = selection_weights(dist.weights, p.scores, share);
        for (std::size_t a = 0; a < omega.size(); ++a) e += omega[a] * p.scores[a];
        row.residual = rV0 + x - (m.u_b + m.alpha0 / m.rq() * e / share);
        out.push_back(row);
    }
    return out;
}

}  // namespace wr
