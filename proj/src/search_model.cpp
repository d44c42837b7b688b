#include "wrank/search_model.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

namespace wr {

VacancyDistribution VacancyDistribution::uniform(std::vector<VacancyLottery> atoms) {
    VacancyDistribution d;
    const double w = atoms.empty() ? 0.0 : 1.0 / static_cast<double>(atoms.size());
    d.weights.assign(atoms.size(), w);
    d.atoms = std::move(atoms);
    return d;
}

void VacancyDistribution::validate() const {
    if (atoms.empty()) throw InputError("vacancy distribution has no atoms");
    if (weights.size() != atoms.size()) throw InputError("vacancy distribution: weight count mismatch");
    double total = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0)) throw InputError("vacancy distribution: negative weight");
        total += w;
    }
    if (std::abs(total - 1.0) > 1e-12) throw InputError("vacancy distribution: weights do not sum to 1");
    for (const auto& a : atoms) {
        if (!(a.p > 0.0 && a.p <= 1.0)) throw DomainError("vacancy lottery: p outside (0,1]");
        if (!std::isfinite(a.U)) throw DomainError("vacancy lottery: U not finite");
    }
}

double baseline_map(double z, const ModelParams& m, const VacancyDistribution& dist) {
    double e = 0.0;
    for (std::size_t a = 0; a < dist.size(); ++a) e += dist.weights[a] * gamma_at(dist.atoms[a], z, m);
    return m.u_b + m.alpha0 / m.rq() * e;
}

namespace {

// g(z) = T(z) - z is strictly decreasing, g(u_b) >= 0 and g(T(u_b)) <= 0.
ValueSolve bisect_value(const ModelParams& m, const VacancyDistribution& dist) {
    double lo = m.u_b, hi = baseline_map(m.u_b, m, dist);
    ValueSolve out;
    out.bisection = true;
    if (hi - lo < 1e-15) {
        out.value = lo;
        out.residual = hi - lo;
        return out;
    }
    for (int it = 0; it < 300; ++it) {
        double mid = 0.5 * (lo + hi);
        double g = baseline_map(mid, m, dist) - mid;
        if (g > 0) lo = mid;
        else hi = mid;
        out.iterations = it + 1;
        if (hi - lo < 1e-12) break;
    }
    out.value = 0.5 * (lo + hi);
    out.residual = std::abs(baseline_map(out.value, m, dist) - out.value);
    return out;
}

}  // namespace

ValueSolve solve_value_unemployment_detail(const ModelParams& m, const VacancyDistribution& dist) {
    m.validate();
    dist.validate();
    ValueSolve out;
    double z = m.u_b;
    double step = 0.0;
    for (int it = 0; it < 10000; ++it) {
        double next = 0.5 * z + 0.5 * baseline_map(z, m, dist);
        step = std::abs(next - z);
        z = next;
        out.iterations = it + 1;
        if (!std::isfinite(z)) break;
        if (step < 1e-10) {
            out.value = z;
            out.residual = std::abs(baseline_map(z, m, dist) - z);
            return out;
        }
    }
    ValueSolve b = bisect_value(m, dist);
    if (!(b.residual < 1e-8)) {
        std::ostringstream os;
        os << "value of unemployment did not converge; last step " << step << ", bisection residual "
           << b.residual;
        throw NumericError(os.str());
    }
    b.iterations += out.iterations;
    return b;
}

double solve_value_unemployment(const ModelParams& m, const VacancyDistribution& dist) {
    return solve_value_unemployment_detail(m, dist).value;
}

std::vector<double> selection_weights(const std::vector<double>& weights, const std::vector<double>& scores,
                                      double s) {
    if (!(s > 0.0 && s <= 1.0)) throw DomainError("selection share must lie in (0,1]");
    if (weights.size() != scores.size()) throw InputError("selection: one score per atom required");
    std::vector<std::size_t> order(weights.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    std::vector<double> omega(weights.size(), 0.0);
    double left = s;
    for (std::size_t a : order) {
        if (left <= 0.0) break;
        double take = std::min(weights[a], left);
        omega[a] = take;
        left -= take;
    }
    return omega;
}

std::vector<double> gamma_scores(const ModelParams& m, const VacancyDistribution& dist, double z) {
    std::vector<double> g(dist.size());
    for (std::size_t a = 0; a < dist.size(); ++a) g[a] = gamma_at(dist.atoms[a], z, m);
    return g;
}

double value_with_rs_myopic(const ModelParams& m, const VacancyDistribution& dist,
                            const std::vector<double>& scores, double s, double rV0_baseline) {
    m.validate();
    dist.validate();
    std::vector<double> omega = selection_weights(dist.weights, scores, s);
    double mass = 0.0, e = 0.0;
    for (std::size_t a = 0; a < dist.size(); ++a) {
        if (omega[a] <= 0.0) continue;
        mass += omega[a];
        e += omega[a] * gamma_at(dist.atoms[a], rV0_baseline, m);
    }
    if (!(mass > 0.0)) throw DegenerateError("recommender selects no vacancies");
    return m.u_b + m.alpha1 / m.rq() * e / s;
}

BeliefEffects belief_decomposition(const VacancyDistribution& subjective, const VacancyDistribution& truth,
                                   const std::vector<double>& scores, double s, const ModelParams& m) {
    BeliefEffects b;
    b.rV0_subjective = solve_value_unemployment(m, subjective);
    b.rV0_true = solve_value_unemployment(m, truth);
    b.rV1_myopic = value_with_rs_myopic(m, truth, scores, s, b.rV0_subjective);
    b.full = b.rV1_myopic - b.rV0_subjective;
    b.pure = b.rV1_myopic - b.rV0_true;
    b.info = b.rV0_true - b.rV0_subjective;
    return b;
}

}  // namespace wr
