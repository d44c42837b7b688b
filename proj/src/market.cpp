#include "wrank/market.hpp"

#include <algorithm>
#include <cmath>

#include "wrank/errors.hpp"
#include "wrank/parallel.hpp"
#include "wrank/rng.hpp"

namespace wr {

namespace {
const std::uint64_t kProfileTag = hash_name("profile");
const std::uint64_t kPairTag = hash_name("pair");
const std::uint64_t kVacancyTag = hash_name("vacancy");
const std::uint64_t kMapsTag = hash_name("hire-maps");
}  // namespace

void MarketSpec::validate() const {
    if (n_seekers < 1 || n_vacancies < 1) throw ConfigError("market: counts must be >= 1");
    if (skill_blocks.empty()) throw ConfigError("market: need at least one skill block");
    for (int d : skill_blocks)
        if (d < 1) throw ConfigError("market: skill block widths must be >= 1");
    if (!(corr_pU >= -1.0 && corr_pU <= 1.0)) throw ConfigError("market: corr_pU outside [-1,1]");
    if (!(p_min > 0.0 && p_min < 0.5)) throw ConfigError("market: p_min outside (0, 0.5)");
    if (!(utility_noise >= 0.0 && hire_noise >= 0.0 && individual_effect_sd >= 0.0))
        throw ConfigError("market: noise scales must be >= 0");
    if (strata.occupation < 1 || strata.support < 1 || strata.location < 1)
        throw ConfigError("market: strata sets must be nonempty");
}

int MarketSpec::skill_dim() const {
    int d = 0;
    for (int b : skill_blocks) d += b;
    return d;
}

CriteriaMoments criteria_moments(const WeightProfile& w) {
    // a - b ~ N(0, 2): E exp(-(a-b)^2/2) = 1/sqrt(3), E exp(-(a-b)^2) = 1/sqrt(5)
    double sum = 0.0, sum2 = 0.0;
    for (const auto& [n, x] : w.criteria) {
        sum += x;
        sum2 += x * x;
    }
    CriteriaMoments m;
    m.mean = sum / std::sqrt(3.0);
    m.sd = std::sqrt(sum2 * (1.0 / std::sqrt(5.0) - 1.0 / 3.0));
    if (!(m.sd > 0)) m.sd = 1.0;
    return m;
}

SeekerRow Market::row(std::size_t i) const {
    const SeekerProfile& s = seekers.at(i);
    const int J = static_cast<int>(vacancies.size());
    const int K = static_cast<int>(weights.size());
    const CriteriaMoments cm = criteria_moments(weights);
    const double rho = spec.corr_pU, rho_c = std::sqrt(std::max(0.0, 1.0 - rho * rho));

    // seeker side of the planted hiring form
    std::vector<Eigen::VectorXd> sm;
    int off = 0;
    for (std::size_t b = 0; b < hire_maps.size(); ++b) {
        int d = spec.skill_blocks[b];
        sm.push_back(hire_maps[b].transpose() * s.skill.segment(off, d));
        off += d;
    }

    Stream rng(spec.seed, static_cast<std::uint64_t>(s.id), kPairTag);
    SeekerRow r;
    r.u_score.resize(J);
    r.hire_factor.resize(J);
    r.p.resize(J);
    r.U.resize(J);
    r.delta.resize(J);
    r.pa.resize(J);
    r.gamma.resize(J);
    Eigen::VectorXd xi(J), eta(J);
    for (int j = 0; j < J; ++j) xi[j] = rng.normal();
    for (int j = 0; j < J; ++j) eta[j] = rng.normal();
    for (int j = 0; j < J; ++j) {
        const Vacancy& v = vacancies[j];
        double u = 0.0;
        for (int k = 0; k < K; ++k) {
            double d = s.pref[k] - v.pref[k];
            u += weights.criteria[k].second * std::exp(-0.5 * d * d);
        }
        double zu = (u - cm.mean) / cm.sd;
        double h = 0.0;
        off = 0;
        for (std::size_t b = 0; b < hire_maps.size(); ++b) {
            int d = spec.skill_blocks[b];
            h += sm[b].dot(v.skill.segment(off, d));
            off += d;
        }
        h /= hire_scale;
        double index = spec.hire_intercept + spec.hire_loading * (rho * zu + rho_c * h) + spec.hire_noise * eta[j];
        double p = std::clamp(logistic_cdf(index), spec.p_min, 1.0 - spec.p_min);
        double U = model.u_b + s.effect + spec.utility_offset + spec.utility_loading * zu + spec.utility_noise * xi[j];
        r.u_score[j] = u;
        r.hire_factor[j] = h;
        r.p[j] = p;
        r.U[j] = U;
        r.delta[j] = surplus(U, p, s.rV0, model);
        r.pa[j] = application_probability(r.delta[j], model.sigma);
        r.gamma[j] = gamma_closed(p, r.delta[j], model.sigma);
    }
    return r;
}

VacancyDistribution Market::distribution(const SeekerRow& r) const {
    std::vector<VacancyLottery> atoms(r.p.size());
    for (Eigen::Index j = 0; j < r.p.size(); ++j) atoms[j] = {r.p[j], r.U[j]};
    return VacancyDistribution::uniform(std::move(atoms));
}

Eigen::MatrixXd Market::seeker_skills() const {
    Eigen::MatrixXd X(seekers.size(), spec.skill_dim());
    for (std::size_t i = 0; i < seekers.size(); ++i) X.row(i) = seekers[i].skill.transpose();
    return X;
}

Eigen::MatrixXd Market::vacancy_skills() const {
    Eigen::MatrixXd Y(vacancies.size(), spec.skill_dim());
    for (std::size_t j = 0; j < vacancies.size(); ++j) Y.row(j) = vacancies[j].skill.transpose();
    return Y;
}

Market sample_market(const MarketSpec& spec, const ModelParams& model, const WeightProfile& weights, int threads) {
    spec.validate();
    model.validate();
    weights.validate();
    Market m;
    m.spec = spec;
    m.model = model;
    m.weights = weights;
    const int K = static_cast<int>(weights.size());
    const int D = spec.skill_dim();

    Stream maps(spec.seed, 0, kMapsTag);
    double frob = 0.0;
    for (int d : spec.skill_blocks) {
        Eigen::MatrixXd M(d, d);
        for (Eigen::Index i = 0; i < M.size(); ++i) M.data()[i] = maps.normal();
        frob += M.squaredNorm();
        m.hire_maps.push_back(M);
    }
    m.hire_scale = frob > 0 ? std::sqrt(frob) : 1.0;

    m.vacancies.resize(spec.n_vacancies);
    for (int j = 0; j < spec.n_vacancies; ++j) {
        Stream rng(spec.seed, static_cast<std::uint64_t>(j), kVacancyTag);
        Vacancy& v = m.vacancies[j];
        v.id = j;
        v.pref.resize(K);
        v.skill.resize(D);
        for (int k = 0; k < K; ++k) v.pref[k] = rng.normal();
        for (int k = 0; k < D; ++k) v.skill[k] = rng.normal();
    }

    m.seekers.resize(spec.n_seekers);
    parallel_for(m.seekers.size(), threads, [&](std::size_t i) {
        Stream rng(spec.seed, i, kProfileTag);
        SeekerProfile& s = m.seekers[i];
        s.id = static_cast<std::int64_t>(i);
        s.occupation = static_cast<int>(rng.below(spec.strata.occupation));
        s.support = static_cast<int>(rng.below(spec.strata.support));
        s.location = static_cast<int>(rng.below(spec.strata.location));
        s.age = 40.0 + 10.0 * rng.normal();
        s.female = rng.bernoulli(0.5) ? 1.0 : 0.0;
        s.tenure = std::abs(rng.normal()) * 5.0;
        s.pref.resize(K);
        s.skill.resize(D);
        for (int k = 0; k < K; ++k) s.pref[k] = rng.normal();
        for (int k = 0; k < D; ++k) s.skill[k] = rng.normal();
        s.effect = spec.individual_effect_sd * rng.normal();
    });

    // Solve each seeker's baseline value on their own pool, in chunks so the
    // vacancy averages are summed in seeker order.
    const std::size_t chunk = 1024;
    Eigen::VectorXd sum_p = Eigen::VectorXd::Zero(spec.n_vacancies), sum_U = sum_p;
    std::vector<int> clipped(m.seekers.size(), 0);
    for (std::size_t start = 0; start < m.seekers.size(); start += chunk) {
        std::size_t n = std::min(chunk, m.seekers.size() - start);
        std::vector<Eigen::VectorXd> ps(n), Us(n);
        parallel_for(n, threads, [&](std::size_t k) {
            std::size_t i = start + k;
            SeekerRow r = m.row(i);
            m.seekers[i].rV0 = solve_value_unemployment(model, m.distribution(r));
            ps[k] = r.p;
            Us[k] = r.U;
            int c = 0;
            for (Eigen::Index j = 0; j < r.p.size(); ++j)
                if (r.p[j] <= spec.p_min || r.p[j] >= 1.0 - spec.p_min) ++c;
            clipped[i] = c;
        });
        for (std::size_t k = 0; k < n; ++k) {
            sum_p += ps[k];
            sum_U += Us[k];
        }
    }
    for (int j = 0; j < spec.n_vacancies; ++j) {
        m.vacancies[j].mean_p = sum_p[j] / spec.n_seekers;
        m.vacancies[j].mean_U = sum_U[j] / spec.n_seekers;
    }
    for (int c : clipped) m.clipped_p += c;
    return m;
}

std::vector<Match> sample_historical_matches(const Market& m, const std::vector<int>& seekers, std::uint64_t seed) {
    std::vector<Match> out;
    out.reserve(seekers.size());
    const std::uint64_t tag = hash_name("history");
    for (int i : seekers) {
        SeekerRow r = m.row(i);
        Eigen::VectorXd w = r.p.cwiseProduct(r.pa);
        double total = w.sum();
        if (!(total > 0)) continue;
        Stream rng(seed, static_cast<std::uint64_t>(i), tag);
        double u = rng.uniform() * total, acc = 0.0;
        int pick = static_cast<int>(w.size()) - 1;
        for (Eigen::Index j = 0; j < w.size(); ++j) {
            acc += w[j];
            if (u < acc) {
                pick = static_cast<int>(j);
                break;
            }
        }
        out.push_back({i, pick});
    }
    return out;
}

}  // namespace wr
