#include "wrank/scorers.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "wrank/errors.hpp"
#include "wrank/rng.hpp"
#include "wrank/search_model.hpp"

namespace wr {

WeightProfile WeightProfile::pes() {
    return {{{"Occupation", 0.332},
             {"Skills in occupation", 0.332},
             {"Geographic mobility", 0.1},
             {"Reservation wage", 0.066},
             {"Diploma", 0.033},
             {"Working hours", 0.033},
             {"Driving license", 0.033},
             {"Languages", 0.033},
             {"Years of experience in occupation", 0.033},
             {"Duration and type of contract", 0.003}}};
}

double WeightProfile::total() const {
    double t = 0.0;
    for (const auto& [n, w] : criteria) t += w;
    return t;
}

void WeightProfile::validate() const {
    if (criteria.empty()) throw ConfigError("weight profile is empty");
    for (const auto& [n, w] : criteria)
        if (!(w >= 0.0)) throw ConfigError("weight for '" + n + "' is negative");
}

double u_score(const std::vector<double>& c, const WeightProfile& w) {
    if (c.size() != w.size())
        throw SchemaError("consistency vector has " + std::to_string(c.size()) + " entries, weights have " +
                          std::to_string(w.size()));
    double s = 0.0;
    for (std::size_t k = 0; k < c.size(); ++k) s += w.criteria[k].second * c[k];
    return s;
}

double u_score(const Eigen::Ref<const Eigen::VectorXd>& c, const Eigen::Ref<const Eigen::VectorXd>& w) {
    if (c.size() != w.size()) throw SchemaError("consistency vector length does not match weights");
    return c.dot(w);
}

int BilinearScorer::seeker_dim() const {
    int d = 0;
    for (const auto& b : blocks) d += b.shape.seeker_dim;
    return d;
}

int BilinearScorer::vacancy_dim() const {
    int d = 0;
    for (const auto& b : blocks) d += b.shape.vacancy_dim;
    return d;
}

Eigen::Index BilinearScorer::n_params() const {
    Eigen::Index n = 0;
    for (const auto& b : blocks) n += b.W.size() + b.c.size() + b.V.size() + b.e.size() + b.A.size();
    return n;
}

namespace {

template <typename Fn>
void for_each_param(const BilinearScorer& s, Fn&& fn) {
    for (const auto& b : s.blocks) {
        fn(b.W.data(), b.W.size());
        fn(b.c.data(), b.c.size());
        fn(b.V.data(), b.V.size());
        fn(b.e.data(), b.e.size());
        fn(b.A.data(), b.A.size());
    }
}

}  // namespace

Eigen::VectorXd BilinearScorer::flatten() const {
    Eigen::VectorXd t(n_params());
    Eigen::Index at = 0;
    for_each_param(*this, [&](const double* p, Eigen::Index n) {
        t.segment(at, n) = Eigen::Map<const Eigen::VectorXd>(p, n);
        at += n;
    });
    return t;
}

void BilinearScorer::unflatten(const Eigen::Ref<const Eigen::VectorXd>& theta) {
    if (theta.size() != n_params()) throw SchemaError("parameter vector length mismatch");
    Eigen::Index at = 0;
    for_each_param(*this, [&](const double* p, Eigen::Index n) {
        Eigen::Map<Eigen::VectorXd>(const_cast<double*>(p), n) = theta.segment(at, n);
        at += n;
    });
}

void BilinearScorer::validate() const {
    if (blocks.empty()) throw SchemaError("bilinear scorer has no blocks");
    if (!(hyper.margin > 0)) throw ConfigError("triplet margin must be > 0");
    for (const auto& b : blocks) {
        const auto& s = b.shape;
        if (b.W.rows() != s.latent_dim || b.W.cols() != s.seeker_dim || b.V.rows() != s.latent_dim ||
            b.V.cols() != s.vacancy_dim || b.A.rows() != s.latent_dim || b.A.cols() != s.latent_dim ||
            b.c.size() != s.latent_dim || b.e.size() != s.latent_dim)
            throw SchemaError("block '" + s.name + "' has inconsistent dimensions");
    }
}

BilinearScorer make_bilinear(const std::vector<BlockShape>& shapes, const TripletHyper& hyper) {
    BilinearScorer s;
    s.hyper = hyper;
    Stream rng(hyper.seed, 0, hash_name("bilinear-init"));
    for (const auto& sh : shapes) {
        BilinearBlock b;
        b.shape = sh;
        b.W.resize(sh.latent_dim, sh.seeker_dim);
        b.V.resize(sh.latent_dim, sh.vacancy_dim);
        for (Eigen::Index i = 0; i < b.W.size(); ++i) b.W.data()[i] = rng.normal() / std::sqrt(sh.seeker_dim);
        for (Eigen::Index i = 0; i < b.V.size(); ++i) b.V.data()[i] = rng.normal() / std::sqrt(sh.vacancy_dim);
        b.A = Eigen::MatrixXd::Identity(sh.latent_dim, sh.latent_dim);
        b.c = Eigen::VectorXd::Zero(sh.latent_dim);
        b.e = Eigen::VectorXd::Zero(sh.latent_dim);
        s.blocks.push_back(std::move(b));
    }
    s.validate();
    return s;
}

double bilinear_score(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::VectorXd>& y,
                      const BilinearScorer& s) {
    if (x.size() != s.seeker_dim() || y.size() != s.vacancy_dim())
        throw SchemaError("feature dimensions do not match the scorer blocks");
    double total = 0.0;
    int xo = 0, yo = 0;
    for (const auto& b : s.blocks) {
        Eigen::VectorXd phi = b.W * x.segment(xo, b.shape.seeker_dim) + b.c;
        Eigen::VectorXd psi = b.V * y.segment(yo, b.shape.vacancy_dim) + b.e;
        total += phi.dot(b.A * psi);
        xo += b.shape.seeker_dim;
        yo += b.shape.vacancy_dim;
    }
    return total;
}

namespace {

// Adds sign * dS/dtheta for the pair (x, y) into grad.
void accumulate_pair_gradient(const BilinearScorer& s, const Eigen::Ref<const Eigen::VectorXd>& x,
                              const Eigen::Ref<const Eigen::VectorXd>& y, double sign, Eigen::VectorXd& grad) {
    Eigen::Index at = 0;
    int xo = 0, yo = 0;
    for (const auto& b : s.blocks) {
        const auto& sh = b.shape;
        auto xb = x.segment(xo, sh.seeker_dim);
        auto yb = y.segment(yo, sh.vacancy_dim);
        Eigen::VectorXd phi = b.W * xb + b.c;
        Eigen::VectorXd psi = b.V * yb + b.e;
        Eigen::VectorXd Apsi = b.A * psi;
        Eigen::VectorXd Atphi = b.A.transpose() * phi;
        Eigen::Map<Eigen::MatrixXd>(grad.data() + at, sh.latent_dim, sh.seeker_dim) += sign * Apsi * xb.transpose();
        at += b.W.size();
        grad.segment(at, sh.latent_dim) += sign * Apsi;
        at += sh.latent_dim;
        Eigen::Map<Eigen::MatrixXd>(grad.data() + at, sh.latent_dim, sh.vacancy_dim) +=
            sign * Atphi * yb.transpose();
        at += b.V.size();
        grad.segment(at, sh.latent_dim) += sign * Atphi;
        at += sh.latent_dim;
        Eigen::Map<Eigen::MatrixXd>(grad.data() + at, sh.latent_dim, sh.latent_dim) += sign * phi * psi.transpose();
        at += b.A.size();
        xo += sh.seeker_dim;
        yo += sh.vacancy_dim;
    }
}

}  // namespace

double triplet_loss(const BilinearScorer& s, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                    const std::vector<Triplet>& triplets, Eigen::VectorXd* grad) {
    if (grad) grad->setZero(s.n_params());
    if (triplets.empty()) return 0.0;
    double loss = 0.0;
    for (const auto& t : triplets) {
        Eigen::VectorXd x = X.row(t.seeker).transpose();
        Eigen::VectorXd yp = Y.row(t.positive).transpose();
        Eigen::VectorXd yn = Y.row(t.negative).transpose();
        double h = bilinear_score(x, yn, s) - bilinear_score(x, yp, s) + s.hyper.margin;
        if (h > 0) {
            loss += h;
            if (grad) {
                accumulate_pair_gradient(s, x, yn, 1.0, *grad);
                accumulate_pair_gradient(s, x, yp, -1.0, *grad);
            }
        }
    }
    const double n = static_cast<double>(triplets.size());
    if (grad) *grad /= n;
    return loss / n;
}

namespace {

std::vector<int> draw_negatives(Stream& rng, const std::vector<int>& pool, int positive, int count) {
    // partial Fisher-Yates over a copy keeps draws without replacement
    std::vector<int> cand;
    cand.reserve(pool.size());
    for (int v : pool)
        if (v != positive) cand.push_back(v);
    int n = std::min<int>(count, static_cast<int>(cand.size()));
    for (int i = 0; i < n; ++i) {
        std::size_t j = i + rng.below(cand.size() - i);
        std::swap(cand[i], cand[j]);
    }
    cand.resize(n);
    return cand;
}

}  // namespace

BilinearScorer train_triplet(const std::vector<Match>& matches, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                             const std::vector<int>& pool, BilinearScorer init) {
    if (matches.empty()) throw InputError("triplet training needs at least one match");
    if (pool.size() < 2) throw InputError("triplet training needs a pool of at least two vacancies");
    init.validate();
    if (X.cols() != init.seeker_dim() || Y.cols() != init.vacancy_dim())
        throw SchemaError("feature matrices do not match the scorer blocks");
    const TripletHyper& h = init.hyper;
    Stream rng(h.seed, 1, hash_name("triplet-sgd"));
    std::vector<std::size_t> order(matches.size());
    std::iota(order.begin(), order.end(), 0);
    Eigen::VectorXd theta = init.flatten(), grad;
    double epoch_loss = 0.0;
    for (int epoch = 0; epoch < h.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng.engine());
        epoch_loss = 0.0;
        std::size_t n_trip = 0;
        for (std::size_t start = 0; start < order.size(); start += h.batch_size) {
            std::vector<Triplet> batch;
            std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(h.batch_size));
            for (std::size_t k = start; k < end; ++k) {
                const Match& m = matches[order[k]];
                for (int neg : draw_negatives(rng, pool, m.vacancy, h.negatives))
                    batch.push_back({m.seeker, m.vacancy, neg});
            }
            double l = triplet_loss(init, X, Y, batch, &grad);
            epoch_loss += l * batch.size();
            n_trip += batch.size();
            if (grad.squaredNorm() > 0.0) {
                theta -= h.learning_rate * grad;
                init.unflatten(theta);
            }
        }
        epoch_loss /= std::max<std::size_t>(n_trip, 1);
    }
    init.final_loss = epoch_loss;
    return init;
}

namespace {

void write_matrix(std::ostringstream& os, const char* tag, const Eigen::MatrixXd& m) {
    os << tag << ' ' << m.rows() << ' ' << m.cols();
    char buf[40];
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            std::snprintf(buf, sizeof buf, " %.17g", m(i, j));
            os << buf;
        }
    os << '\n';
}

Eigen::MatrixXd read_matrix(std::istringstream& is, const std::string& tag) {
    std::string t;
    Eigen::Index r = 0, c = 0;
    if (!(is >> t >> r >> c) || t != tag || r < 0 || c < 0)
        throw SchemaError("scorer file: expected matrix '" + tag + "'");
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j)
            if (!(is >> m(i, j))) throw SchemaError("scorer file: truncated matrix '" + tag + "'");
    return m;
}

}  // namespace

std::string serialize_scorer(const BilinearScorer& s) {
    std::ostringstream os;
    char buf[128];
    os << "wrank-bilinear 1\n";
    std::snprintf(buf, sizeof buf, "hyper margin %.17g learning_rate %.17g", s.hyper.margin, s.hyper.learning_rate);
    os << buf << " epochs " << s.hyper.epochs << " negatives " << s.hyper.negatives << " batch_size " << s.hyper.batch_size << " seed "
       << s.hyper.seed << '\n';
    std::snprintf(buf, sizeof buf, "final_loss %.17g\n", s.final_loss);
    os << buf;
    os << "blocks " << s.blocks.size() << '\n';
    for (const auto& b : s.blocks) {
        os << "block " << b.shape.name << ' ' << b.shape.seeker_dim << ' ' << b.shape.vacancy_dim << ' '
           << b.shape.latent_dim << '\n';
        write_matrix(os, "W", b.W);
        write_matrix(os, "c", b.c);
        write_matrix(os, "V", b.V);
        write_matrix(os, "e", b.e);
        write_matrix(os, "A", b.A);
    }
    return os.str();
}

BilinearScorer parse_scorer(const std::string& text) {
    std::istringstream is(text);
    std::string magic, tag;
    int version = 0;
    if (!(is >> magic >> version) || magic != "wrank-bilinear") throw SchemaError("not a bilinear scorer file");
    if (version != 1) throw SchemaError("unsupported scorer file version " + std::to_string(version));
    BilinearScorer s;
    auto expect = [&](const char* want) {
        if (!(is >> tag) || tag != want) throw SchemaError(std::string("scorer file: expected '") + want + "'");
    };
    expect("hyper");
    expect("margin");
    is >> s.hyper.margin;
    expect("learning_rate");
    is >> s.hyper.learning_rate;
    expect("epochs");
    is >> s.hyper.epochs;
    expect("negatives");
    is >> s.hyper.negatives;
    expect("batch_size");
    is >> s.hyper.batch_size;
    expect("seed");
    is >> s.hyper.seed;
    expect("final_loss");
    is >> s.final_loss;
    expect("blocks");
    std::size_t nb = 0;
    is >> nb;
    for (std::size_t i = 0; i < nb; ++i) {
        expect("block");
        BilinearBlock b;
        is >> b.shape.name >> b.shape.seeker_dim >> b.shape.vacancy_dim >> b.shape.latent_dim;
        if (!is) throw SchemaError("scorer file: bad block header");
        b.W = read_matrix(is, "W");
        b.c = read_matrix(is, "c");
        b.V = read_matrix(is, "V");
        b.e = read_matrix(is, "e");
        b.A = read_matrix(is, "A");
        s.blocks.push_back(std::move(b));
    }
    s.validate();
    return s;
}

double apply_calibration(double score, const CalibrationCoefficients& c) {
    return logistic_cdf(c.intercept + c.slope * score);
}

}  // namespace wr
