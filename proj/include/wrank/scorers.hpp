#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace wr {

struct WeightProfile {
    std::vector<std::pair<std::string, double>> criteria;

    static WeightProfile pes();  // the ten published criterion weights
    std::size_t size() const { return criteria.size(); }
    double total() const;
    void validate() const;
};

// Weighted criteria score. c holds one consistency value in [0,1] per criterion.
double u_score(const std::vector<double>& c, const WeightProfile& w);
double u_score(const Eigen::Ref<const Eigen::VectorXd>& c, const Eigen::Ref<const Eigen::VectorXd>& w);

struct BlockShape {
    std::string name;
    int seeker_dim = 0;
    int vacancy_dim = 0;
    int latent_dim = 0;
};

// One block of S = sum_b (W_b x_b + c_b)' A_b (V_b y_b + e_b).
struct BilinearBlock {
    BlockShape shape;
    Eigen::MatrixXd W, V, A;
    Eigen::VectorXd c, e;
};

struct TripletHyper {
    double margin = 1.0;
    double learning_rate = 0.05;
    int epochs = 40;
    int negatives = 10;
    int batch_size = 32;
    std::uint64_t seed = 11;
};

struct BilinearScorer {
    std::vector<BilinearBlock> blocks;
    TripletHyper hyper;
    double final_loss = 0.0;

    int seeker_dim() const;
    int vacancy_dim() const;
    Eigen::Index n_params() const;
    Eigen::VectorXd flatten() const;
    void unflatten(const Eigen::Ref<const Eigen::VectorXd>& theta);
    void validate() const;
};

// Random feature maps (scaled to the input width), identity affinities.
BilinearScorer make_bilinear(const std::vector<BlockShape>& shapes, const TripletHyper& hyper);

double bilinear_score(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::VectorXd>& y,
                      const BilinearScorer& s);

struct Match {
    int seeker = 0;
    int vacancy = 0;
};

struct Triplet {
    int seeker = 0;
    int positive = 0;
    int negative = 0;
};

// Mean hinge loss [S_neg - S_pos + margin]_+ over the triplets; fills grad
// (same layout as flatten()) when non-null. X rows are seekers, Y rows vacancies.
double triplet_loss(const BilinearScorer& s, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                    const std::vector<Triplet>& triplets, Eigen::VectorXd* grad);

// Mini-batch SGD from `init`. Negatives are drawn uniformly without replacement
// from pool minus the seeker's positive.
BilinearScorer train_triplet(const std::vector<Match>& matches, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                             const std::vector<int>& pool, BilinearScorer init);

std::string serialize_scorer(const BilinearScorer& s);
BilinearScorer parse_scorer(const std::string& text);

struct CalibrationCoefficients {
    double intercept = -4.113;
    double slope = 0.061;
};

double apply_calibration(double score, const CalibrationCoefficients& c);

}  // namespace wr
