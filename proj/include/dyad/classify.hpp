#pragma once

#include "dyad/dmdc.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace dyad {

enum class ModelKind { GNB, LR, LSVM, KNN };

inline constexpr double kSvmGrid[] = {0.01, 0.1, 1, 10, 100};
inline constexpr int kKnnGrid[] = {1, 3, 5, 10, 30, 50, 100};

struct ModelSpec {
  ModelKind kind = ModelKind::GNB;
  std::optional<double> c;  // LSVM only
  std::optional<int> k;     // KNN only
  std::uint64_t seed = 0;
  bool standardize = false;  // KNN only: z-score features with training moments

  static ModelSpec gnb() { return make(ModelKind::GNB); }
  static ModelSpec lr() { return make(ModelKind::LR); }
  static ModelSpec lsvm(double c) {
    ModelSpec s = make(ModelKind::LSVM);
    s.c = c;
    return s;
  }
  static ModelSpec knn(int k) {
    ModelSpec s = make(ModelKind::KNN);
    s.k = k;
    return s;
  }

  // "GNB", "LR", "L-SVM_10", "KNN_5".
  std::string name() const;
  static ModelSpec parse(const std::string& name);
  void validate() const;

private:
  static ModelSpec make(ModelKind kind) {
    ModelSpec s;
    s.kind = kind;
    return s;
  }
};

// GNB, LR, both L-SVM_c and KNN_k grids.
std::vector<ModelSpec> default_model_grid();

struct GnbParams {
  Eigen::MatrixXd means;      // 2 x dim, row = label
  Eigen::MatrixXd variances;  // 2 x dim, smoothing included
  Eigen::Vector2d priors;
  double smoothing = 0.0;
};

struct LinearParams {
  Eigen::VectorXd weights;
  double bias = 0.0;
};

struct SvmParams {
  LinearParams linear;
  // P(y = 1 | f) = 1 / (1 + exp(platt_a * f + platt_b))
  double platt_a = 0.0;
  double platt_b = 0.0;
  double duality_gap = 0.0;
};

struct KnnParams {
  Eigen::MatrixXd features;  // n x dim, as given
  std::vector<int> labels;
  Eigen::VectorXd center;  // standardization, empty when disabled
  Eigen::VectorXd scale;
};

struct TrainedModel {
  ModelSpec spec;
  std::size_t feature_dim = 0;
  std::variant<GnbParams, LinearParams, SvmParams, KnnParams> params;
};

// Rows of `features` are examples.
TrainedModel train(const ModelSpec& spec, const Eigen::MatrixXd& features,
                   const std::vector<int>& labels);
TrainedModel train(const ModelSpec& spec, const std::vector<FeatureVector>& features,
                   const std::vector<int>& labels);

double predict_proba(const TrainedModel& model, const double* feature, std::size_t n);
double predict_proba(const TrainedModel& model, const FeatureVector& feature);
int predict_label(const TrainedModel& model, const FeatureVector& feature,
                  double threshold = 0.5);

// Probabilities for every row of `features`.
std::vector<double> predict_proba_rows(const TrainedModel& model, const Eigen::MatrixXd& features);

// L2-regularized logistic regression, minimised by damped Newton steps.
struct LogisticFit {
  LinearParams params;
  std::vector<double> loss_history;  // objective after each accepted step
  double gradient_norm = 0.0;
  int iterations = 0;
};

// Objective: 0.5 * l2 * ||w||^2 + sum_i log(1 + exp(-s_i (w.x_i + b))),
// with s_i = +-1 and an unpenalised bias. Stops once ||grad|| < tol.
LogisticFit fit_logistic(const Eigen::MatrixXd& X, const std::vector<int>& labels, double l2 = 1.0,
                         double tol = 1e-6, int max_iter = 200);

double sigmoid(double z);

// Rows of `train` nearest to x in squared Euclidean distance, nearest first,
// distance ties broken by row index. When `center` / `scale` are given both
// sides are standardized first.
std::vector<Eigen::Index> nearest_rows(const Eigen::MatrixXd& train, const double* x, std::size_t k,
                                       const Eigen::VectorXd* center = nullptr,
                                       const Eigen::VectorXd* scale = nullptr);

Eigen::MatrixXd stack_features(const std::vector<FeatureVector>& features);

}  // namespace dyad
