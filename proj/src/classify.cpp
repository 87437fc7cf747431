#include "dyad/classify.hpp"

#include "dyad/common.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <tuple>
#include <utility>

namespace dyad {

namespace {

void check_labels(const std::vector<int>& labels, Eigen::Index rows) {
  if (static_cast<Eigen::Index>(labels.size()) != rows) {
    fail(ErrorKind::Validation, "feature and label counts differ");
  }
  bool has0 = false;
  bool has1 = false;
  for (int y : labels) {
    if (y == 0) {
      has0 = true;
    } else if (y == 1) {
      has1 = true;
    } else {
      fail(ErrorKind::Validation, "labels must be 0 or 1");
    }
  }
  if (!has0 || !has1) {
    fail(ErrorKind::DegenerateTraining, "training set needs at least one example of each label");
  }
}

double softplus(double z) {
  // log(1 + exp(z))
  return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
}

GnbParams train_gnb(const Eigen::MatrixXd& X, const std::vector<int>& y) {
  const Eigen::Index dim = X.cols();
  GnbParams p;
  p.means = Eigen::MatrixXd::Zero(2, dim);
  p.variances = Eigen::MatrixXd::Zero(2, dim);
  Eigen::Vector2d counts = Eigen::Vector2d::Zero();
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const int c = y[static_cast<std::size_t>(i)];
    counts[c] += 1.0;
    p.means.row(c) += X.row(i);
  }
  for (int c = 0; c < 2; ++c) p.means.row(c) /= counts[c];
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const int c = y[static_cast<std::size_t>(i)];
    p.variances.row(c) += (X.row(i) - p.means.row(c)).array().square().matrix();
  }
  for (int c = 0; c < 2; ++c) p.variances.row(c) /= counts[c];

  // Smoothing is relative to the largest per-feature variance of the pooled
  // training data.
  double max_var = 0.0;
  if (X.rows() > 0 && dim > 0) {
    const Eigen::RowVectorXd mu = X.colwise().mean();
    const Eigen::RowVectorXd var =
        (X.rowwise() - mu).array().square().colwise().sum() / static_cast<double>(X.rows());
    max_var = var.maxCoeff();
  }
  p.smoothing = 1e-9 * max_var;
  if (!(p.smoothing > 0.0)) p.smoothing = 1e-9;
  p.variances.array() += p.smoothing;
  p.priors = counts / counts.sum();
  return p;
}

double gnb_proba(const GnbParams& p, const double* x) {
  double log_joint[2];
  for (int c = 0; c < 2; ++c) {
    double acc = std::log(p.priors[c]);
    for (Eigen::Index j = 0; j < p.means.cols(); ++j) {
      const double var = p.variances(c, j);
      const double diff = x[j] - p.means(c, j);
      acc += -0.5 * std::log(2.0 * std::numbers::pi * var) - diff * diff / (2.0 * var);
    }
    log_joint[c] = acc;
  }
  return sigmoid(log_joint[1] - log_joint[0]);
}

double linear_score(const LinearParams& p, const double* x) {
  double z = p.bias;
  for (Eigen::Index j = 0; j < p.weights.size(); ++j) z += p.weights[j] * x[j];
  return z;
}

// Platt scaling on decision values, in the Newton/backtracking formulation
// of Lin, Lin and Weng (2007). Returns (A, B) with
// P(y = 1 | f) = 1 / (1 + exp(A f + B)).
std::pair<double, double> fit_platt(const std::vector<double>& f, const std::vector<int>& y) {
  double prior1 = 0.0;
  double prior0 = 0.0;
  for (int label : y) (label == 1 ? prior1 : prior0) += 1.0;
  const double hi = (prior1 + 1.0) / (prior1 + 2.0);
  const double lo = 1.0 / (prior0 + 2.0);
  std::vector<double> t(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) t[i] = y[i] == 1 ? hi : lo;

  constexpr int kMaxIter = 100;
  constexpr double kMinStep = 1e-10;
  constexpr double kSigma = 1e-12;
  constexpr double kEps = 1e-5;

  auto objective = [&](double a, double b) {
    double v = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
      const double fApB = f[i] * a + b;
      v += fApB >= 0 ? t[i] * fApB + std::log1p(std::exp(-fApB))
                     : (t[i] - 1.0) * fApB + std::log1p(std::exp(fApB));
    }
    return v;
  };

  double a = 0.0;
  double b = std::log((prior0 + 1.0) / (prior1 + 1.0));
  double fval = objective(a, b);
  for (int iter = 0; iter < kMaxIter; ++iter) {
    double h11 = kSigma, h22 = kSigma, h21 = 0.0, g1 = 0.0, g2 = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
      const double fApB = f[i] * a + b;
      double p, q;
      if (fApB >= 0) {
        p = std::exp(-fApB) / (1.0 + std::exp(-fApB));
        q = 1.0 / (1.0 + std::exp(-fApB));
      } else {
        p = 1.0 / (1.0 + std::exp(fApB));
        q = std::exp(fApB) / (1.0 + std::exp(fApB));
      }
      const double d2 = p * q;
      h11 += f[i] * f[i] * d2;
      h22 += d2;
      h21 += f[i] * d2;
      const double d1 = t[i] - p;
      g1 += f[i] * d1;
      g2 += d1;
    }
    if (std::abs(g1) < kEps && std::abs(g2) < kEps) break;

    const double det = h11 * h22 - h21 * h21;
    const double dA = -(h22 * g1 - h21 * g2) / det;
    const double dB = -(-h21 * g1 + h11 * g2) / det;
    const double gd = g1 * dA + g2 * dB;

    double step = 1.0;
    while (step >= kMinStep) {
      const double na = a + step * dA;
      const double nb = b + step * dB;
      const double nf = objective(na, nb);
      if (nf < fval + 1e-4 * step * gd) {
        a = na;
        b = nb;
        fval = nf;
        break;
      }
      step /= 2.0;
    }
    if (step < kMinStep) break;
  }
  return {a, b};
}

// Dual coordinate descent for 0.5 ||w~||^2 + (C/n) sum hinge(s_i w~.x~_i),
// x~ = [x, 1]. The per-sample box is C/n, which makes the objective
// invariant to replicating the training set.
SvmParams train_lsvm(const Eigen::MatrixXd& X, const std::vector<int>& y, double c,
                     std::uint64_t seed) {
  const Eigen::Index n = X.rows();
  const Eigen::Index dim = X.cols();
  const double upper = c / static_cast<double>(n);

  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> Xa(n, dim + 1);
  Xa.leftCols(dim) = X;
  Xa.col(dim).setOnes();
  Eigen::VectorXd s(n);
  for (Eigen::Index i = 0; i < n; ++i) s[i] = y[static_cast<std::size_t>(i)] == 1 ? 1.0 : -1.0;
  const Eigen::VectorXd qii = Xa.rowwise().squaredNorm();

  Eigen::VectorXd alpha = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd w = Eigen::VectorXd::Zero(dim + 1);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  Rng rng(derive_seed(seed, 0x5356u));

  auto duality_gap = [&] {
    double hinge = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) hinge += std::max(0.0, 1.0 - s[i] * Xa.row(i).dot(w));
    const double wsq = w.squaredNorm();
    const double primal = 0.5 * wsq + upper * hinge;
    const double dual = alpha.sum() - 0.5 * wsq;
    return primal - dual;
  };

  constexpr int kMaxEpochs = 20000;
  constexpr double kGapTol = 1e-6;
  double gap = duality_gap();
  for (int epoch = 0; epoch < kMaxEpochs && gap >= kGapTol; ++epoch) {
    rng.shuffle(order);
    for (Eigen::Index i : order) {
      if (qii[i] <= 0.0) continue;
      const double g = s[i] * Xa.row(i).dot(w) - 1.0;
      const double a_old = alpha[i];
      const double a_new = std::clamp(a_old - g / qii[i], 0.0, upper);
      if (a_new != a_old) {
        w += (a_new - a_old) * s[i] * Xa.row(i).transpose();
        alpha[i] = a_new;
      }
    }
    if (epoch % 5 == 4) gap = duality_gap();
  }
  gap = duality_gap();

  SvmParams p;
  p.linear.weights = w.head(dim);
  p.linear.bias = w[dim];
  p.duality_gap = gap;

  std::vector<double> f(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::RowVectorXd row = X.row(i);
    f[static_cast<std::size_t>(i)] = linear_score(p.linear, row.data());
  }
  std::tie(p.platt_a, p.platt_b) = fit_platt(f, y);
  return p;
}

}  // namespace

std::vector<Eigen::Index> nearest_rows(const Eigen::MatrixXd& train, const double* x, std::size_t k,
                                       const Eigen::VectorXd* center, const Eigen::VectorXd* scale) {
  const Eigen::Index n = train.rows();
  const Eigen::Index dim = train.cols();
  std::vector<std::pair<double, Eigen::Index>> dist(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    double acc = 0.0;
    for (Eigen::Index j = 0; j < dim; ++j) {
      double a = train(i, j);
      double b = x[j];
      if (center) {
        a = (a - (*center)[j]) / (*scale)[j];
        b = (b - (*center)[j]) / (*scale)[j];
      }
      const double diff = a - b;
      acc += diff * diff;
    }
    dist[static_cast<std::size_t>(i)] = {acc, i};
  }
  k = std::min(k, dist.size());
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
  std::vector<Eigen::Index> out(k);
  for (std::size_t i = 0; i < k; ++i) out[i] = dist[i].second;
  return out;
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

std::string ModelSpec::name() const {
  switch (kind) {
    case ModelKind::GNB: return "GNB";
    case ModelKind::LR: return "LR";
    case ModelKind::LSVM: return fmt::format("L-SVM_{}", c.value_or(0.0));
    case ModelKind::KNN: return fmt::format("KNN_{}", k.value_or(0));
  }
  return "?";
}

ModelSpec ModelSpec::parse(const std::string& name) {
  if (name == "GNB") return gnb();
  if (name == "LR") return lr();
  auto tail = [&](const std::string& prefix) -> std::optional<std::string> {
    if (name.rfind(prefix, 0) == 0 && name.size() > prefix.size()) return name.substr(prefix.size());
    return std::nullopt;
  };
  try {
    if (auto t = tail("L-SVM_")) {
      std::size_t used = 0;
      const double c = std::stod(*t, &used);
      if (used == t->size()) {
        const ModelSpec spec = lsvm(c);
        spec.validate();
        return spec;
      }
    }
    if (auto t = tail("KNN_")) {
      std::size_t used = 0;
      const int k = std::stoi(*t, &used);
      if (used == t->size()) {
        const ModelSpec spec = knn(k);
        spec.validate();
        return spec;
      }
    }
  } catch (const Error&) {
    throw;
  } catch (const std::exception&) {
  }
  fail(ErrorKind::Validation, "unknown model '" + name + "'");
}

void ModelSpec::validate() const {
  if (c.has_value() != (kind == ModelKind::LSVM)) {
    fail(ErrorKind::Validation, "regularisation strength c applies to L-SVM only");
  }
  if (k.has_value() != (kind == ModelKind::KNN)) {
    fail(ErrorKind::Validation, "neighbour count k applies to KNN only");
  }
  if (c && !(*c > 0.0 && std::isfinite(*c))) fail(ErrorKind::Validation, "c must be positive");
  if (k && *k < 1) fail(ErrorKind::Validation, "k must be positive");
  if (standardize && kind != ModelKind::KNN) {
    fail(ErrorKind::Validation, "standardization applies to KNN only");
  }
}

std::vector<ModelSpec> default_model_grid() {
  std::vector<ModelSpec> grid{ModelSpec::gnb(), ModelSpec::lr()};
  for (double c : kSvmGrid) grid.push_back(ModelSpec::lsvm(c));
  for (int k : kKnnGrid) grid.push_back(ModelSpec::knn(k));
  return grid;
}

Eigen::MatrixXd stack_features(const std::vector<FeatureVector>& features) {
  if (features.empty()) return {};
  const std::size_t dim = features.front().values.size();
  Eigen::MatrixXd X(static_cast<Eigen::Index>(features.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (features[i].values.size() != dim) {
      fail(ErrorKind::Validation, "feature vectors differ in length");
    }
    for (std::size_t j = 0; j < dim; ++j) {
      X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = features[i].values[j];
    }
  }
  return X;
}

LogisticFit fit_logistic(const Eigen::MatrixXd& X, const std::vector<int>& labels, double l2,
                         double tol, int max_iter) {
  check_labels(labels, X.rows());
  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols();
  Eigen::MatrixXd Xa(n, p + 1);
  Xa.leftCols(p) = X;
  Xa.col(p).setOnes();
  Eigen::VectorXd s(n);
  for (Eigen::Index i = 0; i < n; ++i) s[i] = labels[static_cast<std::size_t>(i)] == 1 ? 1.0 : -1.0;

  Eigen::VectorXd penalty = Eigen::VectorXd::Constant(p + 1, l2);
  penalty[p] = 0.0;

  auto objective = [&](const Eigen::VectorXd& theta) {
    const Eigen::VectorXd z = Xa * theta;
    double f = 0.5 * (penalty.array() * theta.array().square()).sum();
    for (Eigen::Index i = 0; i < n; ++i) f += softplus(-s[i] * z[i]);
    return f;
  };
  auto gradient = [&](const Eigen::VectorXd& theta) {
    const Eigen::VectorXd z = Xa * theta;
    Eigen::VectorXd r(n);
    for (Eigen::Index i = 0; i < n; ++i) r[i] = -s[i] * sigmoid(-s[i] * z[i]);
    Eigen::VectorXd g = Xa.transpose() * r;
    g.array() += penalty.array() * theta.array();
    return g;
  };

  LogisticFit out;
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(p + 1);
  double f = objective(theta);
  Eigen::VectorXd g = gradient(theta);
  out.loss_history.push_back(f);

  int iter = 0;
  for (; iter < max_iter && g.norm() >= tol; ++iter) {
    const Eigen::VectorXd z = Xa * theta;
    Eigen::VectorXd h(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double q = sigmoid(z[i]);
      h[i] = q * (1.0 - q);
    }
    Eigen::MatrixXd H = Xa.transpose() * h.asDiagonal() * Xa;
    H.diagonal() += penalty;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
    Eigen::VectorXd step = ldlt.solve(-g);
    if (ldlt.info() != Eigen::Success || !step.allFinite() || g.dot(step) >= 0.0) {
      H.diagonal().array() += 1e-10 * std::max(1.0, H.diagonal().maxCoeff());
      step = H.ldlt().solve(-g);
      if (!step.allFinite() || g.dot(step) >= 0.0) step = -g;
    }

    // Line search on the objective change, evaluated termwise so that the
    // tiny decreases near the optimum are not lost to cancellation.
    const Eigen::VectorXd z_old = Xa * theta;
    const Eigen::VectorXd dz = Xa * step;
    auto change = [&](double t) {
      double df = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        // softplus(b + e) - softplus(b) = log1p(sigmoid(b) * expm1(e))
        const double b = -s[i] * z_old[i];
        const double e = -s[i] * t * dz[i];
        df += std::abs(e) > 1.0 ? softplus(b + e) - softplus(b) : std::log1p(sigmoid(b) * std::expm1(e));
      }
      const Eigen::VectorXd ts = t * step;
      df += 0.5 * (penalty.array() * ts.array() * (2.0 * theta + ts).array()).sum();
      return df;
    };
    double t = 1.0;
    const double slope = g.dot(step);
    bool accepted = false;
    double df = 0.0;
    while (t > 1e-12) {
      df = change(t);
      if (df <= 1e-4 * t * slope) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) break;
    const Eigen::VectorXd candidate = theta + t * step;
    const double f_new = f + df;
    theta = candidate;
    f = f_new;
    g = gradient(theta);
    out.loss_history.push_back(f);
  }

  out.iterations = iter;
  out.gradient_norm = g.norm();
  if (!(out.gradient_norm < tol)) {
    fail(ErrorKind::Numerical,
         fmt::format("logistic regression stopped with gradient norm {:.3g}", out.gradient_norm));
  }
  out.params.weights = theta.head(p);
  out.params.bias = theta[p];
  return out;
}

TrainedModel train(const ModelSpec& spec, const Eigen::MatrixXd& features,
                   const std::vector<int>& labels) {
  spec.validate();
  check_labels(labels, features.rows());
  if (!features.allFinite()) fail(ErrorKind::Validation, "training features contain non-finite values");

  TrainedModel model;
  model.spec = spec;
  model.feature_dim = static_cast<std::size_t>(features.cols());
  switch (spec.kind) {
    case ModelKind::GNB:
      model.params = train_gnb(features, labels);
      break;
    case ModelKind::LR:
      model.params = fit_logistic(features, labels, 1.0).params;
      break;
    case ModelKind::LSVM:
      model.params = train_lsvm(features, labels, *spec.c, spec.seed);
      break;
    case ModelKind::KNN: {
      KnnParams p;
      p.features = features;
      p.labels = labels;
      if (spec.standardize) {
        p.center = features.colwise().mean().transpose();
        p.scale = ((features.rowwise() - p.center.transpose()).array().square().colwise().sum() /
                   static_cast<double>(features.rows()))
                      .sqrt()
                      .transpose();
        for (Eigen::Index j = 0; j < p.scale.size(); ++j) {
          if (!(p.scale[j] > 0.0)) p.scale[j] = 1.0;
        }
      }
      model.params = std::move(p);
      break;
    }
  }
  return model;
}

TrainedModel train(const ModelSpec& spec, const std::vector<FeatureVector>& features,
                   const std::vector<int>& labels) {
  return train(spec, stack_features(features), labels);
}

namespace {

double knn_proba(const KnnParams& p, int k, const double* x) {
  const bool standardized = p.center.size() == p.features.cols() && p.features.cols() > 0;
  const auto kk = std::min<std::size_t>(static_cast<std::size_t>(k),
                                        static_cast<std::size_t>(p.features.rows()));
  const auto nearest = standardized ? nearest_rows(p.features, x, kk, &p.center, &p.scale)
                                    : nearest_rows(p.features, x, kk);
  int positives = 0;
  for (Eigen::Index i : nearest) positives += p.labels[static_cast<std::size_t>(i)];
  return static_cast<double>(positives) / static_cast<double>(kk);
}

}  // namespace

double predict_proba(const TrainedModel& model, const double* feature, std::size_t n) {
  if (n != model.feature_dim) {
    fail(ErrorKind::Validation, fmt::format("feature length {} does not match model dimension {}",
                                            n, model.feature_dim));
  }
  if (!all_finite(feature, n)) fail(ErrorKind::Validation, "feature contains non-finite values");
  double p = 0.0;
  switch (model.spec.kind) {
    case ModelKind::GNB:
      p = gnb_proba(std::get<GnbParams>(model.params), feature);
      break;
    case ModelKind::LR:
      p = sigmoid(linear_score(std::get<LinearParams>(model.params), feature));
      break;
    case ModelKind::LSVM: {
      const auto& sp = std::get<SvmParams>(model.params);
      const double f = linear_score(sp.linear, feature);
      p = sigmoid(-(sp.platt_a * f + sp.platt_b));
      break;
    }
    case ModelKind::KNN:
      p = knn_proba(std::get<KnnParams>(model.params), *model.spec.k, feature);
      break;
  }
  return std::clamp(p, 0.0, 1.0);
}

double predict_proba(const TrainedModel& model, const FeatureVector& feature) {
  return predict_proba(model, feature.values.data(), feature.values.size());
}

int predict_label(const TrainedModel& model, const FeatureVector& feature, double threshold) {
  return predict_proba(model, feature) >= threshold ? 1 : 0;
}

std::vector<double> predict_proba_rows(const TrainedModel& model, const Eigen::MatrixXd& features) {
  std::vector<double> out(static_cast<std::size_t>(features.rows()));
  std::vector<double> row(static_cast<std::size_t>(features.cols()));
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    for (Eigen::Index j = 0; j < features.cols(); ++j) row[static_cast<std::size_t>(j)] = features(i, j);
    out[static_cast<std::size_t>(i)] = predict_proba(model, row.data(), row.size());
  }
  return out;
}

}  // namespace dyad
