#include "classifier_oracles.hpp"
#include "support.hpp"

#include "dyad/classify.hpp"

#include <doctest.h>

#include <cstring>

using namespace dyad;
using testing::gaussian;

namespace {

std::vector<int> random_labels(std::size_t n, Rng& rng) {
  std::vector<int> y(n);
  for (auto& v : y) v = rng.bernoulli(0.5) ? 1 : 0;
  y[0] = 0;
  y[1] = 1;
  return y;
}

FeatureVector fv(std::vector<double> v) {
  FeatureVector f;
  f.values = std::move(v);
  return f;
}

std::vector<double> flatten(const TrainedModel& m) {
  std::vector<double> out;
  auto push = [&](const Eigen::MatrixXd& a) { out.insert(out.end(), a.data(), a.data() + a.size()); };
  std::visit(
      [&](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, GnbParams>) {
          push(p.means);
          push(p.variances);
          push(p.priors);
        } else if constexpr (std::is_same_v<P, LinearParams>) {
          push(p.weights);
          out.push_back(p.bias);
        } else if constexpr (std::is_same_v<P, SvmParams>) {
          push(p.linear.weights);
          out.push_back(p.linear.bias);
          out.push_back(p.platt_a);
          out.push_back(p.platt_b);
        } else {
          push(p.features);
          for (int l : p.labels) out.push_back(l);
        }
      },
      m.params);
  return out;
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("model names round trip") {
  for (const auto& spec : default_model_grid()) CHECK(ModelSpec::parse(spec.name()).name() == spec.name());
  CHECK(default_model_grid().size() == 2 + 5 + 7);
  CHECK(ModelSpec::lsvm(0.01).name() == "L-SVM_0.01");
  CHECK(ModelSpec::knn(5).name() == "KNN_5");
  CHECK_THROWS_AS(ModelSpec::parse("SVM"), Error);
  CHECK_THROWS_AS(ModelSpec::parse("KNN_0"), Error);
  ModelSpec bad = ModelSpec::gnb();
  bad.k = 3;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("gnb on a repeated two-point dataset") {
  Eigen::MatrixXd X(20, 1);
  std::vector<int> y(20);
  for (int i = 0; i < 20; ++i) {
    X(i, 0) = i % 2;
    y[static_cast<std::size_t>(i)] = i % 2;
  }
  const auto m = train(ModelSpec::gnb(), X, y);
  const auto& p = std::get<GnbParams>(m.params);
  CHECK(p.means(0, 0) == 0.0);
  CHECK(p.means(1, 0) == 1.0);
  CHECK(p.priors[0] == 0.5);
  CHECK(p.priors[1] == 0.5);
  CHECK(p.variances(0, 0) > 0.0);

  // Hand-evaluated ratio: equal priors and variances, so the posterior is
  // a logistic in the squared-distance difference.
  const double v = p.variances(0, 0);
  const double expect = 1.0 / (1.0 + std::exp(-((0.9 * 0.9) - (0.1 * 0.1)) / (2.0 * v)));
  const double q = 0.9;
  CHECK(predict_proba(m, &q, 1) == doctest::Approx(expect).epsilon(1e-12));
  CHECK(v == doctest::Approx(0.25e-9));
}

TEST_CASE("gnb symmetric classes give one half at the midpoint") {
  Eigen::MatrixXd X(4, 2);
  X << -1, 0, -3, 2, 1, 0, 3, 2;
  const auto m = train(ModelSpec::gnb(), X, {0, 0, 1, 1});
  const double mid[2] = {0.0, 1.0};
  CHECK(predict_proba(m, mid, 2) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("gnb matches the brute-force formula") {
  Rng rng(606);
  for (int trial = 0; trial < 50; ++trial) {
    const auto n = static_cast<Eigen::Index>(4 + rng.below(17));
    const auto dim = static_cast<Eigen::Index>(1 + rng.below(4));
    const Eigen::MatrixXd X = gaussian(n, dim, rng);
    const auto y = random_labels(static_cast<std::size_t>(n), rng);
    const auto m = train(ModelSpec::gnb(), X, y);
    for (int q = 0; q < 10; ++q) {
      const Eigen::VectorXd x = 0.7 * gaussian(dim, 1, rng).col(0);
      CHECK(std::abs(predict_proba(m, x.data(), x.size()) - testing::brute_force_gnb(X, y, x.data())) < 1e-9);
    }
  }
}

TEST_CASE("knn_1 memorizes and hits stored points") {
  Eigen::MatrixXd X(3, 2);
  X << 0, 0, 1, 1, 2, 2;
  const auto m = train(ModelSpec::knn(1), X, {0, 1, 0});
  const auto& p = std::get<KnnParams>(m.params);
  CHECK(p.features == X);
  CHECK(p.labels == std::vector<int>{0, 1, 0});
  const double q[2] = {1, 1};
  CHECK(predict_proba(m, q, 2) == 1.0);
}

TEST_CASE("knn matches exhaustive search, ties included") {
  Rng rng(707);
  for (int trial = 0; trial < 50; ++trial) {
    const auto n = static_cast<Eigen::Index>(2 + rng.below(999));
    const auto dim = static_cast<Eigen::Index>(1 + rng.below(6));
    Eigen::MatrixXd X = gaussian(n, dim, rng);
    // Integer grids force exact distance ties.
    if (trial % 2) X = X.array().round();
    const auto y = random_labels(static_cast<std::size_t>(n), rng);
    for (int k : kKnnGrid) {
      const auto m = train(ModelSpec::knn(k), X, y);
      for (int q = 0; q < 5; ++q) {
        Eigen::VectorXd x = gaussian(dim, 1, rng).col(0);
        if (trial % 2) x = x.array().round();
        CHECK(predict_proba(m, x.data(), x.size()) == testing::exhaustive_knn(X, y, k, x.data()));
      }
    }
  }
}

TEST_CASE("nearest_rows breaks ties by index") {
  Eigen::MatrixXd X(4, 1);
  X << 1, -1, 1, -1;
  const double q = 0.0;
  CHECK(nearest_rows(X, &q, 3) == std::vector<Eigen::Index>{0, 1, 2});
}

TEST_CASE("standardized knn matches search on z-scored data") {
  Rng rng(717);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::MatrixXd X = testing::gaussian(50, 3, rng);
    X.col(1) *= 1000.0;
    X.col(2).setConstant(4.0);  // zero spread keeps unit scale
    const auto y = random_labels(50, rng);
    ModelSpec spec = ModelSpec::knn(5);
    spec.standardize = true;
    const auto m = train(spec, X, y);

    Eigen::RowVectorXd mu = X.colwise().mean();
    Eigen::RowVectorXd sd(3);
    for (int j = 0; j < 3; ++j) {
      double v = 0.0;
      for (int i = 0; i < 50; ++i) v += (X(i, j) - mu[j]) * (X(i, j) - mu[j]);
      sd[j] = v > 0.0 ? std::sqrt(v / 50.0) : 1.0;
    }
    Eigen::MatrixXd Z = X;
    for (int i = 0; i < 50; ++i) Z.row(i) = (X.row(i) - mu).cwiseQuotient(sd);
    for (int q = 0; q < 10; ++q) {
      Eigen::VectorXd x = testing::gaussian(3, 1, rng).col(0);
      x[1] *= 1000.0;
      const Eigen::VectorXd z = (x.transpose() - mu).cwiseQuotient(sd).transpose();
      CHECK(predict_proba(m, x.data(), 3) == doctest::Approx(testing::exhaustive_knn(Z, y, 5, z.data())));
    }
  }
}

TEST_CASE("logistic regression sign and convergence") {
  Eigen::MatrixXd X(6, 1);
  X << -2, -1.5, -1, 1, 1.5, 2;
  const std::vector<int> y{0, 0, 0, 1, 1, 1};
  const auto m = train(ModelSpec::lr(), X, y);
  CHECK(std::get<LinearParams>(m.params).weights[0] > 0.0);

  Rng rng(808);
  for (int trial = 0; trial < 40; ++trial) {
    const auto n = static_cast<Eigen::Index>(5 + rng.below(200));
    const auto dim = static_cast<Eigen::Index>(1 + rng.below(8));
    Eigen::MatrixXd Xr = gaussian(n, dim, rng);
    if (trial % 4 == 0) Xr *= 1000.0;
    const auto yr = random_labels(static_cast<std::size_t>(n), rng);
    const auto fit = fit_logistic(Xr, yr);
    CHECK(fit.gradient_norm < 1e-6);
    for (std::size_t i = 1; i < fit.loss_history.size(); ++i)
      CHECK(fit.loss_history[i] <= fit.loss_history[i - 1]);
  }
}

// The separating hyperplane is invariant; the Platt crossing is not, since
// its smoothed targets depend on class counts.
TEST_CASE("linear svm is unchanged by duplicating the training set") {
  Rng rng(909);
  for (int trial = 0; trial < 20; ++trial) {
    const auto n = static_cast<Eigen::Index>(6 + rng.below(60));
    const auto dim = static_cast<Eigen::Index>(1 + rng.below(4));
    const Eigen::MatrixXd X = gaussian(n, dim, rng);
    const auto y = random_labels(static_cast<std::size_t>(n), rng);
    Eigen::MatrixXd X2(2 * n, dim);
    X2 << X, X;
    std::vector<int> y2 = y;
    y2.insert(y2.end(), y.begin(), y.end());
    const double c = kSvmGrid[trial % 5];
    const auto a = train(ModelSpec::lsvm(c), X, y);
    const auto b = train(ModelSpec::lsvm(c), X2, y2);
    const auto& pa = std::get<SvmParams>(a.params);
    const auto& pb = std::get<SvmParams>(b.params);
    CHECK(pa.duality_gap < 1e-6);
    CHECK(pb.duality_gap < 1e-6);
    CHECK((pa.linear.weights - pb.linear.weights).norm() < 1e-3 * (1.0 + pa.linear.weights.norm()));
    for (int q = 0; q < 50; ++q) {
      const Eigen::VectorXd x = gaussian(dim, 1, rng).col(0);
      const double fa = pa.linear.weights.dot(x) + pa.linear.bias;
      const double fb = pb.linear.weights.dot(x) + pb.linear.bias;
      if (std::abs(fa) < 1e-4) continue;
      CHECK((fa > 0) == (fb > 0));
    }
  }
}

TEST_CASE("probabilities stay finite and in range") {
  Rng rng(1001);
  for (const auto& spec : default_model_grid()) {
    const Eigen::MatrixXd X = gaussian(40, 3, rng);
    const auto y = random_labels(40, rng);
    const auto m = train(spec, X, y);
    for (double scale : {1.0, 1e3, 1e150}) {
      for (int q = 0; q < 10; ++q) {
        const Eigen::VectorXd x = scale * gaussian(3, 1, rng).col(0);
        const double p = predict_proba(m, x.data(), 3);
        CHECK(std::isfinite(p));
        CHECK(p >= 0.0);
        CHECK(p <= 1.0);
      }
    }
  }
}

TEST_CASE("training is deterministic") {
  Rng rng(1102);
  const Eigen::MatrixXd X = gaussian(60, 4, rng);
  const auto y = random_labels(60, rng);
  for (const auto& spec : default_model_grid()) {
    CHECK(bitwise_equal(flatten(train(spec, X, y)), flatten(train(spec, X, y))));
  }
}

TEST_CASE("predict_label thresholds inclusively") {
  Eigen::MatrixXd X(2, 1);
  X << 0, 1;
  const auto m = train(ModelSpec::knn(2), X, {0, 1});
  CHECK(predict_label(m, fv({0.5}), 0.5) == 1);
  CHECK(predict_label(m, fv({0.5}), 0.51) == 0);
  const auto k1 = train(ModelSpec::knn(1), X, {0, 1});
  CHECK(predict_label(k1, fv({0.9})) == 1);
  CHECK(predict_label(k1, fv({0.1})) == 0);
}

TEST_CASE("training and prediction errors") {
  Eigen::MatrixXd X(3, 1);
  X << 0, 1, 2;
  auto kind = [](auto fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::Io;
  };
  CHECK(kind([&] { train(ModelSpec::gnb(), X, {1, 1, 1}); }) == ErrorKind::DegenerateTraining);
  Eigen::MatrixXd bad = X;
  bad(1, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK(kind([&] { train(ModelSpec::lr(), bad, {0, 1, 0}); }) == ErrorKind::Validation);
  CHECK(kind([&] { train(ModelSpec::lr(), X, {0, 1}); }) == ErrorKind::Validation);
  const auto m = train(ModelSpec::gnb(), X, {0, 1, 1});
  CHECK(kind([&] { predict_proba(m, fv({1.0, 2.0})); }) == ErrorKind::Validation);
  CHECK(kind([&] {
          train(ModelSpec::gnb(), std::vector<FeatureVector>{fv({1}), fv({1, 2})}, {0, 1});
        }) == ErrorKind::Validation);
}
