#include "spectra.hpp"
#include "support.hpp"

#include "dyad/dmdc.hpp"
#include "dyad/synth.hpp"

#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <numbers>

using namespace dyad;
using testing::gaussian;
using testing::rel_fro;

namespace {

Window make_window(const Eigen::MatrixXd& Yp, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Yn) {
  Window w;
  w.session_id = "s";
  w.w = Yp.cols();
  w.Y_past = Yp;
  w.X_in = X;
  w.Y_next = Yn;
  return w;
}

Window random_window(Eigen::Index d, Eigen::Index w, Rng& rng) {
  return make_window(gaussian(d, w, rng), gaussian(d, w, rng), gaussian(d, w, rng));
}

Eigen::MatrixXd random_rank(Eigen::Index m, Eigen::Index n, Eigen::Index r, Rng& rng) {
  return gaussian(m, r, rng) * gaussian(r, n, rng);
}

std::vector<std::complex<double>> dense_eigs(const Eigen::MatrixXd& A) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(A, false);
  REQUIRE(es.info() == Eigen::Success);
  const Eigen::VectorXcd ev = es.eigenvalues();
  return {ev.data(), ev.data() + ev.size()};
}

}  // namespace

TEST_CASE("pseudo-inverse examples") {
  CHECK(pseudo_inverse(Eigen::MatrixXd::Identity(3, 3)) == Eigen::MatrixXd::Identity(3, 3));
  const Eigen::MatrixXd z = pseudo_inverse(Eigen::MatrixXd::Zero(4, 2));
  CHECK(z.rows() == 2);
  CHECK(z.cols() == 4);
  CHECK(z.isZero(0.0));
  Eigen::Matrix2d m;
  m << 1, 0, 0, 0;
  CHECK((pseudo_inverse(m) - m).norm() < 1e-15);

  Eigen::MatrixXd bad = Eigen::MatrixXd::Identity(2, 2);
  bad(0, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(pseudo_inverse(bad), Error);
}

TEST_CASE("pseudo-inverse satisfies the Penrose conditions") {
  Rng rng(101);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index m = 1 + static_cast<Eigen::Index>(rng.below(64));
    const Eigen::Index n = 1 + static_cast<Eigen::Index>(rng.below(16));
    const Eigen::Index r = static_cast<Eigen::Index>(rng.below(std::min(m, n) + 1));
    const Eigen::MatrixXd M = trial % 3 == 0 ? gaussian(m, n, rng) : random_rank(m, n, r, rng);
    const Eigen::MatrixXd P = pseudo_inverse(M);
    CHECK(rel_fro(M * P * M, M) < 1e-10);
    CHECK(rel_fro(P * M * P, P) < 1e-10);
    CHECK(rel_fro((M * P).transpose(), M * P) < 1e-10);
    CHECK(rel_fro((P * M).transpose(), P * M) < 1e-10);
  }
}

TEST_CASE("relative cutoff drops small singular values") {
  Eigen::Matrix2d m;
  m << 1, 0, 0, 1e-6;
  CHECK(pseudo_inverse(m)(1, 1) == doctest::Approx(1e6));
  SvdCutoff cut;
  cut.rel_tol = 1e-3;
  CHECK(pseudo_inverse(m, cut)(1, 1) == 0.0);
  cut.rel_tol = -1.0;
  CHECK_THROWS_AS(pseudo_inverse(m, cut), Error);
}

TEST_CASE("fit of a constant e1 window") {
  const Eigen::Index d = 3, w = 4;
  Eigen::MatrixXd Y = Eigen::MatrixXd::Zero(d, w);
  Y.row(0).setOnes();
  const auto fit = fit_window(make_window(Y, Eigen::MatrixXd::Zero(d, w), Y));
  CHECK(fit.rank == 1);
  CHECK(fit.residual < 1e-14);
  Eigen::MatrixXd e11 = Eigen::MatrixXd::Zero(d, d);
  e11(0, 0) = 1.0;
  CHECK((materialize_transition(fit) - e11).norm() < 1e-14);
  CHECK(materialize_control(fit).norm() < 1e-14);

  const auto spec = eigenvalues(fit);
  REQUIRE(spec.lambda_T.size() == 3);
  CHECK(std::abs(spec.lambda_T[0] - 1.0) < 1e-14);
  CHECK(spec.lambda_T[1] == 0.0);
  CHECK(spec.lambda_T[2] == 0.0);
  CHECK(spec.nonzero_T == 1);
  CHECK(spec.nonzero_C == 0);
  for (const auto& l : spec.lambda_C) CHECK(l == 0.0);
}

TEST_CASE("fit of a halving sequence") {
  const Eigen::Index d = 4, w = 5;
  Eigen::VectorXd dir(d);
  dir << 1, -2, 0.5, 3;
  Eigen::MatrixXd Y(d, w + 1);
  for (Eigen::Index t = 0; t <= w; ++t) Y.col(t) = std::pow(0.5, static_cast<double>(t)) * dir;
  const auto fit = fit_window(make_window(Y.leftCols(w), Eigen::MatrixXd::Zero(d, w), Y.rightCols(w)));
  CHECK(fit.residual < 1e-12);
  const auto spec = eigenvalues(fit);
  CHECK(spec.nonzero_T == 1);
  CHECK(std::abs(spec.lambda_T[0] - 0.5) < 1e-12);
}

TEST_CASE("all-zero window") {
  const Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(3, 4);
  const auto fit = fit_window(make_window(Z, Z, Z));
  CHECK(fit.rank == 0);
  CHECK(fit.residual == 0.0);
  CHECK(fit.degenerate());
  const auto spec = eigenvalues(fit);
  CHECK(spec.nonzero_T == 0);
  CHECK(spec.nonzero_C == 0);
  for (const auto& l : spec.lambda_T) CHECK(l == 0.0);
}

TEST_CASE("fit rejects malformed windows") {
  Rng rng(3);
  auto w = random_window(3, 4, rng);
  w.X_in = gaussian(3, 3, rng);
  CHECK_THROWS_AS(fit_window(w), Error);
  auto narrow = random_window(3, 1, rng);
  CHECK_THROWS_AS(fit_window(narrow), Error);
  auto nonfinite = random_window(3, 4, rng);
  nonfinite.Y_next(1, 1) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(fit_window(nonfinite), Error);
}

TEST_CASE("fit is the minimum-norm least-squares solution") {
  Rng rng(202);
  for (int trial = 0; trial < 40; ++trial) {
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng.below(5));
    const Eigen::Index w = 2 + static_cast<Eigen::Index>(rng.below(8));
    Window win = random_window(d, w, rng);
    if (trial % 2) {
      // Rank-deficient snapshot.
      win.Y_past = random_rank(d, w, 1, rng);
      win.X_in = win.Y_past * 0.5;
    }
    const auto fit = fit_window(win);
    Eigen::MatrixXd AB(d, 2 * d);
    AB << materialize_transition(fit), materialize_control(fit);

    Eigen::MatrixXd Z(2 * d, w);
    Z << win.Y_past, win.X_in;
    // Independent oracle: complete orthogonal decomposition of Z^T.
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(Z.transpose());
    const Eigen::MatrixXd oracle = cod.solve(win.Y_next.transpose()).transpose();
    CHECK(rel_fro(AB, oracle) < 1e-9);
    CHECK(std::abs(fit.residual - (win.Y_next - AB * Z).norm()) < 1e-9 * (1.0 + fit.residual));

    // Any null-space perturbation keeps the residual and grows the norm.
    const Eigen::MatrixXd null_proj = Eigen::MatrixXd::Identity(2 * d, 2 * d) - Z * pseudo_inverse(Z);
    for (int k = 0; k < 5; ++k) {
      const Eigen::MatrixXd cand = AB + gaussian(d, 2 * d, rng) * null_proj;
      CHECK((win.Y_next - cand * Z).norm() <= fit.residual + 1e-9);
      CHECK(AB.norm() <= cand.norm() + 1e-12);
    }
  }
}

TEST_CASE("eigenvalues of a diagonal product") {
  // G_Y * Y_next = diag(0.9, 0.2) with d = w = 2.
  DynamicsFit fit;
  fit.G_Y = Eigen::Matrix2d::Identity();
  fit.G_X = Eigen::Matrix2d::Zero();
  fit.Y_next = Eigen::Vector2d(0.9, 0.2).asDiagonal();
  fit.rank = 2;
  fit.y_next_norm2 = 0.9;
  const auto spec = eigenvalues(fit);
  CHECK(std::abs(spec.lambda_T[0] - 0.9) < 1e-15);
  CHECK(std::abs(spec.lambda_T[1] - 0.2) < 1e-15);
}

TEST_CASE("small product spectrum matches the dense transition matrix") {
  Rng rng(303);
  for (int trial = 0; trial < 30; ++trial) {
    const Eigen::Index d = trial < 25 ? 2 + static_cast<Eigen::Index>(rng.below(40)) : 768;
    const Eigen::Index w = 2 + static_cast<Eigen::Index>(rng.below(7));
    const auto fit = fit_window(random_window(d, w, rng));
    const auto spec = eigenvalues(fit);
    const double tol = kZeroEigenvalueRelTol * fit.y_next_norm2;
    const auto dense = testing::above(dense_eigs(materialize_transition(fit)), 1e-7);
    const auto ours = testing::above(spec.lambda_T, tol);
    CHECK(ours.size() == static_cast<std::size_t>(spec.nonzero_T));
    CHECK(testing::multiset_distance(ours, dense) < 1e-8);
    const auto dense_c = testing::above(dense_eigs(materialize_control(fit)), 1e-7);
    CHECK(testing::multiset_distance(testing::above(spec.lambda_C, tol), dense_c) < 1e-8);
    CHECK(spec.lambda_T.size() == static_cast<std::size_t>(std::min(d, w)));
  }
}

TEST_CASE("non-real eigenvalues come in conjugate pairs") {
  Rng rng(404);
  int complex_seen = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto spec = eigenvalues(fit_window(random_window(6, 5, rng)));
    for (const auto& list : {spec.lambda_T, spec.lambda_C}) {
      for (const auto& l : list) {
        if (l.imag() == 0.0) continue;
        ++complex_seen;
        double best = std::numeric_limits<double>::infinity();
        for (const auto& m : list) best = std::min(best, std::abs(m - std::conj(l)));
        CHECK(best < 1e-9);
      }
    }
  }
  CHECK(complex_seen > 0);
}

TEST_CASE("noiseless planted systems are recovered exactly") {
  const int w = 8;
  const std::vector<std::vector<std::complex<double>>> spectra = {
      {0.9}, {0.5, -0.3}, {{0.4, 0.3}, {0.4, -0.3}}, {0.8, {0.1, 0.6}, {0.1, -0.6}}};
  int recovered = 0, flagged = 0, total = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto& lt = spectra[seed % spectra.size()];
    const auto sys = make_planted_system(12, lt, {0.7, 0.4}, seed, 0.0, 0, 1);
    const auto session = simulate_session(sys, 20, derive_seed(seed, 1));
    const auto pair = align_pairs(session);
    // Skip t = 0: y_0 is drawn outside the reachable subspace.
    const auto windows = extract_windows(pair, "s", w);
    const auto fit = fit_window(windows[1 + seed % 5]);
    const auto spec = eigenvalues(fit);
    ++total;
    // Remaining entries are roundoff on the nilpotent part of the fit.
    const std::vector<std::complex<double>> top(spec.lambda_T.begin(),
                                                spec.lambda_T.begin() + static_cast<long>(lt.size()));
    if (testing::multiset_distance(top, lt) < 1e-6) {
      ++recovered;
    } else {
      CHECK(fit.degenerate());
      ++flagged;
    }
  }
  CHECK(recovered >= 99);
  CHECK(recovered + flagged == total);
}

TEST_CASE("joint scaling leaves the transition spectrum unchanged") {
  Rng rng(505);
  for (int trial = 0; trial < 50; ++trial) {
    const auto win = random_window(5, 4, rng);
    const double c = trial % 2 ? -3.7 : 1e-3;
    const auto a = eigenvalues(fit_window(win));
    const auto b = eigenvalues(fit_window(make_window(c * win.Y_past, c * win.X_in, c * win.Y_next)));
    CHECK(testing::multiset_distance(a.lambda_T, b.lambda_T) < 1e-9);
  }
}

TEST_CASE("select_dominant examples") {
  const auto two = select_dominant({0.9, {0.5, 0.5}, 0.1}, 2);
  REQUIRE(two.size() == 2);
  CHECK(two[0].magnitude == doctest::Approx(0.9));
  CHECK(two[0].angle == 0.0);
  CHECK(two[1].magnitude == doctest::Approx(std::sqrt(0.5)).epsilon(1e-14));
  CHECK(two[1].angle == doctest::Approx(std::numbers::pi / 4).epsilon(1e-14));

  const auto padded = select_dominant({0.3}, 3);
  REQUIRE(padded.size() == 3);
  CHECK(padded[0] == Mode{0.3, 0.0});
  CHECK(padded[1] == Mode{0.0, 0.0});
  CHECK(padded[2] == Mode{0.0, 0.0});

  const auto pair = select_dominant({{0.4, 0.3}, {0.4, -0.3}}, 2);
  CHECK(pair[0].magnitude == doctest::Approx(0.5));
  CHECK(pair[0].angle == doctest::Approx(-std::atan2(3.0, 4.0)));
  CHECK(pair[1].angle == doctest::Approx(std::atan2(3.0, 4.0)));
  CHECK(std::atan2(3.0, 4.0) == doctest::Approx(0.6435).epsilon(1e-4));

  CHECK_THROWS_AS(select_dominant({0.3}, 0), Error);
  CHECK(principal_angle({-1.0, -0.0}) == doctest::Approx(std::numbers::pi));
}

TEST_CASE("build_features lengths and layout") {
  ModeSpectrum s;
  s.lambda_T = {0.5};
  s.lambda_C = {0.25};
  CHECK(build_features(s, InputType::T, 1).values == std::vector<double>{0.5, 0.0});
  CHECK(build_features(s, InputType::C, 1).values == std::vector<double>{0.25, 0.0});
  CHECK(build_features(s, InputType::TC, 1).values == std::vector<double>{0.5, 0.0, 0.25, 0.0});
  CHECK(build_features(s, InputType::TC, 7).values.size() == 28);
  CHECK(feature_length(InputType::TC, 7) == 28);
  CHECK(feature_length(InputType::C, 3) == 6);

  const ModeSpectrum empty;
  for (auto type : {InputType::T, InputType::C, InputType::TC}) {
    for (double v : build_features(empty, type, 5).values) CHECK(v == 0.0);
  }
  CHECK(parse_input_type("T+C") == InputType::TC);
  CHECK(std::string(to_string(InputType::TC)) == "T+C");
  CHECK_THROWS_AS(parse_input_type("X"), Error);
}
