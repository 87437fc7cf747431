#include "dyad/dmdc.hpp"

#include "dyad/common.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <limits>
#include <numbers>
#include <tuple>

namespace dyad {

namespace {

// Fits with sigma_min / sigma_max below this are reported as degenerate.
constexpr double kIllConditioned = 1e-8;

void require_finite(const Eigen::MatrixXd& M, const char* what) {
  if (!all_finite(M.data(), static_cast<std::size_t>(M.size()))) {
    fail(ErrorKind::Validation, std::string(what) + " contains non-finite entries");
  }
}

std::string describe(const WindowRef& ref) {
  return "window (session '" + ref.session_id + "', t=" + std::to_string(ref.t) +
         ", w=" + std::to_string(ref.w) + ")";
}

std::vector<std::complex<double>> nonzero_spectrum(const Eigen::MatrixXd& product,
                                                   double zero_tol, Eigen::Index keep,
                                                   const WindowRef& ref, int& nonzero) {
  std::vector<std::complex<double>> values;
  nonzero = 0;
  if (product.size() > 0) {
    Eigen::EigenSolver<Eigen::MatrixXd> solver(product, /*computeEigenvectors=*/false);
    if (solver.info() != Eigen::Success) {
      fail(ErrorKind::Numerical, "eigenvalue solver did not converge for " + describe(ref));
    }
    const auto& ev = solver.eigenvalues();
    values.reserve(static_cast<std::size_t>(ev.size()));
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
      std::complex<double> z = ev[i];
      if (std::abs(z) <= zero_tol) {
        z = {0.0, 0.0};
      } else {
        ++nonzero;
      }
      values.push_back(z);
    }
  }

  std::vector<std::size_t> order(values.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double ma = std::abs(values[a]);
    const double mb = std::abs(values[b]);
    if (ma != mb) return ma > mb;
    const double pa = principal_angle(values[a]);
    const double pb = principal_angle(values[b]);
    if (pa != pb) return pa < pb;
    return a < b;
  });

  std::vector<std::complex<double>> sorted;
  sorted.reserve(static_cast<std::size_t>(keep));
  for (std::size_t i = 0; i < order.size() && static_cast<Eigen::Index>(sorted.size()) < keep; ++i) {
    sorted.push_back(values[order[i]]);
  }
  while (static_cast<Eigen::Index>(sorted.size()) < keep) sorted.emplace_back(0.0, 0.0);
  nonzero = std::min<int>(nonzero, static_cast<int>(keep));
  return sorted;
}

}  // namespace

double SvdCutoff::absolute(double sigma_max, Eigen::Index rows, Eigen::Index cols) const {
  const double rel = rel_tol ? *rel_tol
                             : std::numeric_limits<double>::epsilon() *
                                   static_cast<double>(std::max(rows, cols));
  return rel * sigma_max;
}

Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& M, const SvdCutoff& cutoff) {
  require_finite(M, "matrix");
  if (cutoff.rel_tol && !(*cutoff.rel_tol >= 0.0)) {
    fail(ErrorKind::Validation, "pseudo-inverse tolerance must be non-negative");
  }
  if (M.size() == 0) return Eigen::MatrixXd::Zero(M.cols(), M.rows());

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  const double tol = cutoff.absolute(s.size() ? s[0] : 0.0, M.rows(), M.cols());
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s[i] > tol) inv[i] = 1.0 / s[i];
  }
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

bool DynamicsFit::degenerate() const {
  if (rank == 0 || saturated()) return true;
  return sigma_min_retained < kIllConditioned * sigma_max;
}

DynamicsFit fit_window(const Window& window, const SvdCutoff& cutoff) {
  const Eigen::Index d = window.Y_past.rows();
  const Eigen::Index w = window.Y_past.cols();
  if (w < 2) fail(ErrorKind::Precondition, "window size must be at least 2");
  if (window.X_in.rows() != d || window.X_in.cols() != w || window.Y_next.rows() != d ||
      window.Y_next.cols() != w) {
    fail(ErrorKind::DimensionMismatch, "window matrices disagree in shape");
  }
  if (cutoff.rel_tol && !(*cutoff.rel_tol >= 0.0)) {
    fail(ErrorKind::Validation, "SVD tolerance must be non-negative");
  }

  DynamicsFit fit;
  fit.window_ref = {window.session_id, window.t, w};
  fit.Y_next = window.Y_next;
  require_finite(window.Y_past, "Y_past");
  require_finite(window.X_in, "X_in");
  require_finite(window.Y_next, "Y_next");

  Eigen::MatrixXd Z(2 * d, w);
  Z.topRows(d) = window.Y_past;
  Z.bottomRows(d) = window.X_in;

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(Z, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  fit.sigma_max = s.size() ? s[0] : 0.0;
  const double tol = cutoff.absolute(fit.sigma_max, Z.rows(), Z.cols());

  Eigen::Index r = 0;
  while (r < s.size() && s[r] > tol) ++r;
  fit.rank = r;
  fit.sigma_min_retained = r > 0 ? s[r - 1] : 0.0;

  const Eigen::MatrixXd V = svd.matrixV().leftCols(r);
  const Eigen::MatrixXd U = svd.matrixU().leftCols(r);
  const Eigen::VectorXd inv = s.head(r).cwiseInverse();
  // Z^+ = V diag(1/s) U^T, split by row block of Z.
  const Eigen::MatrixXd VS = V * inv.asDiagonal();
  fit.G_Y = VS * U.topRows(d).transpose();
  fit.G_X = VS * U.bottomRows(d).transpose();

  // Z^+ Z = V V^T; the residual is Y_next (I - V V^T).
  Eigen::MatrixXd P = -(V * V.transpose());
  P.diagonal().array() += 1.0;
  fit.residual = (window.Y_next * P).norm();

  if (window.Y_next.size() > 0) {
    const Eigen::MatrixXd gram = window.Y_next.transpose() * window.Y_next;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram, Eigen::EigenvaluesOnly);
    fit.y_next_norm2 = std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
  }
  return fit;
}

Eigen::MatrixXd materialize_transition(const DynamicsFit& fit) { return fit.Y_next * fit.G_Y; }

Eigen::MatrixXd materialize_control(const DynamicsFit& fit) { return fit.Y_next * fit.G_X; }

ModeSpectrum eigenvalues(const DynamicsFit& fit) {
  const Eigen::Index d = fit.Y_next.rows();
  const Eigen::Index w = fit.G_Y.rows();
  const Eigen::Index keep = std::min(d, w);
  const double zero_tol = kZeroEigenvalueRelTol * fit.y_next_norm2;

  ModeSpectrum spectrum;
  // Nonzero eigenvalues of Y_next * G (d x d) coincide with those of
  // G * Y_next (w x w).
  const Eigen::MatrixXd product_T = fit.G_Y * fit.Y_next;
  const Eigen::MatrixXd product_C = fit.G_X * fit.Y_next;
  spectrum.lambda_T = nonzero_spectrum(product_T, zero_tol, keep, fit.window_ref, spectrum.nonzero_T);
  spectrum.lambda_C = nonzero_spectrum(product_C, zero_tol, keep, fit.window_ref, spectrum.nonzero_C);
  return spectrum;
}

double principal_angle(std::complex<double> z) {
  if (z == std::complex<double>(0.0, 0.0)) return 0.0;
  const double a = std::arg(z);
  return a <= -std::numbers::pi ? std::numbers::pi : a;
}

std::vector<Mode> select_dominant(const std::vector<std::complex<double>>& spectrum,
                                  int n_lambda) {
  if (n_lambda < 1) fail(ErrorKind::Validation, "n_lambda must be at least 1");
  struct Entry {
    double magnitude;
    double angle;
    std::size_t index;
  };
  std::vector<Entry> entries;
  entries.reserve(spectrum.size());
  for (std::size_t i = 0; i < spectrum.size(); ++i) {
    entries.push_back({std::abs(spectrum[i]), principal_angle(spectrum[i]), i});
  }
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    return std::tie(b.magnitude, a.angle, a.index) < std::tie(a.magnitude, b.angle, b.index);
  });

  std::vector<Mode> modes(static_cast<std::size_t>(n_lambda));
  for (std::size_t i = 0; i < modes.size() && i < entries.size(); ++i) {
    if (entries[i].magnitude == 0.0) break;
    modes[i] = {entries[i].magnitude, entries[i].angle};
  }
  return modes;
}

const char* to_string(InputType type) {
  switch (type) {
    case InputType::T: return "T";
    case InputType::C: return "C";
    case InputType::TC: return "T+C";
  }
  return "?";
}

InputType parse_input_type(const std::string& s) {
  if (s == "T") return InputType::T;
  if (s == "C") return InputType::C;
  if (s == "T+C" || s == "TC") return InputType::TC;
  fail(ErrorKind::Validation, "unknown input type '" + s + "'");
}

std::size_t feature_length(InputType type, int n_lambda) {
  const auto n = static_cast<std::size_t>(n_lambda);
  return type == InputType::TC ? 4 * n : 2 * n;
}

FeatureVector build_features(const ModeSpectrum& modes, InputType input_type, int n_lambda) {
  FeatureVector fv;
  fv.input_type = input_type;
  fv.n_lambda = n_lambda;
  fv.values.reserve(feature_length(input_type, n_lambda));
  auto append = [&](const std::vector<std::complex<double>>& spectrum) {
    for (const Mode& m : select_dominant(spectrum, n_lambda)) {
      fv.values.push_back(m.magnitude);
      fv.values.push_back(m.angle);
    }
  };
  if (input_type != InputType::C) append(modes.lambda_T);
  if (input_type != InputType::T) append(modes.lambda_C);
  return fv;
}

}  // namespace dyad
