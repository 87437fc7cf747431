#pragma once

#include "dyad/corpus.hpp"

#include <Eigen/Dense>

#include <complex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace dyad {

struct SvdCutoff {
  // Singular values below rel_tol * sigma_max are treated as zero. When
  // unset the cutoff is machine epsilon * max(rows, cols) * sigma_max.
  std::optional<double> rel_tol;

  double absolute(double sigma_max, Eigen::Index rows, Eigen::Index cols) const;
};

// Moore-Penrose pseudo-inverse via SVD.
Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& M, const SvdCutoff& cutoff = {});

struct WindowRef {
  std::string session_id;
  Eigen::Index t = 0;
  Eigen::Index w = 0;
};

// Least-squares fit of Y_next = A * Y_past + B * X_in in factored form:
// [G_Y; G_X] stacked horizontally is the pseudo-inverse of [Y_past; X_in],
// so A = Y_next * G_Y and B = Y_next * G_X. The d x d matrices are never
// formed on the hot path.
struct DynamicsFit {
  WindowRef window_ref;
  Eigen::MatrixXd G_Y;     // w x d
  Eigen::MatrixXd G_X;     // w x d
  Eigen::MatrixXd Y_next;  // d x w
  Eigen::Index rank = 0;   // numerical rank of the stacked snapshot matrix
  double residual = 0.0;   // ||Y_next - [A B][Y_past; X_in]||_F
  double sigma_max = 0.0;  // largest singular value of the snapshot matrix
  double sigma_min_retained = 0.0;
  double y_next_norm2 = 0.0;  // spectral norm of Y_next

  // Every snapshot column is independent, so the fit interpolates the window
  // instead of identifying dynamics from a redundant snapshot.
  bool saturated() const { return rank > 0 && rank == G_Y.rows(); }
  // Saturated, rank zero, or numerically ill-conditioned. Spectra of flagged
  // fits are not expected to match any generating system.
  bool degenerate() const;
};

DynamicsFit fit_window(const Window& window, const SvdCutoff& cutoff = {});

// Dense d x d transition / control matrices, for testing and inspection.
Eigen::MatrixXd materialize_transition(const DynamicsFit& fit);
Eigen::MatrixXd materialize_control(const DynamicsFit& fit);

struct ModeSpectrum {
  // Sorted by dominance (see select_dominant); zero-magnitude entries are
  // exact zeros. Length min(d, w).
  std::vector<std::complex<double>> lambda_T;
  std::vector<std::complex<double>> lambda_C;
  int nonzero_T = 0;
  int nonzero_C = 0;
};

// Relative threshold used when counting nonzero eigenvalues: |lambda| must
// exceed this times the spectral norm of Y_next.
inline constexpr double kZeroEigenvalueRelTol = 1e-10;

ModeSpectrum eigenvalues(const DynamicsFit& fit);

struct Mode {
  double magnitude = 0.0;
  double angle = 0.0;  // radians in (-pi, pi]

  friend bool operator==(const Mode&, const Mode&) = default;
};

// Principal argument mapped onto (-pi, pi].
double principal_angle(std::complex<double> z);

// Sort by magnitude descending, angle ascending, then original index; keep
// the first n_lambda and pad with (0, 0).
std::vector<Mode> select_dominant(const std::vector<std::complex<double>>& spectrum,
                                  int n_lambda);

enum class InputType { T, C, TC };

const char* to_string(InputType type);
InputType parse_input_type(const std::string& s);

struct FeatureVector {
  std::vector<double> values;
  InputType input_type = InputType::TC;
  int n_lambda = 1;
};

std::size_t feature_length(InputType type, int n_lambda);

FeatureVector build_features(const ModeSpectrum& modes, InputType input_type, int n_lambda);

}  // namespace dyad
