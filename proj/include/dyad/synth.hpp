#pragma once

#include "dyad/common.hpp"
#include "dyad/corpus.hpp"

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <utility>
#include <vector>

namespace dyad {

// Ground-truth controlled linear system y_{t+1} = A* y_t + B* x_t + noise.
struct PlantedSystem {
  Eigen::MatrixXd A_star;
  Eigen::MatrixXd B_star;
  std::vector<std::complex<double>> eigenvalues_T;  // as requested
  std::vector<std::complex<double>> eigenvalues_C;
  double noise_sigma = 0.0;
  int label = 0;
  // 0: control entries are i.i.d. unit Gaussian. q > 0: controls are drawn
  // from a fixed random q-dimensional subspace.
  int control_rank = 0;
  Eigen::MatrixXd control_basis;  // d x control_rank, orthonormal columns

  Eigen::Index dim() const { return A_star.rows(); }
  double spectral_radius_T() const;
  bool unstable() const { return spectral_radius_T() > 1.0; }
};

// Real d x d matrix Q * J * Q^T with J the real block-diagonal canonical form
// of `eigenvalues` (2x2 rotation-scaling blocks for conjugate pairs, zeros
// elsewhere) and Q a random orthogonal matrix.
Eigen::MatrixXd planted_matrix(Eigen::Index d, const std::vector<std::complex<double>>& eigenvalues,
                               Rng& rng);

PlantedSystem make_planted_system(Eigen::Index d, const std::vector<std::complex<double>>& eigenvalues_T,
                                  const std::vector<std::complex<double>>& eigenvalues_C,
                                  std::uint64_t seed, double noise_sigma = 0.0, int label = 0,
                                  int control_rank = 0);

Eigen::MatrixXd random_orthogonal(Eigen::Index d, Rng& rng);

// T exchanges: therapist turn x_t followed by client turn y_t.
Session simulate_session(const PlantedSystem& system, Eigen::Index T, std::uint64_t seed,
                         const std::string& session_id = "s0", const std::string& client_id = "c0");

struct CorpusShape {
  int n_sessions = 40;
  int n_clients = 20;
  std::pair<int, int> length_range{12, 30};  // exchanges per session, inclusive
};

// Sessions alternate label 0 / label 1. Clients own sessions of a single
// label and are assigned round-robin within their label.
std::vector<Session> make_labeled_corpus(const PlantedSystem& system0, const PlantedSystem& system1,
                                         const CorpusShape& shape, std::uint64_t seed);

}  // namespace dyad
