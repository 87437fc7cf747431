#include "dyad/synth.hpp"

#include <fmt/format.h>

#include <Eigen/QR>

#include <algorithm>

namespace dyad {

namespace {

constexpr double kConjugateTol = 1e-12;

struct Blocks {
  std::vector<double> reals;
  std::vector<std::complex<double>> pairs;  // upper half-plane representatives
};

Blocks canonical_blocks(const std::vector<std::complex<double>>& eigenvalues) {
  Blocks b;
  std::vector<std::complex<double>> lower;
  for (const auto& z : eigenvalues) {
    if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) {
      fail(ErrorKind::Validation, "eigenvalues must be finite");
    }
    if (z.imag() == 0.0) {
      b.reals.push_back(z.real());
    } else if (z.imag() > 0.0) {
      b.pairs.push_back(z);
    } else {
      lower.push_back(z);
    }
  }
  std::vector<bool> used(lower.size(), false);
  for (const auto& z : b.pairs) {
    bool matched = false;
    for (std::size_t i = 0; i < lower.size(); ++i) {
      if (!used[i] && std::abs(lower[i] - std::conj(z)) <= kConjugateTol) {
        used[i] = true;
        matched = true;
        break;
      }
    }
    if (!matched) {
      fail(ErrorKind::Validation,
           fmt::format("eigenvalue {}{:+}i has no conjugate partner", z.real(), z.imag()));
    }
  }
  if (std::find(used.begin(), used.end(), false) != used.end()) {
    fail(ErrorKind::Validation, "eigenvalue list is not closed under conjugation");
  }
  return b;
}

}  // namespace

Eigen::MatrixXd random_orthogonal(Eigen::Index d, Rng& rng) {
  Eigen::MatrixXd G(d, d);
  for (Eigen::Index j = 0; j < d; ++j)
    for (Eigen::Index i = 0; i < d; ++i) G(i, j) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(G);
  Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(d, d);
  const Eigen::MatrixXd R = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < d; ++j) {
    if (R(j, j) < 0.0) Q.col(j) = -Q.col(j);
  }
  return Q;
}

Eigen::MatrixXd planted_matrix(Eigen::Index d, const std::vector<std::complex<double>>& eigenvalues,
                               Rng& rng) {
  const Blocks blocks = canonical_blocks(eigenvalues);
  const auto needed = static_cast<Eigen::Index>(blocks.reals.size() + 2 * blocks.pairs.size());
  if (needed > d) {
    fail(ErrorKind::Validation,
         fmt::format("{} eigenvalues do not fit in dimension {}", eigenvalues.size(), d));
  }
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(d, d);
  Eigen::Index k = 0;
  for (double r : blocks.reals) {
    J(k, k) = r;
    ++k;
  }
  for (const auto& z : blocks.pairs) {
    // [[a, b], [-b, a]] has eigenvalues a +- bi.
    J(k, k) = z.real();
    J(k, k + 1) = z.imag();
    J(k + 1, k) = -z.imag();
    J(k + 1, k + 1) = z.real();
    k += 2;
  }
  const Eigen::MatrixXd Q = random_orthogonal(d, rng);
  return Q * J * Q.transpose();
}

double PlantedSystem::spectral_radius_T() const {
  double r = 0.0;
  for (const auto& z : eigenvalues_T) r = std::max(r, std::abs(z));
  return r;
}

PlantedSystem make_planted_system(Eigen::Index d, const std::vector<std::complex<double>>& eigenvalues_T,
                                  const std::vector<std::complex<double>>& eigenvalues_C,
                                  std::uint64_t seed, double noise_sigma, int label,
                                  int control_rank) {
  if (d < 1) fail(ErrorKind::Validation, "dimension must be positive");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
    fail(ErrorKind::Validation, "noise_sigma must be finite and non-negative");
  }
  if (label != 0 && label != 1) fail(ErrorKind::Validation, "label must be 0 or 1");
  if (control_rank < 0 || control_rank > d) {
    fail(ErrorKind::Validation, "control_rank must lie in [0, d]");
  }
  PlantedSystem sys;
  Rng rng_a(derive_seed(seed, 0xA));
  Rng rng_b(derive_seed(seed, 0xB));
  sys.A_star = planted_matrix(d, eigenvalues_T, rng_a);
  sys.B_star = planted_matrix(d, eigenvalues_C, rng_b);
  sys.eigenvalues_T = eigenvalues_T;
  sys.eigenvalues_C = eigenvalues_C;
  sys.noise_sigma = noise_sigma;
  sys.label = label;
  sys.control_rank = control_rank;
  if (control_rank > 0) {
    Rng rng_u(derive_seed(seed, 0xC));
    sys.control_basis = random_orthogonal(d, rng_u).leftCols(control_rank);
  }
  return sys;
}

Session simulate_session(const PlantedSystem& system, Eigen::Index T, std::uint64_t seed,
                         const std::string& session_id, const std::string& client_id) {
  if (T < 2) fail(ErrorKind::Validation, "session length must be at least 2 exchanges");
  const Eigen::Index d = system.dim();
  Rng rng(seed);

  auto gaussian = [&](Eigen::Index n) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.normal();
    return v;
  };

  Session s;
  s.session_id = session_id;
  s.client_id = client_id;
  const int score = system.label == 1 ? 6 : 0;
  for (auto key : kSubscoreKeys) s.subscores[std::string(key)] = score;
  s.turns.reserve(static_cast<std::size_t>(2 * T));

  Eigen::VectorXd y = gaussian(d);
  for (Eigen::Index t = 0; t < T; ++t) {
    const Eigen::VectorXd x =
        system.control_rank > 0 ? Eigen::VectorXd(system.control_basis * gaussian(system.control_rank))
                                : gaussian(d);
    if (!y.allFinite()) {
      fail(ErrorKind::Numerical,
           fmt::format("simulated state became non-finite at t={} in session '{}'", t, session_id));
    }
    s.turns.push_back({Speaker::Therapist, x, std::nullopt});
    s.turns.push_back({Speaker::Client, y, std::nullopt});
    if (t + 1 < T) {
      Eigen::VectorXd next = system.A_star * y + system.B_star * x;
      if (system.noise_sigma > 0.0) next += system.noise_sigma * gaussian(d);
      y = std::move(next);
    }
  }
  return s;
}

std::vector<Session> make_labeled_corpus(const PlantedSystem& system0, const PlantedSystem& system1,
                                         const CorpusShape& shape, std::uint64_t seed) {
  const auto [lo, hi] = shape.length_range;
  if (shape.n_sessions < 2) fail(ErrorKind::Validation, "need at least 2 sessions");
  if (shape.n_clients < 2) fail(ErrorKind::Validation, "need at least 2 clients");
  if (shape.n_clients > shape.n_sessions) {
    fail(ErrorKind::Validation, "more clients than sessions");
  }
  if (lo < 2 || hi < lo) fail(ErrorKind::Validation, "invalid session length range");
  if (system0.dim() != system1.dim()) fail(ErrorKind::Validation, "systems differ in dimension");

  const int clients_per_label[2] = {(shape.n_clients + 1) / 2, shape.n_clients / 2};
  const int client_offset[2] = {0, clients_per_label[0]};
  int seen[2] = {0, 0};

  std::vector<Session> sessions;
  sessions.reserve(static_cast<std::size_t>(shape.n_sessions));
  for (int i = 0; i < shape.n_sessions; ++i) {
    const int label = i % 2;
    const int client = client_offset[label] + seen[label] % clients_per_label[label];
    ++seen[label];
    Rng len_rng(derive_seed(seed, static_cast<std::uint64_t>(i), 1));
    const auto T = static_cast<Eigen::Index>(lo + static_cast<int>(len_rng.below(
                                                      static_cast<std::uint64_t>(hi - lo + 1))));
    PlantedSystem sys = label == 1 ? system1 : system0;
    sys.label = label;
    sessions.push_back(simulate_session(sys, T, derive_seed(seed, static_cast<std::uint64_t>(i), 2),
                                        fmt::format("s{:04d}", i), fmt::format("c{:03d}", client)));
  }
  return sessions;
}

}  // namespace dyad
