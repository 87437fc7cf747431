#pragma once

#include "dyad/common.hpp"
#include "dyad/corpus.hpp"

#include <Eigen/Dense>

#include <unistd.h>

#include <filesystem>
#include <string>

namespace testing {

inline Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, dyad::Rng& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.normal();
  return m;
}

inline double rel_fro(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const double scale = std::max(a.norm(), b.norm());
  return scale == 0.0 ? 0.0 : (a - b).norm() / scale;
}

// Session with all 11 sub-scores set to `score`.
inline dyad::Session uniform_session(const std::string& id, const std::string& client, int score) {
  dyad::Session s;
  s.session_id = id;
  s.client_id = client;
  for (auto key : dyad::kSubscoreKeys) s.subscores[std::string(key)] = score;
  return s;
}

inline void add_turn(dyad::Session& s, dyad::Speaker who, const Eigen::VectorXd& e) {
  s.turns.push_back({who, e, std::nullopt});
}

// Alternating session of T exchanges with random embeddings.
inline dyad::Session random_session(const std::string& id, const std::string& client, int score,
                                    int T, Eigen::Index d, dyad::Rng& rng) {
  dyad::Session s = uniform_session(id, client, score);
  for (int t = 0; t < T; ++t) {
    add_turn(s, dyad::Speaker::Therapist, gaussian(d, 1, rng).col(0));
    add_turn(s, dyad::Speaker::Client, gaussian(d, 1, rng).col(0));
  }
  return s;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("dyadmodes_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
  std::filesystem::path path_;
};

}  // namespace testing
