#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dyad {

enum class Speaker { Therapist, Client };

struct TalkTurn {
  Speaker speaker = Speaker::Therapist;
  Eigen::VectorXd embedding;
  std::optional<std::string> text;
};

// The 11 rating-scale sub-scores, in the order used for label exports.
inline constexpr std::array<std::string_view, 11> kSubscoreKeys = {
    "ag", "ap", "co", "fb", "gd", "hw", "ip", "cb", "pt", "sc", "un"};
// Sub-scores followed by the session total.
inline constexpr std::array<std::string_view, 12> kScoreKeys = {
    "ag", "ap", "co", "fb", "gd", "hw", "ip", "cb", "pt", "sc", "un", "ctrs"};

inline constexpr int kSubscoreThreshold = 4;
inline constexpr int kTotalThreshold = 40;

// Index of `key` in kScoreKeys, or nullopt.
std::optional<std::size_t> score_index(std::string_view key);

struct Session {
  std::string session_id;
  std::string client_id;
  std::vector<TalkTurn> turns;
  std::map<std::string, int> subscores;

  int total() const;
  Eigen::Index dim() const {
    return turns.empty() ? 0 : turns.front().embedding.size();
  }
};

// Binary competence labels keyed like kScoreKeys.
struct LabelSet {
  std::array<std::uint8_t, 12> values{};

  int operator[](std::string_view key) const;
  int at(std::size_t i) const { return values.at(i); }
};

// Therapist inputs X and client observations Y, one column per exchange.
struct AlignedPair {
  Eigen::MatrixXd X;
  Eigen::MatrixXd Y;

  Eigen::Index T() const { return Y.cols(); }
  Eigen::Index dim() const { return Y.rows(); }
};

struct Window {
  std::string session_id;
  Eigen::Index t = 0;
  Eigen::Index w = 0;
  Eigen::MatrixXd Y_past;  // y_t .. y_{t+w-1}
  Eigen::MatrixXd X_in;    // x_t .. x_{t+w-1}
  Eigen::MatrixXd Y_next;  // y_{t+1} .. y_{t+w}
};

// Line-delimited JSON, one session per line. Blank lines are skipped.
std::vector<Session> load_corpus(const std::string& path);
std::vector<Session> read_corpus(std::istream& in);

void write_session(std::ostream& out, const Session& session);
void save_corpus(const std::string& path, const std::vector<Session>& sessions);

// session_id followed by the 12 labels in kScoreKeys order.
void write_labels_csv(std::ostream& out, const std::vector<Session>& sessions);

LabelSet binarize_labels(const Session& session);

Session normalize_turns(const Session& session);
AlignedPair align_pairs(const Session& session);

std::vector<Window> extract_windows(const AlignedPair& pair,
                                    const std::string& session_id,
                                    Eigen::Index w, Eigen::Index stride = 1);

// max(0, floor((T - w - 1) / stride) + 1)
Eigen::Index window_count(Eigen::Index T, Eigen::Index w, Eigen::Index stride);

}  // namespace dyad
