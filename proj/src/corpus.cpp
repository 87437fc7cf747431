#include "dyad/corpus.hpp"

#include "dyad/common.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace dyad {

using nlohmann::json;
using nlohmann::ordered_json;

std::optional<std::size_t> score_index(std::string_view key) {
  for (std::size_t i = 0; i < kScoreKeys.size(); ++i) {
    if (kScoreKeys[i] == key) return i;
  }
  return std::nullopt;
}

int Session::total() const {
  int sum = 0;
  for (const auto& [key, value] : subscores) sum += value;
  return sum;
}

int LabelSet::operator[](std::string_view key) const {
  const auto idx = score_index(key);
  if (!idx) fail(ErrorKind::Validation, "unknown score key '" + std::string(key) + "'");
  return values[*idx];
}

namespace {

// JSON has no spelling for non-finite numbers, but exporters routinely emit
// NaN / Infinity anyway. Detect such bare tokens outside string literals so
// they can be reported as invalid values rather than as syntax errors.
bool has_bare_nonfinite_token(const std::string& line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (in_string) {
      if (c == '\\') {
        ++i;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
      continue;
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      std::size_t j = i;
      while (j < line.size() && std::isalpha(static_cast<unsigned char>(line[j]))) ++j;
      std::string word = line.substr(i, j - i);
      for (auto& ch : word) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
      if (word == "nan" || word == "inf" || word == "infinity") return true;
      i = j - 1;
    }
  }
  return false;
}

std::string at_line(std::size_t line_no) {
  return "line " + std::to_string(line_no) + ": ";
}

Session parse_session(const json& j, std::size_t line_no) {
  const auto where = at_line(line_no);
  if (!j.is_object()) fail(ErrorKind::Parse, where + "record is not a JSON object");

  Session s;
  auto require_string = [&](const char* field) {
    auto it = j.find(field);
    if (it == j.end() || !it->is_string()) {
      fail(ErrorKind::Parse, where + "missing string field '" + field + "'");
    }
    return it->get<std::string>();
  };
  s.session_id = require_string("session_id");
  s.client_id = require_string("client_id");

  auto sub = j.find("subscores");
  if (sub == j.end() || !sub->is_object()) {
    fail(ErrorKind::Parse, where + "missing object field 'subscores'");
  }
  for (const auto& [key, value] : sub->items()) {
    if (!score_index(key) || key == "ctrs") {
      fail(ErrorKind::Validation, where + "unknown sub-score key '" + key + "'");
    }
    if (!value.is_number_integer()) {
      fail(ErrorKind::Validation, where + "sub-score '" + key + "' is not an integer");
    }
    const auto v = value.get<std::int64_t>();
    if (v < 0 || v > 6) {
      fail(ErrorKind::Validation, where + "sub-score '" + key + "' outside 0..6");
    }
    s.subscores[key] = static_cast<int>(v);
  }
  for (auto key : kSubscoreKeys) {
    if (!s.subscores.count(std::string(key))) {
      fail(ErrorKind::Validation, where + "missing sub-score '" + std::string(key) + "'");
    }
  }
  if (auto total = j.find("total"); total != j.end()) {
    if (!total->is_number_integer() || total->get<std::int64_t>() != s.total()) {
      fail(ErrorKind::Validation, where + "total does not equal the sum of sub-scores");
    }
  }

  auto turns = j.find("turns");
  if (turns == j.end() || !turns->is_array()) {
    fail(ErrorKind::Parse, where + "missing array field 'turns'");
  }
  s.turns.reserve(turns->size());
  for (std::size_t k = 0; k < turns->size(); ++k) {
    const auto& tj = (*turns)[k];
    const auto turn_where = where + "turn " + std::to_string(k) + ": ";
    if (!tj.is_object()) fail(ErrorKind::Parse, turn_where + "turn is not an object");

    TalkTurn turn;
    auto sp = tj.find("speaker");
    if (sp == tj.end() || !sp->is_string()) {
      fail(ErrorKind::Parse, turn_where + "missing speaker");
    }
    const auto speaker = sp->get<std::string>();
    if (speaker == "therapist") {
      turn.speaker = Speaker::Therapist;
    } else if (speaker == "client") {
      turn.speaker = Speaker::Client;
    } else {
      fail(ErrorKind::Validation, turn_where + "unknown speaker '" + speaker + "'");
    }

    auto emb = tj.find("embedding");
    if (emb == tj.end() || !emb->is_array()) {
      fail(ErrorKind::Parse, turn_where + "missing embedding array");
    }
    if (emb->empty()) fail(ErrorKind::Validation, turn_where + "empty embedding");
    turn.embedding.resize(static_cast<Eigen::Index>(emb->size()));
    for (std::size_t e = 0; e < emb->size(); ++e) {
      const auto& v = (*emb)[e];
      if (!v.is_number()) {
        fail(ErrorKind::Parse, turn_where + "embedding entry " + std::to_string(e) +
                                   " is not a number");
      }
      const double x = v.get<double>();
      if (!std::isfinite(x)) {
        fail(ErrorKind::Validation, turn_where + "non-finite embedding entry " +
                                        std::to_string(e));
      }
      turn.embedding[static_cast<Eigen::Index>(e)] = x;
    }

    if (auto text = tj.find("text"); text != tj.end() && !text->is_null()) {
      if (!text->is_string()) fail(ErrorKind::Parse, turn_where + "text is not a string");
      turn.text = text->get<std::string>();
    }
    s.turns.push_back(std::move(turn));
  }
  return s;
}

}  // namespace

std::vector<Session> read_corpus(std::istream& in) {
  std::vector<Session> sessions;
  Eigen::Index dim = -1;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;

    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      if (has_bare_nonfinite_token(line)) {
        fail(ErrorKind::Validation, at_line(line_no) + "non-finite number in record");
      }
      fail(ErrorKind::Parse, at_line(line_no) + e.what());
    }

    Session s = parse_session(j, line_no);
    for (const auto& turn : s.turns) {
      if (dim < 0) dim = turn.embedding.size();
      if (turn.embedding.size() != dim) {
        fail(ErrorKind::DimensionMismatch,
             at_line(line_no) + "embedding dimension " +
                 std::to_string(turn.embedding.size()) + " differs from corpus dimension " +
                 std::to_string(dim));
      }
    }
    sessions.push_back(std::move(s));
  }
  return sessions;
}

std::vector<Session> load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open corpus file '" + path + "'");
  return read_corpus(in);
}

void write_session(std::ostream& out, const Session& session) {
  ordered_json j;
  j["session_id"] = session.session_id;
  j["client_id"] = session.client_id;
  ordered_json sub = ordered_json::object();
  for (auto key : kSubscoreKeys) {
    auto it = session.subscores.find(std::string(key));
    if (it != session.subscores.end()) sub[std::string(key)] = it->second;
  }
  j["subscores"] = std::move(sub);
  ordered_json turns = ordered_json::array();
  for (const auto& turn : session.turns) {
    ordered_json tj;
    tj["speaker"] = turn.speaker == Speaker::Therapist ? "therapist" : "client";
    tj["embedding"] = std::vector<double>(turn.embedding.data(),
                                          turn.embedding.data() + turn.embedding.size());
    if (turn.text) tj["text"] = *turn.text;
    turns.push_back(std::move(tj));
  }
  j["turns"] = std::move(turns);
  out << j.dump() << '\n';
}

void save_corpus(const std::string& path, const std::vector<Session>& sessions) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write corpus file '" + path + "'");
  for (const auto& s : sessions) write_session(out, s);
  if (!out) fail(ErrorKind::Io, "write failed for '" + path + "'");
}

void write_labels_csv(std::ostream& out, const std::vector<Session>& sessions) {
  out << "session_id";
  for (auto key : kScoreKeys) out << ',' << key;
  out << '\n';
  for (const auto& s : sessions) {
    const LabelSet labels = binarize_labels(s);
    out << s.session_id;
    for (std::size_t i = 0; i < kScoreKeys.size(); ++i) out << ',' << labels.at(i);
    out << '\n';
  }
}

LabelSet binarize_labels(const Session& session) {
  LabelSet labels;
  int total = 0;
  for (std::size_t i = 0; i < kSubscoreKeys.size(); ++i) {
    const std::string key(kSubscoreKeys[i]);
    auto it = session.subscores.find(key);
    if (it == session.subscores.end()) {
      fail(ErrorKind::Validation,
           "session '" + session.session_id + "' is missing sub-score '" + key + "'");
    }
    if (it->second < 0 || it->second > 6) {
      fail(ErrorKind::Validation,
           "session '" + session.session_id + "' sub-score '" + key + "' outside 0..6");
    }
    labels.values[i] = it->second >= kSubscoreThreshold ? 1 : 0;
    total += it->second;
  }
  labels.values[11] = total >= kTotalThreshold ? 1 : 0;
  return labels;
}

Session normalize_turns(const Session& session) {
  Session out;
  out.session_id = session.session_id;
  out.client_id = session.client_id;
  out.subscores = session.subscores;

  // Merge runs of the same speaker into their element-wise mean.
  std::vector<TalkTurn> merged;
  for (std::size_t i = 0; i < session.turns.size();) {
    std::size_t j = i + 1;
    while (j < session.turns.size() && session.turns[j].speaker == session.turns[i].speaker) ++j;
    TalkTurn turn;
    turn.speaker = session.turns[i].speaker;
    if (j - i == 1) {
      turn = session.turns[i];
    } else {
      turn.embedding = session.turns[i].embedding;
      for (std::size_t k = i + 1; k < j; ++k) turn.embedding += session.turns[k].embedding;
      turn.embedding /= static_cast<double>(j - i);
      std::string text;
      bool any_text = false;
      for (std::size_t k = i; k < j; ++k) {
        if (!session.turns[k].text) continue;
        if (any_text) text += ' ';
        text += *session.turns[k].text;
        any_text = true;
      }
      if (any_text) turn.text = std::move(text);
    }
    merged.push_back(std::move(turn));
    i = j;
  }

  std::size_t begin = 0;
  std::size_t end = merged.size();
  if (begin < end && merged[begin].speaker == Speaker::Client) ++begin;
  if (begin < end && merged[end - 1].speaker == Speaker::Therapist) --end;
  if (end - begin < 2) {
    fail(ErrorKind::EmptySession,
         "session '" + session.session_id + "' has no therapist-client exchange");
  }
  out.turns.assign(std::make_move_iterator(merged.begin() + static_cast<std::ptrdiff_t>(begin)),
                   std::make_move_iterator(merged.begin() + static_cast<std::ptrdiff_t>(end)));
  return out;
}

AlignedPair align_pairs(const Session& session) {
  const auto& turns = session.turns;
  if (turns.empty() || turns.size() % 2 != 0) {
    fail(ErrorKind::Precondition,
         "session '" + session.session_id + "' is not a sequence of complete exchanges");
  }
  for (std::size_t i = 0; i < turns.size(); ++i) {
    const Speaker expected = i % 2 == 0 ? Speaker::Therapist : Speaker::Client;
    if (turns[i].speaker != expected) {
      fail(ErrorKind::Precondition, "session '" + session.session_id +
                                        "' does not alternate therapist/client at turn " +
                                        std::to_string(i));
    }
  }
  const Eigen::Index d = turns.front().embedding.size();
  const Eigen::Index T = static_cast<Eigen::Index>(turns.size() / 2);
  AlignedPair pair;
  pair.X.resize(d, T);
  pair.Y.resize(d, T);
  for (Eigen::Index j = 0; j < T; ++j) {
    const auto& x = turns[static_cast<std::size_t>(2 * j)].embedding;
    const auto& y = turns[static_cast<std::size_t>(2 * j + 1)].embedding;
    if (x.size() != d || y.size() != d) {
      fail(ErrorKind::DimensionMismatch,
           "session '" + session.session_id + "' has mixed embedding dimensions");
    }
    pair.X.col(j) = x;
    pair.Y.col(j) = y;
  }
  return pair;
}

Eigen::Index window_count(Eigen::Index T, Eigen::Index w, Eigen::Index stride) {
  if (w < 1 || stride < 1 || T <= w) return 0;
  return (T - w - 1) / stride + 1;
}

std::vector<Window> extract_windows(const AlignedPair& pair, const std::string& session_id,
                                    Eigen::Index w, Eigen::Index stride) {
  if (w < 2) fail(ErrorKind::Precondition, "window size must be at least 2");
  if (stride < 1) fail(ErrorKind::Precondition, "stride must be at least 1");
  const Eigen::Index n = window_count(pair.T(), w, stride);
  std::vector<Window> windows;
  windows.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index t = i * stride;
    Window win;
    win.session_id = session_id;
    win.t = t;
    win.w = w;
    win.Y_past = pair.Y.middleCols(t, w);
    win.X_in = pair.X.middleCols(t, w);
    win.Y_next = pair.Y.middleCols(t + 1, w);
    windows.push_back(std::move(win));
  }
  return windows;
}

}  // namespace dyad
