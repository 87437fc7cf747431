#include "dyad/aggregate.hpp"

#include "dyad/classify.hpp"
#include "dyad/common.hpp"

namespace dyad {

const char* to_string(Accumulator acc) { return acc == Accumulator::Sum ? "sum" : "avg"; }

const char* to_string(AggregatorKind kind) { return kind == AggregatorKind::TM ? "TM" : "LR"; }

Accumulator parse_accumulator(const std::string& s) {
  if (s == "sum") return Accumulator::Sum;
  if (s == "avg") return Accumulator::Avg;
  fail(ErrorKind::Validation, "unknown accumulator '" + s + "'");
}

AggregatorKind parse_aggregator(const std::string& s) {
  if (s == "TM") return AggregatorKind::TM;
  if (s == "LR") return AggregatorKind::LR;
  fail(ErrorKind::Validation, "unknown aggregator '" + s + "'");
}

SessionScore accumulate(const std::vector<double>& window_preds, Accumulator accumulator,
                        double threshold, bool soft, std::string session_id) {
  if (window_preds.empty()) {
    fail(ErrorKind::EmptySession, "session '" + session_id + "' has no window predictions");
  }
  double total = 0.0;
  for (double p : window_preds) total += soft ? p : (p >= threshold ? 1.0 : 0.0);
  SessionScore score;
  score.session_id = std::move(session_id);
  score.accumulator = accumulator;
  score.n_windows = static_cast<int>(window_preds.size());
  score.value = accumulator == Accumulator::Sum ? total
                                                : total / static_cast<double>(window_preds.size());
  return score;
}

Aggregator fit_aggregator(AggregatorKind kind, const std::vector<SessionScore>& train_scores,
                          const std::vector<int>& train_labels) {
  if (train_scores.empty()) fail(ErrorKind::Validation, "aggregator needs at least one session");
  if (train_scores.size() != train_labels.size()) {
    fail(ErrorKind::Validation, "score and label counts differ");
  }
  Aggregator agg;
  agg.kind = kind;
  agg.accumulator = train_scores.front().accumulator;
  for (const auto& s : train_scores) {
    if (s.accumulator != agg.accumulator) {
      fail(ErrorKind::Validation, "training scores mix accumulators");
    }
  }
  if (kind == AggregatorKind::TM) {
    double sum = 0.0;
    for (const auto& s : train_scores) sum += s.value;
    agg.mean = sum / static_cast<double>(train_scores.size());
  } else {
    Eigen::MatrixXd X(static_cast<Eigen::Index>(train_scores.size()), 1);
    for (std::size_t i = 0; i < train_scores.size(); ++i) {
      X(static_cast<Eigen::Index>(i), 0) = train_scores[i].value;
    }
    const LogisticFit fit = fit_logistic(X, train_labels, 1.0);
    agg.weight = fit.params.weights[0];
    agg.bias = fit.params.bias;
  }
  return agg;
}

int predict_session(const Aggregator& agg, const SessionScore& score) {
  if (score.accumulator != agg.accumulator) {
    fail(ErrorKind::Validation, "session score accumulator differs from the aggregator's");
  }
  if (agg.kind == AggregatorKind::TM) return score.value >= agg.mean ? 1 : 0;
  return sigmoid(agg.weight * score.value + agg.bias) >= 0.5 ? 1 : 0;
}

std::vector<std::pair<int, double>> trajectory(const std::vector<double>& window_preds,
                                               double threshold) {
  if (window_preds.empty()) fail(ErrorKind::EmptySession, "no window predictions");
  std::vector<std::pair<int, double>> out;
  out.reserve(window_preds.size());
  double running = 0.0;
  for (std::size_t i = 0; i < window_preds.size(); ++i) {
    if (window_preds[i] >= threshold) running += 1.0;
    out.emplace_back(static_cast<int>(i), running);
  }
  return out;
}

}  // namespace dyad
