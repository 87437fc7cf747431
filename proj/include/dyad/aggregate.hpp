#pragma once

#include <string>
#include <utility>
#include <vector>

namespace dyad {

enum class Accumulator { Sum, Avg };
enum class AggregatorKind { TM, LR };

const char* to_string(Accumulator acc);
const char* to_string(AggregatorKind kind);
Accumulator parse_accumulator(const std::string& s);
AggregatorKind parse_aggregator(const std::string& s);

struct SessionScore {
  std::string session_id;
  Accumulator accumulator = Accumulator::Sum;
  double value = 0.0;
  int n_windows = 0;
};

// Counts windows whose probability reaches `threshold`; Avg divides by the
// window count. With `soft` the raw probabilities are summed instead.
SessionScore accumulate(const std::vector<double>& window_preds, Accumulator accumulator,
                        double threshold = 0.5, bool soft = false, std::string session_id = {});

struct Aggregator {
  AggregatorKind kind = AggregatorKind::TM;
  Accumulator accumulator = Accumulator::Sum;
  double mean = 0.0;  // TM
  double weight = 0.0;  // LR
  double bias = 0.0;    // LR
};

Aggregator fit_aggregator(AggregatorKind kind, const std::vector<SessionScore>& train_scores,
                          const std::vector<int>& train_labels);

int predict_session(const Aggregator& agg, const SessionScore& score);

// Running count of competent windows: (window index, cumulative count).
std::vector<std::pair<int, double>> trajectory(const std::vector<double>& window_preds,
                                               double threshold = 0.5);

}  // namespace dyad
