#pragma once

#include "dyad/aggregate.hpp"
#include "dyad/classify.hpp"
#include "dyad/corpus.hpp"
#include "dyad/dmdc.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace dyad {

// F1 on the positive label; 0 when precision + recall = 0.
double f1_score(const std::vector<int>& preds, const std::vector<int>& truth);

struct FoldAssignment {
  std::vector<int> fold_of_session;
  int k = 5;
  std::uint64_t seed = 0;
  // Largest |positive fraction of a fold - corpus positive fraction|.
  double max_stratification_gap = 0.0;
};

// Greedy stratified group split: client groups sorted by (size, positives)
// descending, ties in a seed-determined order, each placed in the fold that
// minimises the squared deviation of per-fold positive and negative counts
// from their targets.
FoldAssignment make_folds(const std::vector<std::string>& client_ids, const std::vector<int>& labels,
                          int k, std::uint64_t seed);
FoldAssignment make_folds(const std::vector<Session>& sessions, const std::string& score_key, int k,
                          std::uint64_t seed);

struct BootstrapResult {
  double mean = 0.0;
  double sigma = 0.0;
  double threshold_2sigma = 0.0;
  double threshold_3sigma = 0.0;
  double positive_fraction = 0.0;
  std::size_t n = 0;
  bool degenerate = false;  // all labels equal
};

// Prior-matched null: each replicate predicts 1 independently with the
// empirical positive rate and is scored by F1 against the labels.
BootstrapResult bootstrap_local_baseline(const std::vector<int>& window_labels, int n_boot = 1000,
                                         std::uint64_t seed = 0);
BootstrapResult bootstrap_global_baseline(const std::vector<int>& session_labels, int n_boot = 1000,
                                          std::uint64_t seed = 0);

struct Correlation {
  double r = 0.0;
  double p = 1.0;
};

// Sample Pearson r with a two-tailed p from Student's t on n - 2 dof.
Correlation pearson(const std::vector<double>& x, const std::vector<double>& y);

// ---------------------------------------------------------------------------
// Featurization shared by the grid and the CLI.

struct WindowSpectrum {
  std::size_t session = 0;  // index into the corpus
  Eigen::Index t = 0;
  ModeSpectrum spectrum;
  Eigen::Index rank = 0;
  double residual = 0.0;
  bool degenerate = false;
};

struct WindowSet {
  int w = 0;
  std::vector<WindowSpectrum> windows;  // session order, then t
};

// Normalizes, aligns and windows every session, then fits each window.
// Sessions whose normalization fails contribute no windows.
std::vector<WindowSet> featurize_corpus(const std::vector<Session>& sessions,
                                        const std::vector<int>& window_sizes, int stride,
                                        const SvdCutoff& cutoff, int jobs);

Eigen::MatrixXd feature_matrix(const WindowSet& set, InputType type, int n_lambda);

// ---------------------------------------------------------------------------
// Cross-validated grid.

struct GridConfig {
  std::vector<std::string> score_keys;
  std::vector<ModelSpec> models;
  std::vector<int> windows{3, 5, 8};
  std::vector<int> n_lambdas{1, 3, 5, 7};
  std::vector<InputType> input_types{InputType::T, InputType::C, InputType::TC};
  std::vector<Accumulator> accumulators{Accumulator::Sum, Accumulator::Avg};
  std::vector<AggregatorKind> aggregators{AggregatorKind::TM, AggregatorKind::LR};
  int folds = 5;
  std::uint64_t seed = 0;
  int n_boot = 1000;
  int stride = 1;
  double threshold = 0.5;
  SvdCutoff svd;
  int jobs = 1;
  bool soft_sum = false;

  // All 12 score keys and the full model grid.
  static GridConfig default_grid();
  void validate() const;
};

struct GlobalResult {
  Accumulator accumulator = Accumulator::Sum;
  AggregatorKind aggregator = AggregatorKind::TM;
  double f1 = 0.0;
  std::vector<double> fold_f1;
  bool failed = false;
  std::string error;
};

struct SessionPrediction {
  int fold = 0;
  std::size_t session = 0;
  Accumulator accumulator = Accumulator::Sum;
  AggregatorKind aggregator = AggregatorKind::TM;
  double score = 0.0;
  int predicted = 0;
  int truth = 0;
};

struct WindowPrediction {
  int fold = 0;
  std::size_t session = 0;
  Eigen::Index t = 0;
  double proba = 0.0;
  int truth = 0;
};

struct ExperimentResult {
  std::size_t cell_index = 0;
  std::string score_key;
  ModelSpec model;
  int w = 0;
  int n_lambda = 0;
  InputType input_type = InputType::TC;

  bool failed = false;
  std::string error;
  double local_f1 = 0.0;
  std::vector<double> fold_local_f1;
  double baseline_3sigma_local = 0.0;
  bool above_local_3sigma = false;

  std::vector<GlobalResult> global;  // empty unless above_local_3sigma
  double baseline_2sigma_global = 0.0;
  double baseline_3sigma_global = 0.0;
  std::vector<SessionPrediction> session_predictions;
};

struct LocalBaseline {
  std::string score_key;
  int w = 0;
  BootstrapResult result;
};

struct GlobalBaseline {
  std::string score_key;
  BootstrapResult result;
};

struct GridReport {
  std::vector<ExperimentResult> cells;  // cell-index order
  std::vector<LocalBaseline> local_baselines;
  std::vector<GlobalBaseline> global_baselines;
  std::vector<FoldAssignment> folds;  // one per score key
  std::size_t n_failed = 0;
};

// Everything a cell needs, precomputed once per corpus.
class GridContext {
public:
  GridContext(const std::vector<Session>& sessions, GridConfig config);

  const GridConfig& config() const { return config_; }
  const std::vector<Session>& sessions() const { return *sessions_; }
  const std::vector<WindowSet>& window_sets() const { return window_sets_; }
  std::size_t cell_count() const;

  // Window labels and folds for one (score, window size) pair.
  std::vector<int> window_labels(std::size_t score_index, std::size_t w_index) const;
  std::vector<int> window_folds(std::size_t score_index, std::size_t w_index) const;
  const FoldAssignment& folds(std::size_t score_index) const { return folds_[score_index]; }
  const std::vector<int>& session_labels(std::size_t score_index) const {
    return session_labels_[score_index];
  }
  const Eigen::MatrixXd& features(std::size_t w_index, std::size_t nl_index,
                                  std::size_t type_index) const;

  GridReport run() const;

  // Re-runs one cell and returns its out-of-fold window probabilities.
  std::vector<WindowPrediction> window_predictions(std::size_t cell_index) const;

  // Decomposes a cell index into (score, model, w, n_lambda, type) indices.
  std::array<std::size_t, 5> cell_coordinates(std::size_t cell_index) const;

private:
  const std::vector<Session>* sessions_;
  GridConfig config_;
  std::vector<WindowSet> window_sets_;
  std::vector<std::vector<int>> session_labels_;  // [score][session]
  std::vector<FoldAssignment> folds_;             // [score]
  std::vector<Eigen::MatrixXd> feature_cache_;    // [w][nl][type]
};

GridReport run_grid(const std::vector<Session>& sessions, const GridConfig& config);

// Trains on every window whose fold differs from `fold`. Rows of X and
// entries of labels / window_fold are aligned.
TrainedModel train_fold(const ModelSpec& spec, const Eigen::MatrixXd& X,
                        const std::vector<int>& labels, const std::vector<int>& window_fold,
                        int fold);

}  // namespace dyad
