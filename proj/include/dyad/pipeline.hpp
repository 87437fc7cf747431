#pragma once

#include "dyad/eval.hpp"
#include "dyad/model_store.hpp"
#include "dyad/synth.hpp"

#include <complex>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace dyad {

struct SynthConfig {
  std::string out;  // session file; the manifest goes to <out>.manifest.json
  std::uint64_t seed = 0;
  bool null_corpus = false;  // both labels share system 0
  Eigen::Index dim = 2;
  std::vector<std::complex<double>> eigenvalues_T0{0.2};
  std::vector<std::complex<double>> eigenvalues_T1{0.9};
  // Empty: 0.5 on every dimension, so every direction is driven.
  std::vector<std::complex<double>> eigenvalues_C;
  double noise_sigma = 0.1;
  int control_rank = 0;
  CorpusShape shape;
};

struct SynthSystems {
  PlantedSystem system0;
  PlantedSystem system1;
};

SynthSystems synth_systems(const SynthConfig& config);
std::vector<Session> synth_corpus(const SynthConfig& config);
void run_synth(const SynthConfig& config);

struct FeaturizeConfig {
  std::string input;
  std::string out;  // directory
  std::vector<int> windows{3, 5, 8};
  std::vector<int> n_lambdas{1, 3, 5, 7};
  std::vector<InputType> input_types{InputType::T, InputType::C, InputType::TC};
  int stride = 1;
  SvdCutoff svd;
  int jobs = 1;
};

// features.csv, spectra.csv and labels.csv under config.out.
void run_featurize(const FeaturizeConfig& config);
void write_features_csv(std::ostream& out, const std::vector<Session>& sessions,
                        const std::vector<WindowSet>& sets, const FeaturizeConfig& config);
void write_spectra_csv(std::ostream& out, const std::vector<Session>& sessions,
                       const std::vector<WindowSet>& sets);

struct EvaluateConfig {
  std::string input;
  std::string out;  // directory
  GridConfig grid;
};

struct EvaluateSummary {
  std::size_t n_cells = 0;
  std::size_t n_failed = 0;
  std::size_t n_above_local = 0;
  double best_local_f1 = 0.0;
  double best_global_f1 = 0.0;
};

// Runs the grid and writes the table CSVs, per-cell detail, prediction dumps,
// the run manifest and the best model per score.
EvaluateSummary run_evaluate(const EvaluateConfig& config);
EvaluateSummary summarize(const GridReport& report);

void write_table2(std::ostream& out, const std::vector<LocalBaseline>& baselines);
void write_table3(std::ostream& out, const std::vector<GlobalBaseline>& baselines);
void write_table4(std::ostream& out, const GridReport& report);
void write_table5(std::ostream& out, const GridReport& report);

struct BaselineConfig {
  std::string input;
  std::string out;  // directory
  std::vector<std::string> score_keys;
  std::vector<int> windows{3, 5, 8};
  int stride = 1;
  int n_boot = 1000;
  std::uint64_t seed = 0;
};

struct BaselineReport {
  std::vector<LocalBaseline> local;
  std::vector<GlobalBaseline> global;
};

BaselineReport compute_baselines(const std::vector<Session>& sessions, const BaselineConfig& config);
// table2.csv and table3.csv under config.out.
void run_baseline(const BaselineConfig& config);

struct TrajectoryConfig {
  std::string input;
  std::string model;  // stored model file
  std::string out;    // CSV file
  std::vector<std::string> session_ids;  // empty: every session
  int stride = 1;
  double threshold = 0.5;
  SvdCutoff svd;
};

struct TrajectoryPoint {
  std::string session_id;
  int window_index = 0;
  double cumulative = 0.0;
};

std::vector<TrajectoryPoint> session_trajectories(const std::vector<Session>& sessions,
                                                  const StoredModel& model,
                                                  const TrajectoryConfig& config);
void run_trajectory(const TrajectoryConfig& config);

// Fixed 4-decimal rendering used by every report column holding an F1.
std::string format_f1(double v);

}  // namespace dyad
