// dyadmodes command-line front end. Links only the C interface.

#include "dyadmodes/dyadmodes.h"

#include <CLI11.hpp>

#include <cstdio>
#include <set>
#include <sstream>
#include <string>

namespace {

enum Exit { kOk = 0, kPartial = 1, kValidation = 2, kIo = 3 };

int exit_code(dm_status st) {
  if (st == DM_OK) return kOk;
  if (st == DM_ERR_IO) return kIo;
  return kValidation;
}

int report(const char* cmd, dm_status st) {
  if (st != DM_OK) std::fprintf(stderr, "%s: %s: %s\n", cmd, dm_status_name(st), dm_last_error());
  return exit_code(st);
}

const char* opt(const std::string& s) { return s.empty() ? nullptr : s.c_str(); }

// Grid values outside the default sets are allowed, but say so.
void note_override(const char* flag, const std::string& list, const std::set<std::string>& defaults) {
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty() && !defaults.count(item)) {
      std::fprintf(stderr, "note: %s value '%s' is outside the default grid\n", flag, item.c_str());
    }
  }
}

struct Common {
  std::string input;
  std::string out;
  std::string scores;
  std::string windows;
  std::string n_lambda;
  std::string input_types;
  std::string models;
  std::string accumulators;
  std::string aggregators;
  std::string sessions;
  std::string model;
  int folds = 5;
  std::uint64_t seed = 0;
  int boot = 1000;
  int stride = 1;
  double threshold = 0.5;
  double svd_tol = -1.0;
  int jobs = 1;
  bool null_corpus = false;
  bool soft_sum = false;
  int dim = 16;
  double noise = 0.1;
  int n_sessions = 40;
  int n_clients = 20;
  int min_length = 12;
  int max_length = 30;
  int control_rank = 0;
  std::string lambda_t0;
  std::string lambda_t1;
  std::string lambda_c;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Windowed DMD-with-control spectral features for dyadic interactions"};
  app.set_config("--config", "", "Read options from a TOML/INI file; command-line flags take precedence");
  app.require_subcommand(1);

  Common o;
  {
    dm_synth_config d;
    dm_synth_config_init(&d);
    o.dim = d.dim;
    o.noise = d.noise_sigma;
    o.n_sessions = d.n_sessions;
    o.n_clients = d.n_clients;
    o.min_length = d.min_length;
    o.max_length = d.max_length;
  }

  auto* synth = app.add_subcommand("synth", "Generate a synthetic labeled corpus");
  synth->add_option("--out", o.out, "Session file to write")->required();
  synth->add_option("--seed", o.seed, "Random seed");
  synth->add_flag("--null", o.null_corpus, "Both labels share the same dynamics");
  synth->add_option("--dim", o.dim, "Embedding dimension");
  synth->add_option("--noise", o.noise, "Observation noise sigma");
  synth->add_option("--n-sessions", o.n_sessions, "Session count");
  synth->add_option("--n-clients", o.n_clients, "Client count");
  synth->add_option("--min-length", o.min_length, "Shortest session, in exchanges");
  synth->add_option("--max-length", o.max_length, "Longest session, in exchanges");
  synth->add_option("--control-rank", o.control_rank, "Confine therapist inputs to a subspace (0: full)");
  synth->add_option("--lambda-t0", o.lambda_t0, "Transition eigenvalues of label 0, e.g. 0.2 or 0.4+0.3i,0.4-0.3i");
  synth->add_option("--lambda-t1", o.lambda_t1, "Transition eigenvalues of label 1");
  synth->add_option("--lambda-c", o.lambda_c, "Controller eigenvalues shared by both labels");

  auto* featurize = app.add_subcommand("featurize", "Fit every window and dump features and spectra");
  featurize->add_option("--input", o.input, "Session file")->required();
  featurize->add_option("--out", o.out, "Output directory")->required();
  featurize->add_option("--windows", o.windows, "Window sizes, comma separated");
  featurize->add_option("--n-lambda", o.n_lambda, "Mode counts, comma separated");
  featurize->add_option("--input-types", o.input_types, "T, C and/or T+C");
  featurize->add_option("--stride", o.stride, "Window stride");
  featurize->add_option("--svd-tol", o.svd_tol, "Relative singular value cutoff (negative: default)");
  featurize->add_option("--jobs", o.jobs, "Worker threads");

  auto* evaluate = app.add_subcommand("evaluate", "Cross-validated grid with baselines and reports");
  evaluate->add_option("--input", o.input, "Session file")->required();
  evaluate->add_option("--out", o.out, "Output directory")->required();
  evaluate->add_option("--scores", o.scores, "Score keys, comma separated, or 'all'");
  evaluate->add_option("--models", o.models, "Models such as GNB,LR,L-SVM_1,KNN_5, or 'all'");
  evaluate->add_option("--windows", o.windows, "Window sizes, comma separated");
  evaluate->add_option("--n-lambda", o.n_lambda, "Mode counts, comma separated");
  evaluate->add_option("--input-types", o.input_types, "T, C and/or T+C");
  evaluate->add_option("--accumulators", o.accumulators, "sum and/or avg");
  evaluate->add_option("--aggregators", o.aggregators, "TM and/or LR");
  evaluate->add_option("--folds", o.folds, "Cross-validation folds");
  evaluate->add_option("--seed", o.seed, "Random seed");
  evaluate->add_option("--boot", o.boot, "Bootstrap replicates");
  evaluate->add_option("--stride", o.stride, "Window stride");
  evaluate->add_option("--threshold", o.threshold, "Window decision threshold");
  evaluate->add_option("--svd-tol", o.svd_tol, "Relative singular value cutoff (negative: default)");
  evaluate->add_option("--jobs", o.jobs, "Worker threads");
  evaluate->add_flag("--soft-sum", o.soft_sum, "Sum window probabilities instead of counting");

  auto* baseline = app.add_subcommand("baseline", "Bootstrapped local and global significance baselines");
  baseline->add_option("--input", o.input, "Session file")->required();
  baseline->add_option("--out", o.out, "Output directory")->required();
  baseline->add_option("--scores", o.scores, "Score keys, comma separated, or 'all'");
  baseline->add_option("--windows", o.windows, "Window sizes, comma separated");
  baseline->add_option("--stride", o.stride, "Window stride");
  baseline->add_option("--boot", o.boot, "Bootstrap replicates");
  baseline->add_option("--seed", o.seed, "Random seed");

  auto* traj = app.add_subcommand("trajectory", "Cumulative competent-window counts per session");
  traj->add_option("--input", o.input, "Session file")->required();
  traj->add_option("--model", o.model, "Stored model file written by evaluate")->required();
  traj->add_option("--out", o.out, "CSV file to write")->required();
  traj->add_option("--session", o.sessions, "Session ids, comma separated (default: all)");
  traj->add_option("--stride", o.stride, "Window stride");
  traj->add_option("--threshold", o.threshold, "Window decision threshold");
  traj->add_option("--svd-tol", o.svd_tol, "Relative singular value cutoff (negative: default)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kValidation;
  }

  if (*synth) {
    dm_synth_config c;
    dm_synth_config_init(&c);
    c.out = o.out.c_str();
    c.seed = o.seed;
    c.null_corpus = o.null_corpus ? 1 : 0;
    c.dim = o.dim;
    c.noise_sigma = o.noise;
    c.n_sessions = o.n_sessions;
    c.n_clients = o.n_clients;
    c.min_length = o.min_length;
    c.max_length = o.max_length;
    c.control_rank = o.control_rank;
    c.lambda_T0 = opt(o.lambda_t0);
    c.lambda_T1 = opt(o.lambda_t1);
    c.lambda_C = opt(o.lambda_c);
    return report("synth", dm_synth(&c));
  }

  note_override("--windows", o.windows, {"3", "5", "8"});
  note_override("--n-lambda", o.n_lambda, {"1", "3", "5", "7"});

  if (*featurize) {
    dm_featurize_config c;
    dm_featurize_config_init(&c);
    c.input = o.input.c_str();
    c.out = o.out.c_str();
    c.windows = opt(o.windows);
    c.n_lambdas = opt(o.n_lambda);
    c.input_types = opt(o.input_types);
    c.stride = o.stride;
    c.svd_rel_tol = o.svd_tol;
    c.jobs = o.jobs;
    return report("featurize", dm_featurize(&c));
  }

  if (*evaluate) {
    dm_evaluate_config c;
    dm_evaluate_config_init(&c);
    c.input = o.input.c_str();
    c.out = o.out.c_str();
    c.scores = opt(o.scores);
    c.models = opt(o.models);
    c.windows = opt(o.windows);
    c.n_lambdas = opt(o.n_lambda);
    c.input_types = opt(o.input_types);
    c.accumulators = opt(o.accumulators);
    c.aggregators = opt(o.aggregators);
    c.folds = o.folds;
    c.seed = o.seed;
    c.n_boot = o.boot;
    c.stride = o.stride;
    c.threshold = o.threshold;
    c.svd_rel_tol = o.svd_tol;
    c.jobs = o.jobs;
    c.soft_sum = o.soft_sum ? 1 : 0;
    dm_evaluate_summary s{};
    const dm_status st = dm_evaluate(&c, &s);
    if (st != DM_OK) return report("evaluate", st);
    std::printf("cells=%zu failed=%zu above_local_3sigma=%zu best_local_f1=%.4f best_global_f1=%.4f\n",
                s.n_cells, s.n_failed, s.n_above_local, s.best_local_f1, s.best_global_f1);
    if (s.n_failed == 0) return kOk;
    if (s.n_failed == s.n_cells) {
      std::fprintf(stderr, "evaluate: every grid cell failed\n");
      return kValidation;
    }
    std::fprintf(stderr, "evaluate: %zu of %zu grid cells failed\n", s.n_failed, s.n_cells);
    return kPartial;
  }

  if (*baseline) {
    dm_baseline_config c;
    dm_baseline_config_init(&c);
    c.input = o.input.c_str();
    c.out = o.out.c_str();
    c.scores = opt(o.scores);
    c.windows = opt(o.windows);
    c.stride = o.stride;
    c.n_boot = o.boot;
    c.seed = o.seed;
    return report("baseline", dm_baseline(&c));
  }

  dm_trajectory_config c;
  dm_trajectory_config_init(&c);
  c.input = o.input.c_str();
  c.model = o.model.c_str();
  c.out = o.out.c_str();
  c.sessions = opt(o.sessions);
  c.stride = o.stride;
  c.threshold = o.threshold;
  c.svd_rel_tol = o.svd_tol;
  return report("trajectory", dm_trajectory(&c));
}
