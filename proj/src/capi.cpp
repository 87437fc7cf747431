#include "dyadmodes/dyadmodes.h"

#include "dyad/pipeline.hpp"

#include <fmt/format.h>

#include <complex>
#include <exception>
#include <memory>
#include <new>
#include <sstream>
#include <string>
#include <vector>

struct dm_corpus {
  std::vector<dyad::Session> sessions;
};

struct dm_model {
  dyad::StoredModel stored;
};

namespace {

thread_local std::string g_last_error;

dm_status status_of(dyad::ErrorKind kind) {
  using K = dyad::ErrorKind;
  switch (kind) {
    case K::Parse: return DM_ERR_PARSE;
    case K::DimensionMismatch: return DM_ERR_DIMENSION_MISMATCH;
    case K::Validation: return DM_ERR_VALIDATION;
    case K::EmptySession: return DM_ERR_EMPTY_SESSION;
    case K::Precondition: return DM_ERR_PRECONDITION;
    case K::Numerical: return DM_ERR_NUMERICAL;
    case K::DegenerateTraining: return DM_ERR_DEGENERATE_TRAINING;
    case K::InfeasibleSplit: return DM_ERR_INFEASIBLE_SPLIT;
    case K::NotFound: return DM_ERR_NOT_FOUND;
    case K::Io: return DM_ERR_IO;
    case K::UndefinedCorrelation: return DM_ERR_UNDEFINED_CORRELATION;
  }
  return DM_ERR_INTERNAL;
}

template <class F>
dm_status guarded(F&& body) {
  try {
    body();
    g_last_error.clear();
    return DM_OK;
  } catch (const dyad::Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return DM_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return DM_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return DM_ERR_INTERNAL;
  }
}

dm_status invalid(const char* what) {
  g_last_error = what;
  return DM_ERR_INVALID_ARGUMENT;
}

std::string str(const char* s) { return s ? s : ""; }

std::vector<std::string> split_list(const char* s) {
  std::vector<std::string> out;
  if (!s) return out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto a = item.find_first_not_of(" \t");
    const auto b = item.find_last_not_of(" \t");
    if (a == std::string::npos) continue;
    out.push_back(item.substr(a, b - a + 1));
  }
  return out;
}

std::vector<int> int_list(const char* s, const std::vector<int>& fallback, const char* what) {
  const auto items = split_list(s);
  if (items.empty()) return fallback;
  std::vector<int> out;
  for (const auto& item : items) {
    std::size_t pos = 0;
    int v = 0;
    try {
      v = std::stoi(item, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != item.size()) dyad::fail(dyad::ErrorKind::Validation, fmt::format("bad {} value '{}'", what, item));
    out.push_back(v);
  }
  return out;
}

std::vector<dyad::InputType> type_list(const char* s, std::vector<dyad::InputType> fallback) {
  const auto items = split_list(s);
  if (items.empty()) return fallback;
  std::vector<dyad::InputType> out;
  for (const auto& item : items) out.push_back(dyad::parse_input_type(item));
  return out;
}

std::vector<std::string> score_list(const char* s) {
  auto items = split_list(s);
  if (items.empty() || (items.size() == 1 && items[0] == "all")) {
    items.clear();
    for (auto key : dyad::kScoreKeys) items.emplace_back(key);
  }
  return items;
}

// "a", "a+bi", "a-bi", "bi"
std::complex<double> parse_complex(const std::string& item) {
  const auto bad = [&] { dyad::fail(dyad::ErrorKind::Validation, "bad eigenvalue '" + item + "'"); };
  auto number = [&](const std::string& t) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
      v = std::stod(t, &pos);
    } catch (const std::exception&) {
      bad();
    }
    if (pos != t.size()) bad();
    return v;
  };
  if (item.empty()) bad();
  if (item.back() != 'i') return {number(item), 0.0};
  const std::string body = item.substr(0, item.size() - 1);
  const auto split = body.find_last_of("+-");
  if (split == std::string::npos || split == 0) return {0.0, number(body)};
  return {number(body.substr(0, split)), number(body.substr(split))};
}

std::vector<std::complex<double>> complex_list(const char* s, std::vector<std::complex<double>> fallback) {
  const auto items = split_list(s);
  if (items.empty()) return fallback;
  std::vector<std::complex<double>> out;
  for (const auto& item : items) out.push_back(parse_complex(item));
  return out;
}

dyad::SvdCutoff cutoff(double rel_tol) {
  dyad::SvdCutoff c;
  if (rel_tol >= 0.0) c.rel_tol = rel_tol;
  return c;
}

}  // namespace

extern "C" {

const char* dm_last_error(void) { return g_last_error.c_str(); }

const char* dm_status_name(dm_status status) {
  switch (status) {
    case DM_OK: return "ok";
    case DM_ERR_PARSE: return "parse error";
    case DM_ERR_DIMENSION_MISMATCH: return "dimension mismatch";
    case DM_ERR_VALIDATION: return "validation error";
    case DM_ERR_EMPTY_SESSION: return "empty session";
    case DM_ERR_PRECONDITION: return "precondition violated";
    case DM_ERR_NUMERICAL: return "numerical error";
    case DM_ERR_DEGENERATE_TRAINING: return "degenerate training set";
    case DM_ERR_INFEASIBLE_SPLIT: return "infeasible split";
    case DM_ERR_NOT_FOUND: return "not found";
    case DM_ERR_IO: return "I/O error";
    case DM_ERR_UNDEFINED_CORRELATION: return "undefined correlation";
    case DM_ERR_INVALID_ARGUMENT: return "invalid argument";
    case DM_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* dm_version(void) { return "1.0.0"; }

// ---- corpus ----------------------------------------------------------------

dm_status dm_corpus_load(const char* path, dm_corpus** out) {
  if (!path || !out) return invalid("null argument");
  *out = nullptr;
  return guarded([&] {
    auto c = std::make_unique<dm_corpus>();
    c->sessions = dyad::load_corpus(path);
    *out = c.release();
  });
}

void dm_corpus_free(dm_corpus* corpus) { delete corpus; }

size_t dm_corpus_size(const dm_corpus* corpus) { return corpus ? corpus->sessions.size() : 0; }

size_t dm_corpus_dim(const dm_corpus* corpus) {
  if (!corpus || corpus->sessions.empty()) return 0;
  for (const auto& s : corpus->sessions) {
    if (s.dim() > 0) return static_cast<size_t>(s.dim());
  }
  return 0;
}

const char* dm_corpus_session_id(const dm_corpus* corpus, size_t index) {
  if (!corpus || index >= corpus->sessions.size()) return nullptr;
  return corpus->sessions[index].session_id.c_str();
}

dm_status dm_corpus_labels(const dm_corpus* corpus, size_t index, int* labels) {
  if (!corpus || !labels) return invalid("null argument");
  if (index >= corpus->sessions.size()) return invalid("session index out of range");
  return guarded([&] {
    const auto set = dyad::binarize_labels(corpus->sessions[index]);
    for (std::size_t i = 0; i < dyad::kScoreKeys.size(); ++i) labels[i] = set.at(i);
  });
}

// ---- models ----------------------------------------------------------------

dm_status dm_model_load(const char* path, dm_model** out) {
  if (!path || !out) return invalid("null argument");
  *out = nullptr;
  return guarded([&] {
    auto m = std::make_unique<dm_model>();
    m->stored = dyad::load_model(path);
    *out = m.release();
  });
}

void dm_model_free(dm_model* model) { delete model; }

size_t dm_model_feature_dim(const dm_model* model) { return model ? model->stored.model.feature_dim : 0; }

dm_status dm_model_metadata(const dm_model* model, int* w, int* n_lambda, const char** input_type) {
  if (!model) return invalid("null argument");
  if (w) *w = model->stored.meta.w;
  if (n_lambda) *n_lambda = model->stored.meta.n_lambda;
  if (input_type) *input_type = dyad::to_string(model->stored.meta.input_type);
  return DM_OK;
}

dm_status dm_model_predict_proba(const dm_model* model, const double* feature, size_t n, double* proba) {
  if (!model || !feature || !proba) return invalid("null argument");
  return guarded([&] { *proba = dyad::predict_proba(model->stored.model, feature, n); });
}

// ---- numerics --------------------------------------------------------------

dm_status dm_pseudo_inverse(const double* m, size_t rows, size_t cols, double svd_rel_tol, double* out) {
  if (!m || !out) return invalid("null argument");
  if (rows == 0 || cols == 0) return invalid("empty matrix");
  return guarded([&] {
    const Eigen::Map<const Eigen::MatrixXd> M(m, static_cast<Eigen::Index>(rows),
                                              static_cast<Eigen::Index>(cols));
    Eigen::Map<Eigen::MatrixXd>(out, static_cast<Eigen::Index>(cols), static_cast<Eigen::Index>(rows)) =
        dyad::pseudo_inverse(M, cutoff(svd_rel_tol));
  });
}

dm_status dm_window_spectrum(const double* y_past, const double* x_in, const double* y_next, size_t d,
                             size_t w, double svd_rel_tol, double* lambda_T, double* lambda_C,
                             dm_spectrum* info) {
  if (!y_past || !x_in || !y_next || !lambda_T || !lambda_C) return invalid("null argument");
  if (d == 0 || w < 2) return invalid("need d >= 1 and w >= 2");
  return guarded([&] {
    const auto D = static_cast<Eigen::Index>(d);
    const auto W = static_cast<Eigen::Index>(w);
    dyad::Window win;
    win.w = W;
    win.Y_past = Eigen::Map<const Eigen::MatrixXd>(y_past, D, W);
    win.X_in = Eigen::Map<const Eigen::MatrixXd>(x_in, D, W);
    win.Y_next = Eigen::Map<const Eigen::MatrixXd>(y_next, D, W);
    if (!win.Y_past.allFinite() || !win.X_in.allFinite() || !win.Y_next.allFinite()) {
      dyad::fail(dyad::ErrorKind::Validation, "window contains non-finite values");
    }
    const auto fit = dyad::fit_window(win, cutoff(svd_rel_tol));
    const auto spec = dyad::eigenvalues(fit);
    for (std::size_t i = 0; i < spec.lambda_T.size(); ++i) {
      lambda_T[2 * i] = spec.lambda_T[i].real();
      lambda_T[2 * i + 1] = spec.lambda_T[i].imag();
      lambda_C[2 * i] = spec.lambda_C[i].real();
      lambda_C[2 * i + 1] = spec.lambda_C[i].imag();
    }
    if (info) {
      info->length = spec.lambda_T.size();
      info->nonzero_T = static_cast<size_t>(spec.nonzero_T);
      info->nonzero_C = static_cast<size_t>(spec.nonzero_C);
      info->rank = static_cast<size_t>(fit.rank);
      info->residual = fit.residual;
      info->degenerate = fit.degenerate() ? 1 : 0;
    }
  });
}

dm_status dm_f1_score(const int* preds, const int* truth, size_t n, double* f1) {
  if (!preds || !truth || !f1) return invalid("null argument");
  return guarded([&] { *f1 = dyad::f1_score({preds, preds + n}, {truth, truth + n}); });
}

dm_status dm_pearson(const double* x, const double* y, size_t n, double* r, double* p) {
  if (!x || !y || !r || !p) return invalid("null argument");
  return guarded([&] {
    const auto c = dyad::pearson({x, x + n}, {y, y + n});
    *r = c.r;
    *p = c.p;
  });
}

dm_status dm_bootstrap_baseline(const int* labels, size_t n, int n_boot, uint64_t seed, dm_bootstrap* out) {
  if (!labels || !out) return invalid("null argument");
  return guarded([&] {
    const auto b = dyad::bootstrap_local_baseline({labels, labels + n}, n_boot, seed);
    out->mean = b.mean;
    out->sigma = b.sigma;
    out->threshold_2sigma = b.threshold_2sigma;
    out->threshold_3sigma = b.threshold_3sigma;
    out->positive_fraction = b.positive_fraction;
    out->degenerate = b.degenerate ? 1 : 0;
  });
}

// ---- commands --------------------------------------------------------------

void dm_synth_config_init(dm_synth_config* c) {
  if (!c) return;
  const dyad::SynthConfig d;
  *c = dm_synth_config{};
  c->dim = static_cast<int>(d.dim);
  c->noise_sigma = d.noise_sigma;
  c->n_sessions = d.shape.n_sessions;
  c->n_clients = d.shape.n_clients;
  c->min_length = d.shape.length_range.first;
  c->max_length = d.shape.length_range.second;
  c->control_rank = d.control_rank;
}

void dm_featurize_config_init(dm_featurize_config* c) {
  if (!c) return;
  *c = dm_featurize_config{};
  c->stride = 1;
  c->svd_rel_tol = -1.0;
  c->jobs = 1;
}

void dm_evaluate_config_init(dm_evaluate_config* c) {
  if (!c) return;
  const dyad::GridConfig d;
  *c = dm_evaluate_config{};
  c->folds = d.folds;
  c->n_boot = d.n_boot;
  c->stride = d.stride;
  c->threshold = d.threshold;
  c->svd_rel_tol = -1.0;
  c->jobs = 1;
}

void dm_baseline_config_init(dm_baseline_config* c) {
  if (!c) return;
  *c = dm_baseline_config{};
  c->stride = 1;
  c->n_boot = 1000;
}

void dm_trajectory_config_init(dm_trajectory_config* c) {
  if (!c) return;
  *c = dm_trajectory_config{};
  c->stride = 1;
  c->threshold = 0.5;
  c->svd_rel_tol = -1.0;
}

dm_status dm_synth(const dm_synth_config* c) {
  if (!c) return invalid("null config");
  return guarded([&] {
    dyad::SynthConfig cfg;
    cfg.out = str(c->out);
    cfg.seed = c->seed;
    cfg.null_corpus = c->null_corpus != 0;
    cfg.dim = c->dim;
    cfg.noise_sigma = c->noise_sigma;
    cfg.shape.n_sessions = c->n_sessions;
    cfg.shape.n_clients = c->n_clients;
    cfg.shape.length_range = {c->min_length, c->max_length};
    cfg.control_rank = c->control_rank;
    cfg.eigenvalues_T0 = complex_list(c->lambda_T0, cfg.eigenvalues_T0);
    cfg.eigenvalues_T1 = complex_list(c->lambda_T1, cfg.eigenvalues_T1);
    cfg.eigenvalues_C = complex_list(c->lambda_C, cfg.eigenvalues_C);
    dyad::run_synth(cfg);
  });
}

dm_status dm_featurize(const dm_featurize_config* c) {
  if (!c) return invalid("null config");
  return guarded([&] {
    dyad::FeaturizeConfig cfg;
    cfg.input = str(c->input);
    cfg.out = str(c->out);
    cfg.windows = int_list(c->windows, cfg.windows, "window size");
    cfg.n_lambdas = int_list(c->n_lambdas, cfg.n_lambdas, "n_lambda");
    cfg.input_types = type_list(c->input_types, cfg.input_types);
    cfg.stride = c->stride;
    cfg.svd = cutoff(c->svd_rel_tol);
    cfg.jobs = c->jobs;
    if (cfg.jobs < 1) dyad::fail(dyad::ErrorKind::Validation, "jobs must be at least 1");
    dyad::run_featurize(cfg);
  });
}

dm_status dm_evaluate(const dm_evaluate_config* c, dm_evaluate_summary* summary) {
  if (!c) return invalid("null config");
  return guarded([&] {
    dyad::EvaluateConfig cfg;
    cfg.input = str(c->input);
    cfg.out = str(c->out);
    auto& g = cfg.grid;
    g = dyad::GridConfig::default_grid();
    g.score_keys = score_list(c->scores);
    const auto models = split_list(c->models);
    if (!models.empty() && !(models.size() == 1 && models[0] == "all")) {
      g.models.clear();
      for (const auto& m : models) g.models.push_back(dyad::ModelSpec::parse(m));
    }
    g.windows = int_list(c->windows, g.windows, "window size");
    g.n_lambdas = int_list(c->n_lambdas, g.n_lambdas, "n_lambda");
    g.input_types = type_list(c->input_types, g.input_types);
    if (const auto accs = split_list(c->accumulators); !accs.empty()) {
      g.accumulators.clear();
      for (const auto& a : accs) g.accumulators.push_back(dyad::parse_accumulator(a));
    }
    if (const auto aggs = split_list(c->aggregators); !aggs.empty()) {
      g.aggregators.clear();
      for (const auto& a : aggs) g.aggregators.push_back(dyad::parse_aggregator(a));
    }
    g.folds = c->folds;
    g.seed = c->seed;
    g.n_boot = c->n_boot;
    g.stride = c->stride;
    g.threshold = c->threshold;
    g.svd = cutoff(c->svd_rel_tol);
    g.jobs = c->jobs;
    g.soft_sum = c->soft_sum != 0;
    const auto s = dyad::run_evaluate(cfg);
    if (summary) {
      summary->n_cells = s.n_cells;
      summary->n_failed = s.n_failed;
      summary->n_above_local = s.n_above_local;
      summary->best_local_f1 = s.best_local_f1;
      summary->best_global_f1 = s.best_global_f1;
    }
  });
}

dm_status dm_baseline(const dm_baseline_config* c) {
  if (!c) return invalid("null config");
  return guarded([&] {
    dyad::BaselineConfig cfg;
    cfg.input = str(c->input);
    cfg.out = str(c->out);
    cfg.score_keys = score_list(c->scores);
    cfg.windows = int_list(c->windows, cfg.windows, "window size");
    cfg.stride = c->stride;
    cfg.n_boot = c->n_boot;
    cfg.seed = c->seed;
    dyad::run_baseline(cfg);
  });
}

dm_status dm_trajectory(const dm_trajectory_config* c) {
  if (!c) return invalid("null config");
  return guarded([&] {
    dyad::TrajectoryConfig cfg;
    cfg.input = str(c->input);
    cfg.model = str(c->model);
    cfg.out = str(c->out);
    cfg.session_ids = split_list(c->sessions);
    cfg.stride = c->stride;
    cfg.threshold = c->threshold;
    cfg.svd = cutoff(c->svd_rel_tol);
    if (cfg.model.empty()) dyad::fail(dyad::ErrorKind::Validation, "trajectory needs a stored model");
    if (cfg.stride < 1) dyad::fail(dyad::ErrorKind::Validation, "stride must be at least 1");
    dyad::run_trajectory(cfg);
  });
}

}  // extern "C"
