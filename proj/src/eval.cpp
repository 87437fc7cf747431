#include "dyad/eval.hpp"

#include "dyad/common.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

namespace dyad {

double f1_score(const std::vector<int>& preds, const std::vector<int>& truth) {
  if (preds.size() != truth.size()) fail(ErrorKind::Validation, "prediction and truth lengths differ");
  if (preds.empty()) fail(ErrorKind::Validation, "F1 needs at least one element");
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] == 1 && truth[i] == 1) ++tp;
    else if (preds[i] == 1) ++fp;
    else if (truth[i] == 1) ++fn;
  }
  // 2PR / (P + R) simplifies to 2tp / (2tp + fp + fn).
  if (tp == 0) return 0.0;
  return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

// ---------------------------------------------------------------------------

FoldAssignment make_folds(const std::vector<std::string>& client_ids, const std::vector<int>& labels,
                          int k, std::uint64_t seed) {
  if (client_ids.size() != labels.size()) fail(ErrorKind::Validation, "client and label counts differ");
  if (k < 2) fail(ErrorKind::Validation, "fold count must be at least 2");

  struct Group {
    std::string client;
    std::vector<std::size_t> members;
    int positives = 0;
  };
  std::map<std::string, std::size_t> index;
  std::vector<Group> groups;
  for (std::size_t i = 0; i < client_ids.size(); ++i) {
    auto [it, inserted] = index.try_emplace(client_ids[i], groups.size());
    if (inserted) groups.push_back({client_ids[i], {}, 0});
    Group& g = groups[it->second];
    g.members.push_back(i);
    g.positives += labels[i] == 1 ? 1 : 0;
  }
  if (groups.size() < static_cast<std::size_t>(k)) {
    fail(ErrorKind::InfeasibleSplit, fmt::format("{} clients cannot fill {} folds", groups.size(), k));
  }

  Rng rng(derive_seed(seed, 0xF01D));
  rng.shuffle(groups);
  std::stable_sort(groups.begin(), groups.end(), [](const Group& a, const Group& b) {
    if (a.members.size() != b.members.size()) return a.members.size() > b.members.size();
    return a.positives > b.positives;
  });

  double total_pos = 0.0;
  for (int y : labels) total_pos += y == 1 ? 1.0 : 0.0;
  const double n = static_cast<double>(labels.size());
  const double target_pos = total_pos / k;
  const double target_neg = (n - total_pos) / k;

  std::vector<double> pos(static_cast<std::size_t>(k), 0.0);
  std::vector<double> neg(static_cast<std::size_t>(k), 0.0);
  FoldAssignment out;
  out.k = k;
  out.seed = seed;
  out.fold_of_session.assign(labels.size(), -1);
  for (const Group& g : groups) {
    const double gp = g.positives;
    const double gn = static_cast<double>(g.members.size()) - gp;
    std::size_t best = 0;
    double best_cost = std::numeric_limits<double>::infinity();
    for (std::size_t f = 0; f < pos.size(); ++f) {
      // Change in squared deviation from the per-fold targets.
      const double dp = (pos[f] + gp - target_pos) * (pos[f] + gp - target_pos) -
                        (pos[f] - target_pos) * (pos[f] - target_pos);
      const double dn = (neg[f] + gn - target_neg) * (neg[f] + gn - target_neg) -
                        (neg[f] - target_neg) * (neg[f] - target_neg);
      if (dp + dn < best_cost) {
        best_cost = dp + dn;
        best = f;
      }
    }
    pos[best] += gp;
    neg[best] += gn;
    for (std::size_t m : g.members) out.fold_of_session[m] = static_cast<int>(best);
  }

  const double overall = n > 0 ? total_pos / n : 0.0;
  for (std::size_t f = 0; f < pos.size(); ++f) {
    const double size = pos[f] + neg[f];
    if (size > 0) out.max_stratification_gap = std::max(out.max_stratification_gap,
                                                        std::abs(pos[f] / size - overall));
  }
  return out;
}

FoldAssignment make_folds(const std::vector<Session>& sessions, const std::string& score_key, int k,
                          std::uint64_t seed) {
  std::vector<std::string> clients;
  std::vector<int> labels;
  clients.reserve(sessions.size());
  labels.reserve(sessions.size());
  for (const auto& s : sessions) {
    clients.push_back(s.client_id);
    labels.push_back(binarize_labels(s)[score_key]);
  }
  return make_folds(clients, labels, k, seed);
}

// ---------------------------------------------------------------------------

namespace {

BootstrapResult bootstrap(const std::vector<int>& labels, int n_boot, std::uint64_t seed,
                          std::size_t min_n) {
  if (n_boot < 100) fail(ErrorKind::Validation, "bootstrap needs at least 100 replicates");
  if (labels.size() < min_n) {
    fail(ErrorKind::Validation, fmt::format("bootstrap needs at least {} labels", min_n));
  }
  BootstrapResult out;
  out.n = labels.size();
  std::size_t positives = 0;
  for (int y : labels) positives += y == 1 ? 1 : 0;
  out.positive_fraction = static_cast<double>(positives) / static_cast<double>(labels.size());
  out.degenerate = positives == 0 || positives == labels.size();

  Rng rng(seed);
  std::vector<double> scores(static_cast<std::size_t>(n_boot));
  std::vector<int> preds(labels.size());
  for (auto& score : scores) {
    for (auto& p : preds) p = rng.bernoulli(out.positive_fraction) ? 1 : 0;
    score = f1_score(preds, labels);
  }
  const double mean = std::accumulate(scores.begin(), scores.end(), 0.0) / n_boot;
  double ss = 0.0;
  for (double s : scores) ss += (s - mean) * (s - mean);
  out.mean = mean;
  out.sigma = std::sqrt(ss / (n_boot - 1));
  out.threshold_2sigma = mean + 2.0 * out.sigma;
  out.threshold_3sigma = mean + 3.0 * out.sigma;
  return out;
}

}  // namespace

BootstrapResult bootstrap_local_baseline(const std::vector<int>& window_labels, int n_boot,
                                         std::uint64_t seed) {
  return bootstrap(window_labels, n_boot, seed, 2);
}

BootstrapResult bootstrap_global_baseline(const std::vector<int>& session_labels, int n_boot,
                                          std::uint64_t seed) {
  return bootstrap(session_labels, n_boot, seed, 2);
}

Correlation pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) fail(ErrorKind::Validation, "pearson inputs differ in length");
  if (x.size() < 3) fail(ErrorKind::Validation, "pearson needs at least 3 points");
  if (!all_finite(x.data(), x.size()) || !all_finite(y.data(), y.size())) {
    fail(ErrorKind::Validation, "pearson inputs must be finite");
  }
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0) {
    fail(ErrorKind::UndefinedCorrelation, "pearson correlation undefined for zero variance");
  }
  Correlation c;
  c.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  const double dof = n - 2.0;
  const double one_minus = 1.0 - c.r * c.r;
  if (one_minus <= 0.0) {
    c.p = 0.0;
  } else {
    const double t = c.r * std::sqrt(dof / one_minus);
    boost::math::students_t dist(dof);
    c.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
    c.p = std::clamp(c.p, 0.0, 1.0);
  }
  return c;
}

// ---------------------------------------------------------------------------

std::vector<WindowSet> featurize_corpus(const std::vector<Session>& sessions,
                                        const std::vector<int>& window_sizes, int stride,
                                        const SvdCutoff& cutoff, int jobs) {
  for (int w : window_sizes) {
    if (w < 2) fail(ErrorKind::Validation, "window sizes must be at least 2");
  }
  if (stride < 1) fail(ErrorKind::Validation, "stride must be at least 1");

  std::vector<AlignedPair> pairs(sessions.size());
  std::vector<bool> usable(sessions.size(), false);
  for (std::size_t i = 0; i < sessions.size(); ++i) {
    try {
      pairs[i] = align_pairs(normalize_turns(sessions[i]));
      usable[i] = true;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::EmptySession) throw;
    }
  }

  const std::size_t n_tasks = sessions.size() * window_sizes.size();
  std::vector<std::vector<WindowSpectrum>> slots(n_tasks);
  parallel_for(n_tasks, jobs, [&](std::size_t task) {
    const std::size_t wi = task / sessions.size();
    const std::size_t si = task % sessions.size();
    if (!usable[si]) return;
    const auto windows = extract_windows(pairs[si], sessions[si].session_id, window_sizes[wi], stride);
    auto& out = slots[task];
    out.reserve(windows.size());
    for (const auto& win : windows) {
      const DynamicsFit fit = fit_window(win, cutoff);
      WindowSpectrum ws;
      ws.session = si;
      ws.t = win.t;
      ws.spectrum = eigenvalues(fit);
      ws.rank = fit.rank;
      ws.residual = fit.residual;
      ws.degenerate = fit.degenerate();
      out.push_back(std::move(ws));
    }
  });

  std::vector<WindowSet> sets(window_sizes.size());
  for (std::size_t wi = 0; wi < window_sizes.size(); ++wi) {
    sets[wi].w = window_sizes[wi];
    for (std::size_t si = 0; si < sessions.size(); ++si) {
      auto& slot = slots[wi * sessions.size() + si];
      std::move(slot.begin(), slot.end(), std::back_inserter(sets[wi].windows));
    }
  }
  return sets;
}

Eigen::MatrixXd feature_matrix(const WindowSet& set, InputType type, int n_lambda) {
  const auto dim = static_cast<Eigen::Index>(feature_length(type, n_lambda));
  Eigen::MatrixXd X(static_cast<Eigen::Index>(set.windows.size()), dim);
  for (std::size_t i = 0; i < set.windows.size(); ++i) {
    const FeatureVector fv = build_features(set.windows[i].spectrum, type, n_lambda);
    for (Eigen::Index j = 0; j < dim; ++j) {
      X(static_cast<Eigen::Index>(i), j) = fv.values[static_cast<std::size_t>(j)];
    }
  }
  return X;
}

// ---------------------------------------------------------------------------

GridConfig GridConfig::default_grid() {
  GridConfig cfg;
  for (auto key : kScoreKeys) cfg.score_keys.emplace_back(key);
  cfg.models = default_model_grid();
  return cfg;
}

void GridConfig::validate() const {
  if (score_keys.empty()) fail(ErrorKind::Validation, "no score keys configured");
  for (const auto& key : score_keys) {
    if (!score_index(key)) fail(ErrorKind::Validation, "unknown score key '" + key + "'");
  }
  if (models.empty()) fail(ErrorKind::Validation, "no models configured");
  for (const auto& m : models) m.validate();
  if (windows.empty()) fail(ErrorKind::Validation, "no window sizes configured");
  for (int w : windows) {
    if (w < 2) fail(ErrorKind::Validation, "window sizes must be at least 2");
  }
  if (n_lambdas.empty()) fail(ErrorKind::Validation, "no n_lambda values configured");
  for (int n : n_lambdas) {
    if (n < 1) fail(ErrorKind::Validation, "n_lambda must be at least 1");
  }
  if (input_types.empty()) fail(ErrorKind::Validation, "no input types configured");
  if (folds < 2) fail(ErrorKind::Validation, "fold count must be at least 2");
  if (n_boot < 100) fail(ErrorKind::Validation, "bootstrap needs at least 100 replicates");
  if (stride < 1) fail(ErrorKind::Validation, "stride must be at least 1");
  if (!(threshold >= 0.0 && threshold <= 1.0)) fail(ErrorKind::Validation, "threshold outside [0, 1]");
  if (jobs < 1) fail(ErrorKind::Validation, "jobs must be at least 1");
}

TrainedModel train_fold(const ModelSpec& spec, const Eigen::MatrixXd& X, const std::vector<int>& labels,
                        const std::vector<int>& window_fold, int fold) {
  std::vector<Eigen::Index> rows;
  for (std::size_t i = 0; i < window_fold.size(); ++i) {
    if (window_fold[i] != fold) rows.push_back(static_cast<Eigen::Index>(i));
  }
  Eigen::MatrixXd train_X(static_cast<Eigen::Index>(rows.size()), X.cols());
  std::vector<int> train_y;
  train_y.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    train_X.row(static_cast<Eigen::Index>(r)) = X.row(rows[r]);
    train_y.push_back(labels[static_cast<std::size_t>(rows[r])]);
  }
  return train(spec, train_X, train_y);
}

GridContext::GridContext(const std::vector<Session>& sessions, GridConfig config)
    : sessions_(&sessions), config_(std::move(config)) {
  config_.validate();
  window_sets_ = featurize_corpus(sessions, config_.windows, config_.stride, config_.svd, config_.jobs);

  for (std::size_t s = 0; s < config_.score_keys.size(); ++s) {
    std::vector<int> labels;
    labels.reserve(sessions.size());
    for (const auto& session : sessions) labels.push_back(binarize_labels(session)[config_.score_keys[s]]);
    std::vector<std::string> clients;
    for (const auto& session : sessions) clients.push_back(session.client_id);
    folds_.push_back(make_folds(clients, labels, config_.folds, derive_seed(config_.seed, 0xF0, s)));
    session_labels_.push_back(std::move(labels));
  }

  for (const auto& set : window_sets_) {
    for (int nl : config_.n_lambdas) {
      for (InputType type : config_.input_types) feature_cache_.push_back(feature_matrix(set, type, nl));
    }
  }
}

std::size_t GridContext::cell_count() const {
  return config_.score_keys.size() * config_.models.size() * config_.windows.size() *
         config_.n_lambdas.size() * config_.input_types.size();
}

std::array<std::size_t, 5> GridContext::cell_coordinates(std::size_t cell) const {
  const std::size_t n_type = config_.input_types.size();
  const std::size_t n_nl = config_.n_lambdas.size();
  const std::size_t n_w = config_.windows.size();
  const std::size_t n_model = config_.models.size();
  std::array<std::size_t, 5> c{};
  c[4] = cell % n_type;
  cell /= n_type;
  c[3] = cell % n_nl;
  cell /= n_nl;
  c[2] = cell % n_w;
  cell /= n_w;
  c[1] = cell % n_model;
  c[0] = cell / n_model;
  return c;
}

const Eigen::MatrixXd& GridContext::features(std::size_t w_index, std::size_t nl_index,
                                             std::size_t type_index) const {
  return feature_cache_[(w_index * config_.n_lambdas.size() + nl_index) * config_.input_types.size() +
                        type_index];
}

std::vector<int> GridContext::window_labels(std::size_t score_index, std::size_t w_index) const {
  std::vector<int> out;
  const auto& labels = session_labels_[score_index];
  for (const auto& ws : window_sets_[w_index].windows) out.push_back(labels[ws.session]);
  return out;
}

std::vector<int> GridContext::window_folds(std::size_t score_index, std::size_t w_index) const {
  std::vector<int> out;
  const auto& folds = folds_[score_index].fold_of_session;
  for (const auto& ws : window_sets_[w_index].windows) out.push_back(folds[ws.session]);
  return out;
}

namespace {

struct GroupKey {
  std::size_t score, w, nl, type;
};

// Out-of-fold machinery for one (score, w, n_lambda, type) group: every model
// of the grid is trained per fold and predicts every window.
class GroupRunner {
public:
  GroupRunner(const GridContext& ctx, GroupKey key)
      : ctx_(ctx),
        key_(key),
        X_(ctx.features(key.w, key.nl, key.type)),
        labels_(ctx.window_labels(key.score, key.w)),
        wfold_(ctx.window_folds(key.score, key.w)) {}

  std::size_t cell_index(std::size_t model) const {
    const auto& cfg = ctx_.config();
    return (((key_.score * cfg.models.size() + model) * cfg.windows.size() + key_.w) *
                cfg.n_lambdas.size() +
            key_.nl) *
               cfg.input_types.size() +
           key_.type;
  }

  // probas[fold][window] for one model; throws on training failure.
  std::vector<std::vector<double>> fold_probas(std::size_t model) {
    const auto& cfg = ctx_.config();
    ModelSpec spec = cfg.models[model];
    std::vector<std::vector<double>> out(static_cast<std::size_t>(cfg.folds));
    for (int f = 0; f < cfg.folds; ++f) {
      if (spec.kind == ModelKind::KNN && !spec.standardize) {
        out[static_cast<std::size_t>(f)] = knn_probas(f, static_cast<std::size_t>(*spec.k));
        continue;
      }
      spec.seed = derive_seed(cfg.seed, cell_index(model), static_cast<std::uint64_t>(f));
      const TrainedModel m = train_fold(spec, X_, labels_, wfold_, f);
      out[static_cast<std::size_t>(f)] = predict_proba_rows(m, X_);
    }
    return out;
  }

  const std::vector<int>& labels() const { return labels_; }
  const std::vector<int>& window_folds() const { return wfold_; }

private:
  // Neighbour lists are computed once per fold for the largest k of the grid
  // and shared by every KNN model.
  std::vector<double> knn_probas(int fold, std::size_t k) {
    auto& cache = neighbours_[fold];
    if (cache.rows.empty() && !cache.built) build_neighbours(fold, cache);
    std::vector<double> out(static_cast<std::size_t>(X_.rows()));
    const std::size_t kk = std::min(k, cache.train_labels.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      int positives = 0;
      for (std::size_t j = 0; j < kk; ++j) positives += cache.train_labels[cache.rows[i][j]];
      out[i] = static_cast<double>(positives) / static_cast<double>(kk);
    }
    return out;
  }

  struct NeighbourCache {
    bool built = false;
    std::vector<int> train_labels;
    std::vector<std::vector<Eigen::Index>> rows;
  };

  void build_neighbours(int fold, NeighbourCache& cache) {
    std::size_t k_max = 1;
    for (const auto& m : ctx_.config().models) {
      if (m.kind == ModelKind::KNN) k_max = std::max(k_max, static_cast<std::size_t>(*m.k));
    }
    std::vector<Eigen::Index> train_rows;
    for (std::size_t i = 0; i < wfold_.size(); ++i) {
      if (wfold_[i] != fold) train_rows.push_back(static_cast<Eigen::Index>(i));
    }
    Eigen::MatrixXd train_X(static_cast<Eigen::Index>(train_rows.size()), X_.cols());
    for (std::size_t r = 0; r < train_rows.size(); ++r) {
      train_X.row(static_cast<Eigen::Index>(r)) = X_.row(train_rows[r]);
      cache.train_labels.push_back(labels_[static_cast<std::size_t>(train_rows[r])]);
    }
    bool has0 = false, has1 = false;
    for (int y : cache.train_labels) (y == 1 ? has1 : has0) = true;
    if (!has0 || !has1) {
      fail(ErrorKind::DegenerateTraining, "training set needs at least one example of each label");
    }
    cache.rows.resize(static_cast<std::size_t>(X_.rows()));
    std::vector<double> row(static_cast<std::size_t>(X_.cols()));
    for (Eigen::Index i = 0; i < X_.rows(); ++i) {
      for (Eigen::Index j = 0; j < X_.cols(); ++j) row[static_cast<std::size_t>(j)] = X_(i, j);
      cache.rows[static_cast<std::size_t>(i)] = nearest_rows(train_X, row.data(), k_max);
    }
    cache.built = true;
  }

  const GridContext& ctx_;
  GroupKey key_;
  const Eigen::MatrixXd& X_;
  std::vector<int> labels_;
  std::vector<int> wfold_;
  std::map<int, NeighbourCache> neighbours_;
};

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

GridReport GridContext::run() const {
  const auto& cfg = config_;
  const auto& sessions = *sessions_;
  GridReport report;
  report.folds = folds_;

  // Baselines: local per (score, w), global per score.
  std::vector<double> local_threshold(cfg.score_keys.size() * cfg.windows.size(),
                                      std::numeric_limits<double>::infinity());
  for (std::size_t s = 0; s < cfg.score_keys.size(); ++s) {
    for (std::size_t w = 0; w < cfg.windows.size(); ++w) {
      LocalBaseline lb{cfg.score_keys[s], cfg.windows[w], {}};
      const auto labels = window_labels(s, w);
      if (labels.size() >= 2) {
        lb.result = bootstrap_local_baseline(labels, cfg.n_boot, derive_seed(cfg.seed, 0xB0, s, w));
        local_threshold[s * cfg.windows.size() + w] = lb.result.threshold_3sigma;
      } else {
        lb.result.threshold_2sigma = lb.result.threshold_3sigma = std::numeric_limits<double>::infinity();
      }
      report.local_baselines.push_back(lb);
    }
    GlobalBaseline gb{cfg.score_keys[s], {}};
    gb.result = bootstrap_global_baseline(session_labels_[s], cfg.n_boot, derive_seed(cfg.seed, 0xB1, s));
    report.global_baselines.push_back(gb);
  }

  report.cells.resize(cell_count());
  const std::size_t n_groups =
      cfg.score_keys.size() * cfg.windows.size() * cfg.n_lambdas.size() * cfg.input_types.size();

  parallel_for(n_groups, cfg.jobs, [&](std::size_t g) {
    GroupKey key{};
    std::size_t rest = g;
    key.type = rest % cfg.input_types.size();
    rest /= cfg.input_types.size();
    key.nl = rest % cfg.n_lambdas.size();
    rest /= cfg.n_lambdas.size();
    key.w = rest % cfg.windows.size();
    key.score = rest / cfg.windows.size();

    GroupRunner runner(*this, key);
    const auto& labels = runner.labels();
    const auto& wfold = runner.window_folds();
    const auto& folds = folds_[key.score].fold_of_session;
    const auto& slabels = session_labels_[key.score];
    const auto& set = window_sets_[key.w];

    // Window indices per session.
    std::vector<std::vector<std::size_t>> session_windows(sessions.size());
    for (std::size_t i = 0; i < set.windows.size(); ++i) session_windows[set.windows[i].session].push_back(i);

    for (std::size_t m = 0; m < cfg.models.size(); ++m) {
      ExperimentResult r;
      r.cell_index = runner.cell_index(m);
      r.score_key = cfg.score_keys[key.score];
      r.model = cfg.models[m];
      r.w = cfg.windows[key.w];
      r.n_lambda = cfg.n_lambdas[key.nl];
      r.input_type = cfg.input_types[key.type];
      r.baseline_3sigma_local = local_threshold[key.score * cfg.windows.size() + key.w];
      r.baseline_2sigma_global = report.global_baselines[key.score].result.threshold_2sigma;
      r.baseline_3sigma_global = report.global_baselines[key.score].result.threshold_3sigma;

      std::vector<std::vector<double>> probas;
      try {
        if (set.windows.empty()) fail(ErrorKind::Validation, "no windows at this window size");
        probas = runner.fold_probas(m);
      } catch (const Error& e) {
        r.failed = true;
        r.error = e.what();
        report.cells[r.cell_index] = std::move(r);
        continue;
      }

      for (int f = 0; f < cfg.folds; ++f) {
        std::vector<int> preds, truth;
        for (std::size_t i = 0; i < labels.size(); ++i) {
          if (wfold[i] != f) continue;
          preds.push_back(probas[static_cast<std::size_t>(f)][i] >= cfg.threshold ? 1 : 0);
          truth.push_back(labels[i]);
        }
        if (!preds.empty()) r.fold_local_f1.push_back(f1_score(preds, truth));
      }
      r.local_f1 = mean_of(r.fold_local_f1);
      r.above_local_3sigma = r.local_f1 > r.baseline_3sigma_local;

      if (r.above_local_3sigma) {
        for (Accumulator acc : cfg.accumulators) {
          for (AggregatorKind agg : cfg.aggregators) {
            GlobalResult gr;
            gr.accumulator = acc;
            gr.aggregator = agg;
            std::vector<SessionPrediction> preds_out;
            try {
              for (int f = 0; f < cfg.folds; ++f) {
                const auto& p = probas[static_cast<std::size_t>(f)];
                std::vector<SessionScore> train_scores, test_scores;
                std::vector<int> train_y, test_y;
                std::vector<std::size_t> test_sessions;
                for (std::size_t s = 0; s < sessions.size(); ++s) {
                  if (session_windows[s].empty()) continue;
                  std::vector<double> wp;
                  for (std::size_t i : session_windows[s]) wp.push_back(p[i]);
                  SessionScore sc = accumulate(wp, acc, cfg.threshold, cfg.soft_sum, sessions[s].session_id);
                  if (folds[s] == f) {
                    test_scores.push_back(std::move(sc));
                    test_y.push_back(slabels[s]);
                    test_sessions.push_back(s);
                  } else {
                    train_scores.push_back(std::move(sc));
                    train_y.push_back(slabels[s]);
                  }
                }
                if (test_scores.empty()) continue;
                const Aggregator fitted = fit_aggregator(agg, train_scores, train_y);
                std::vector<int> test_pred;
                for (std::size_t t = 0; t < test_scores.size(); ++t) {
                  const int yhat = predict_session(fitted, test_scores[t]);
                  test_pred.push_back(yhat);
                  preds_out.push_back({f, test_sessions[t], acc, agg, test_scores[t].value, yhat, test_y[t]});
                }
                gr.fold_f1.push_back(f1_score(test_pred, test_y));
              }
              gr.f1 = mean_of(gr.fold_f1);
              r.session_predictions.insert(r.session_predictions.end(), preds_out.begin(), preds_out.end());
            } catch (const Error& e) {
              gr.failed = true;
              gr.error = e.what();
              gr.fold_f1.clear();
            }
            r.global.push_back(std::move(gr));
          }
        }
      }
      report.cells[r.cell_index] = std::move(r);
    }
  });

  for (const auto& c : report.cells) report.n_failed += c.failed ? 1 : 0;
  return report;
}

std::vector<WindowPrediction> GridContext::window_predictions(std::size_t cell_index) const {
  const auto c = cell_coordinates(cell_index);
  GroupRunner runner(*this, GroupKey{c[0], c[2], c[3], c[4]});
  const auto probas = runner.fold_probas(c[1]);
  const auto& set = window_sets_[c[2]];
  const auto& labels = runner.labels();
  const auto& wfold = runner.window_folds();
  std::vector<WindowPrediction> out;
  out.reserve(set.windows.size());
  for (std::size_t i = 0; i < set.windows.size(); ++i) {
    const int f = wfold[i];
    out.push_back({f, set.windows[i].session, set.windows[i].t,
                   probas[static_cast<std::size_t>(f)][i], labels[i]});
  }
  return out;
}

GridReport run_grid(const std::vector<Session>& sessions, const GridConfig& config) {
  return GridContext(sessions, config).run();
}

}  // namespace dyad
