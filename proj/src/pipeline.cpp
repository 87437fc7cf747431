#include "dyad/pipeline.hpp"

#include "dyad/common.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

namespace dyad {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write '" + path.string() + "'");
  return out;
}

void ensure_dir(const std::string& dir) {
  if (dir.empty()) fail(ErrorKind::Validation, "output directory not set");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) fail(ErrorKind::Io, "cannot create directory '" + dir + "'");
}

void finish(std::ofstream& out, const fs::path& path) {
  out.flush();
  if (!out) fail(ErrorKind::Io, "write failed for '" + path.string() + "'");
}

// Quote a CSV field when needed.
std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + '"';
}

ordered_json complex_list(const std::vector<std::complex<double>>& zs) {
  ordered_json arr = ordered_json::array();
  for (const auto& z : zs) arr.push_back({z.real(), z.imag()});
  return arr;
}

ordered_json bootstrap_json(const BootstrapResult& r) {
  return {{"mean", r.mean},
          {"sigma", r.sigma},
          {"threshold_2sigma", r.threshold_2sigma},
          {"threshold_3sigma", r.threshold_3sigma},
          {"positive_fraction", r.positive_fraction},
          {"n", r.n},
          {"degenerate", r.degenerate}};
}

}  // namespace

std::string format_f1(double v) { return fmt::format("{:.4f}", v); }

// ---------------------------------------------------------------------------
// synth

SynthSystems synth_systems(const SynthConfig& config) {
  SynthSystems s;
  auto eig_C = config.eigenvalues_C;
  if (eig_C.empty()) eig_C.assign(static_cast<std::size_t>(config.dim), 0.5);
  s.system0 = make_planted_system(config.dim, config.eigenvalues_T0, eig_C,
                                  derive_seed(config.seed, 0x5E0), config.noise_sigma, 0,
                                  config.control_rank);
  if (config.null_corpus) {
    s.system1 = s.system0;
    s.system1.label = 1;
  } else {
    // Shared controller and control subspace; only the transition differs.
    s.system1 = s.system0;
    s.system1.label = 1;
    Rng rng(derive_seed(config.seed, 0x5E1));
    s.system1.A_star = planted_matrix(config.dim, config.eigenvalues_T1, rng);
    s.system1.eigenvalues_T = config.eigenvalues_T1;
  }
  return s;
}

std::vector<Session> synth_corpus(const SynthConfig& config) {
  const SynthSystems s = synth_systems(config);
  return make_labeled_corpus(s.system0, s.system1, config.shape, derive_seed(config.seed, 0x5E2));
}

void run_synth(const SynthConfig& config) {
  if (config.out.empty()) fail(ErrorKind::Validation, "synth needs an output file");
  const SynthSystems systems = synth_systems(config);
  const auto sessions =
      make_labeled_corpus(systems.system0, systems.system1, config.shape, derive_seed(config.seed, 0x5E2));

  const fs::path out_path(config.out);
  if (out_path.has_parent_path()) ensure_dir(out_path.parent_path().string());
  {
    auto out = open_out(out_path);
    for (const auto& s : sessions) write_session(out, s);
    finish(out, out_path);
  }

  ordered_json m;
  m["kind"] = "synth";
  m["seed"] = config.seed;
  m["null"] = config.null_corpus;
  m["dim"] = config.dim;
  m["noise_sigma"] = config.noise_sigma;
  m["control_rank"] = config.control_rank;
  m["n_sessions"] = config.shape.n_sessions;
  m["n_clients"] = config.shape.n_clients;
  m["length_range"] = {config.shape.length_range.first, config.shape.length_range.second};
  ordered_json labels = ordered_json::array();
  for (const PlantedSystem* sys : {&systems.system0, &systems.system1}) {
    labels.push_back({{"label", sys->label},
                      {"eigenvalues_T", complex_list(sys->eigenvalues_T)},
                      {"eigenvalues_C", complex_list(sys->eigenvalues_C)},
                      {"spectral_radius_T", sys->spectral_radius_T()},
                      {"unstable", sys->unstable()}});
  }
  m["systems"] = std::move(labels);

  const fs::path manifest_path(config.out + ".manifest.json");
  auto out = open_out(manifest_path);
  out << m.dump(2) << '\n';
  finish(out, manifest_path);
}

// ---------------------------------------------------------------------------
// featurize

void write_features_csv(std::ostream& out, const std::vector<Session>& sessions,
                        const std::vector<WindowSet>& sets, const FeaturizeConfig& config) {
  std::size_t max_len = 0;
  for (int nl : config.n_lambdas) {
    for (InputType type : config.input_types) max_len = std::max(max_len, feature_length(type, nl));
  }
  out << "session_id,t,w,input_type,n_lambda";
  for (std::size_t i = 0; i < max_len; ++i) out << ",v" << i;
  out << '\n';
  for (const auto& set : sets) {
    for (const auto& ws : set.windows) {
      for (int nl : config.n_lambdas) {
        for (InputType type : config.input_types) {
          const FeatureVector fv = build_features(ws.spectrum, type, nl);
          out << csv_field(sessions[ws.session].session_id) << ',' << ws.t << ',' << set.w << ','
              << to_string(type) << ',' << nl;
          for (double v : fv.values) out << ',' << fmt::format("{}", v);
          for (std::size_t i = fv.values.size(); i < max_len; ++i) out << ',';
          out << '\n';
        }
      }
    }
  }
}

void write_spectra_csv(std::ostream& out, const std::vector<Session>& sessions,
                       const std::vector<WindowSet>& sets) {
  out << "session_id,t,w,nonzero_T,nonzero_C\n";
  for (const auto& set : sets) {
    for (const auto& ws : set.windows) {
      out << csv_field(sessions[ws.session].session_id) << ',' << ws.t << ',' << set.w << ','
          << ws.spectrum.nonzero_T << ',' << ws.spectrum.nonzero_C << '\n';
    }
  }
}

void run_featurize(const FeaturizeConfig& config) {
  if (config.windows.empty() || config.n_lambdas.empty() || config.input_types.empty()) {
    fail(ErrorKind::Validation, "featurize needs window sizes, n_lambda values and input types");
  }
  for (int nl : config.n_lambdas) {
    if (nl < 1) fail(ErrorKind::Validation, "n_lambda must be at least 1");
  }
  const auto sessions = load_corpus(config.input);
  ensure_dir(config.out);
  const auto sets = featurize_corpus(sessions, config.windows, config.stride, config.svd, config.jobs);

  const fs::path dir(config.out);
  {
    auto out = open_out(dir / "features.csv");
    write_features_csv(out, sessions, sets, config);
    finish(out, dir / "features.csv");
  }
  {
    auto out = open_out(dir / "spectra.csv");
    write_spectra_csv(out, sessions, sets);
    finish(out, dir / "spectra.csv");
  }
  auto out = open_out(dir / "labels.csv");
  write_labels_csv(out, sessions);
  finish(out, dir / "labels.csv");
}

// ---------------------------------------------------------------------------
// evaluate

void write_table2(std::ostream& out, const std::vector<LocalBaseline>& baselines) {
  out << "Score,Window Size,F1\n";
  for (const auto& b : baselines) {
    out << b.score_key << ',' << b.w << ',' << format_f1(b.result.threshold_3sigma) << '\n';
  }
}

void write_table3(std::ostream& out, const std::vector<GlobalBaseline>& baselines) {
  out << "Score,2σ,3σ\n";
  for (const auto& b : baselines) {
    out << b.score_key << ',' << format_f1(b.result.threshold_2sigma) << ','
        << format_f1(b.result.threshold_3sigma) << '\n';
  }
}

namespace {

// Best non-failed cell per (score, w) by local F1; ties keep the lowest index.
std::vector<const ExperimentResult*> best_local_cells(const GridReport& report) {
  std::vector<const ExperimentResult*> best;
  std::map<std::pair<std::string, int>, std::size_t> slot;
  for (const auto& c : report.cells) {
    if (c.failed) continue;
    auto [it, inserted] = slot.try_emplace({c.score_key, c.w}, best.size());
    if (inserted) {
      best.push_back(&c);
    } else if (c.local_f1 > best[it->second]->local_f1) {
      best[it->second] = &c;
    }
  }
  return best;
}

struct BestGlobal {
  const ExperimentResult* cell = nullptr;
  const GlobalResult* result = nullptr;
};

std::vector<BestGlobal> best_global_cells(const GridReport& report) {
  std::vector<BestGlobal> best;
  std::map<std::string, std::size_t> slot;
  for (const auto& c : report.cells) {
    for (const auto& g : c.global) {
      if (g.failed) continue;
      auto [it, inserted] = slot.try_emplace(c.score_key, best.size());
      if (inserted) {
        best.push_back({&c, &g});
      } else if (g.f1 > best[it->second].result->f1) {
        best[it->second] = {&c, &g};
      }
    }
  }
  return best;
}

}  // namespace

void write_table4(std::ostream& out, const GridReport& report) {
  out << "Score,Model,Input Type,w,n_λ,F1\n";
  for (const auto* c : best_local_cells(report)) {
    out << c->score_key << ',' << c->model.name() << ',' << to_string(c->input_type) << ',' << c->w
        << ',' << c->n_lambda << ',' << format_f1(c->local_f1) << '\n';
  }
}

void write_table5(std::ostream& out, const GridReport& report) {
  out << "Score,Model,n_λ,Input Type,w,Accumulator,Aggregator,F1\n";
  for (const auto& b : best_global_cells(report)) {
    out << b.cell->score_key << ',' << b.cell->model.name() << ',' << b.cell->n_lambda << ','
        << to_string(b.cell->input_type) << ',' << b.cell->w << ',' << to_string(b.result->accumulator)
        << ',' << to_string(b.result->aggregator) << ',' << format_f1(b.result->f1) << '\n';
  }
}

EvaluateSummary summarize(const GridReport& report) {
  EvaluateSummary s;
  s.n_cells = report.cells.size();
  s.n_failed = report.n_failed;
  for (const auto& c : report.cells) {
    if (c.failed) continue;
    s.best_local_f1 = std::max(s.best_local_f1, c.local_f1);
    if (c.above_local_3sigma) ++s.n_above_local;
    for (const auto& g : c.global) {
      if (!g.failed) s.best_global_f1 = std::max(s.best_global_f1, g.f1);
    }
  }
  return s;
}

namespace {

void write_cells_csv(std::ostream& out, const GridReport& report) {
  out << "cell_index,score,model,input_type,w,n_lambda,failed,local_f1,fold_f1,baseline_3sigma_local,"
         "above_local_3sigma,error\n";
  for (const auto& c : report.cells) {
    std::string folds;
    for (std::size_t i = 0; i < c.fold_local_f1.size(); ++i) {
      if (i) folds += ';';
      folds += format_f1(c.fold_local_f1[i]);
    }
    out << c.cell_index << ',' << c.score_key << ',' << c.model.name() << ',' << to_string(c.input_type)
        << ',' << c.w << ',' << c.n_lambda << ',' << (c.failed ? 1 : 0) << ','
        << (c.failed ? "" : format_f1(c.local_f1)) << ',' << folds << ','
        << format_f1(c.baseline_3sigma_local) << ',' << (c.above_local_3sigma ? 1 : 0) << ','
        << csv_field(c.error) << '\n';
  }
}

void write_global_csv(std::ostream& out, const GridReport& report) {
  out << "cell_index,score,model,input_type,w,n_lambda,accumulator,aggregator,failed,f1,fold_f1,"
         "baseline_2sigma_global,baseline_3sigma_global,error\n";
  for (const auto& c : report.cells) {
    for (const auto& g : c.global) {
      std::string folds;
      for (std::size_t i = 0; i < g.fold_f1.size(); ++i) {
        if (i) folds += ';';
        folds += format_f1(g.fold_f1[i]);
      }
      out << c.cell_index << ',' << c.score_key << ',' << c.model.name() << ','
          << to_string(c.input_type) << ',' << c.w << ',' << c.n_lambda << ','
          << to_string(g.accumulator) << ',' << to_string(g.aggregator) << ',' << (g.failed ? 1 : 0)
          << ',' << (g.failed ? "" : format_f1(g.f1)) << ',' << folds << ','
          << format_f1(c.baseline_2sigma_global) << ',' << format_f1(c.baseline_3sigma_global) << ','
          << csv_field(g.error) << '\n';
    }
  }
}

ordered_json manifest_json(const EvaluateConfig& config, std::size_t n_sessions, const GridReport& report,
                           const EvaluateSummary& summary) {
  const auto& g = config.grid;
  ordered_json m;
  m["kind"] = "evaluate";
  m["input"] = config.input;
  m["n_sessions"] = n_sessions;
  m["seed"] = g.seed;
  m["score_keys"] = g.score_keys;
  ordered_json models = ordered_json::array();
  for (const auto& s : g.models) models.push_back(s.name());
  m["models"] = std::move(models);
  m["windows"] = g.windows;
  m["n_lambdas"] = g.n_lambdas;
  ordered_json types = ordered_json::array();
  for (auto t : g.input_types) types.push_back(to_string(t));
  m["input_types"] = std::move(types);
  ordered_json accs = ordered_json::array();
  for (auto a : g.accumulators) accs.push_back(to_string(a));
  m["accumulators"] = std::move(accs);
  ordered_json aggs = ordered_json::array();
  for (auto a : g.aggregators) aggs.push_back(to_string(a));
  m["aggregators"] = std::move(aggs);
  m["folds"] = g.folds;
  m["n_boot"] = g.n_boot;
  m["stride"] = g.stride;
  m["threshold"] = g.threshold;
  m["soft_sum"] = g.soft_sum;
  m["tolerances"] = {{"svd_rel_tol", g.svd.rel_tol ? ordered_json(*g.svd.rel_tol) : ordered_json("default")},
                     {"zero_eigenvalue_rel_tol", kZeroEigenvalueRelTol},
                     {"gnb_var_smoothing", 1e-9},
                     {"lr_l2", 1.0},
                     {"lr_gradient_tol", 1e-6},
                     {"svm_duality_gap_tol", 1e-6}};
  ordered_json folds = ordered_json::array();
  for (std::size_t s = 0; s < report.folds.size(); ++s) {
    folds.push_back({{"score", g.score_keys[s]},
                     {"max_stratification_gap", report.folds[s].max_stratification_gap}});
  }
  m["fold_assignments"] = std::move(folds);
  ordered_json local = ordered_json::array();
  for (const auto& b : report.local_baselines) {
    local.push_back({{"score", b.score_key}, {"w", b.w}, {"bootstrap", bootstrap_json(b.result)}});
  }
  m["local_baselines"] = std::move(local);
  ordered_json global = ordered_json::array();
  for (const auto& b : report.global_baselines) {
    global.push_back({{"score", b.score_key}, {"bootstrap", bootstrap_json(b.result)}});
  }
  m["global_baselines"] = std::move(global);
  m["summary"] = {{"cells", summary.n_cells},
                  {"failed", summary.n_failed},
                  {"above_local_3sigma", summary.n_above_local},
                  {"best_local_f1", summary.best_local_f1},
                  {"best_global_f1", summary.best_global_f1}};
  return m;
}

}  // namespace

EvaluateSummary run_evaluate(const EvaluateConfig& config) {
  const auto sessions = load_corpus(config.input);
  ensure_dir(config.out);
  const GridContext ctx(sessions, config.grid);
  const GridReport report = ctx.run();
  const EvaluateSummary summary = summarize(report);
  const auto& g = ctx.config();

  const fs::path dir(config.out);
  auto write_file = [&](const char* name, auto&& body) {
    auto out = open_out(dir / name);
    body(out);
    finish(out, dir / name);
  };
  write_file("labels.csv", [&](std::ostream& o) { write_labels_csv(o, sessions); });
  write_file("table2.csv", [&](std::ostream& o) { write_table2(o, report.local_baselines); });
  write_file("table3.csv", [&](std::ostream& o) { write_table3(o, report.global_baselines); });
  write_file("table4.csv", [&](std::ostream& o) { write_table4(o, report); });
  write_file("table5.csv", [&](std::ostream& o) { write_table5(o, report); });
  write_file("cells.csv", [&](std::ostream& o) { write_cells_csv(o, report); });
  write_file("global.csv", [&](std::ostream& o) { write_global_csv(o, report); });

  // Fold-level dumps for the best local cell of each score, then the best
  // global configuration of each score.
  std::map<std::string, const ExperimentResult*> best_per_score;
  for (const auto& c : report.cells) {
    if (c.failed) continue;
    auto [it, inserted] = best_per_score.try_emplace(c.score_key, &c);
    if (!inserted && c.local_f1 > it->second->local_f1) it->second = &c;
  }
  write_file("predictions_local.csv", [&](std::ostream& o) {
    o << "score,cell_index,session_id,t,fold,proba,truth\n";
    for (const auto& key : g.score_keys) {
      auto it = best_per_score.find(key);
      if (it == best_per_score.end()) continue;
      for (const auto& p : ctx.window_predictions(it->second->cell_index)) {
        o << key << ',' << it->second->cell_index << ',' << csv_field(sessions[p.session].session_id) << ','
          << p.t << ',' << p.fold << ',' << fmt::format("{}", p.proba) << ',' << p.truth << '\n';
      }
    }
  });
  write_file("predictions_global.csv", [&](std::ostream& o) {
    o << "score,cell_index,session_id,fold,accumulator,aggregator,value,predicted,truth\n";
    for (const auto& b : best_global_cells(report)) {
      for (const auto& p : b.cell->session_predictions) {
        if (p.accumulator != b.result->accumulator || p.aggregator != b.result->aggregator) continue;
        o << b.cell->score_key << ',' << b.cell->cell_index << ','
          << csv_field(sessions[p.session].session_id) << ',' << p.fold << ',' << to_string(p.accumulator)
          << ',' << to_string(p.aggregator) << ',' << fmt::format("{}", p.score) << ',' << p.predicted
          << ',' << p.truth << '\n';
      }
    }
  });

  // Stored models for the best local cell of each score.
  for (const auto& [key, cell] : best_per_score) {
    const auto coord = ctx.cell_coordinates(cell->cell_index);
    const auto& X = ctx.features(coord[2], coord[3], coord[4]);
    const auto labels = ctx.window_labels(coord[0], coord[2]);
    const auto wfold = ctx.window_folds(coord[0], coord[2]);
    const fs::path model_dir = dir / "models" / key;
    ensure_dir(model_dir.string());
    ModelMetadata meta{key, cell->w, cell->n_lambda, cell->input_type, -1};
    for (int f = 0; f <= g.folds; ++f) {
      ModelSpec spec = cell->model;
      spec.seed = derive_seed(g.seed, cell->cell_index, static_cast<std::uint64_t>(f));
      meta.fold = f < g.folds ? f : -1;
      try {
        // fold == g.folds matches no window, so that model sees everything.
        const TrainedModel m = train_fold(spec, X, labels, wfold, f);
        const auto name = f < g.folds ? fmt::format("best_fold{}.dmm", f) : std::string("best_all.dmm");
        save_model((model_dir / name).string(), m, meta);
      } catch (const Error& e) {
        if (e.kind() == ErrorKind::Io) throw;
      }
    }
  }

  write_file("manifest.json", [&](std::ostream& o) {
    o << manifest_json(config, sessions.size(), report, summary).dump(2) << '\n';
  });
  return summary;
}

// ---------------------------------------------------------------------------
// baseline

BaselineReport compute_baselines(const std::vector<Session>& sessions, const BaselineConfig& config) {
  if (config.score_keys.empty()) fail(ErrorKind::Validation, "no score keys configured");
  if (config.stride < 1) fail(ErrorKind::Validation, "stride must be at least 1");
  for (const auto& key : config.score_keys) {
    if (!score_index(key)) fail(ErrorKind::Validation, "unknown score key '" + key + "'");
  }
  for (int w : config.windows) {
    if (w < 2) fail(ErrorKind::Validation, "window sizes must be at least 2");
  }

  std::vector<Eigen::Index> exchanges(sessions.size(), 0);
  for (std::size_t i = 0; i < sessions.size(); ++i) {
    try {
      exchanges[i] = align_pairs(normalize_turns(sessions[i])).T();
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::EmptySession) throw;
    }
  }

  BaselineReport out;
  for (std::size_t s = 0; s < config.score_keys.size(); ++s) {
    const auto& key = config.score_keys[s];
    std::vector<int> session_labels;
    for (const auto& session : sessions) session_labels.push_back(binarize_labels(session)[key]);
    for (std::size_t w = 0; w < config.windows.size(); ++w) {
      std::vector<int> window_labels;
      for (std::size_t i = 0; i < sessions.size(); ++i) {
        const auto n = window_count(exchanges[i], config.windows[w], config.stride);
        window_labels.insert(window_labels.end(), static_cast<std::size_t>(n), session_labels[i]);
      }
      out.local.push_back({key, config.windows[w],
                           bootstrap_local_baseline(window_labels, config.n_boot,
                                                    derive_seed(config.seed, 0xB0, s, w))});
    }
    out.global.push_back(
        {key, bootstrap_global_baseline(session_labels, config.n_boot, derive_seed(config.seed, 0xB1, s))});
  }
  return out;
}

void run_baseline(const BaselineConfig& config) {
  const auto sessions = load_corpus(config.input);
  const BaselineReport report = compute_baselines(sessions, config);
  ensure_dir(config.out);
  const fs::path dir(config.out);
  {
    auto out = open_out(dir / "table2.csv");
    write_table2(out, report.local);
    finish(out, dir / "table2.csv");
  }
  auto out = open_out(dir / "table3.csv");
  write_table3(out, report.global);
  finish(out, dir / "table3.csv");
}

// ---------------------------------------------------------------------------
// trajectory

std::vector<TrajectoryPoint> session_trajectories(const std::vector<Session>& sessions,
                                                  const StoredModel& stored,
                                                  const TrajectoryConfig& config) {
  std::vector<const Session*> chosen;
  if (config.session_ids.empty()) {
    for (const auto& s : sessions) chosen.push_back(&s);
  } else {
    for (const auto& id : config.session_ids) {
      auto it = std::find_if(sessions.begin(), sessions.end(),
                             [&](const Session& s) { return s.session_id == id; });
      if (it == sessions.end()) fail(ErrorKind::NotFound, "unknown session_id '" + id + "'");
      chosen.push_back(&*it);
    }
  }

  const auto& meta = stored.meta;
  if (meta.w < 2 || meta.n_lambda < 1) fail(ErrorKind::Validation, "stored model lacks window metadata");
  std::vector<TrajectoryPoint> out;
  for (const Session* s : chosen) {
    const auto windows = extract_windows(align_pairs(normalize_turns(*s)), s->session_id, meta.w, config.stride);
    if (windows.empty()) {
      if (config.session_ids.empty()) continue;
      fail(ErrorKind::EmptySession, "session '" + s->session_id + "' has no windows at w=" +
                                        std::to_string(meta.w));
    }
    std::vector<double> probas;
    probas.reserve(windows.size());
    for (const auto& win : windows) {
      const auto fv = build_features(eigenvalues(fit_window(win, config.svd)), meta.input_type, meta.n_lambda);
      probas.push_back(predict_proba(stored.model, fv));
    }
    for (const auto& [i, c] : trajectory(probas, config.threshold)) out.push_back({s->session_id, i, c});
  }
  return out;
}

void run_trajectory(const TrajectoryConfig& config) {
  if (config.out.empty()) fail(ErrorKind::Validation, "trajectory needs an output file");
  const auto sessions = load_corpus(config.input);
  const StoredModel model = load_model(config.model);
  const auto points = session_trajectories(sessions, model, config);
  const fs::path path(config.out);
  if (path.has_parent_path()) ensure_dir(path.parent_path().string());
  auto out = open_out(path);
  out << "session_id,window_index,cumulative_score\n";
  for (const auto& p : points) {
    out << csv_field(p.session_id) << ',' << p.window_index << ',' << fmt::format("{}", p.cumulative) << '\n';
  }
  finish(out, path);
}

}  // namespace dyad
