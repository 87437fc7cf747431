#include "grid_compare.hpp"
#include "support.hpp"

#include "dyad/eval.hpp"
#include "dyad/pipeline.hpp"

#include "data/pearson_reference.inc"

#include <doctest.h>

#include <map>
#include <numeric>
#include <random>
#include <set>

using namespace dyad;

namespace {

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::Io;
}

std::vector<Session> separable_corpus(std::uint64_t seed, int n_sessions = 40, int n_clients = 20) {
  SynthConfig c;
  c.seed = seed;
  c.shape.n_sessions = n_sessions;
  c.shape.n_clients = n_clients;
  return synth_corpus(c);
}

GridConfig small_grid() {
  GridConfig g;
  g.score_keys = {"ctrs"};
  g.models = {ModelSpec::gnb(), ModelSpec::lr(), ModelSpec::knn(5), ModelSpec::lsvm(1)};
  g.windows = {3, 5};
  g.n_lambdas = {1, 3};
  g.n_boot = 200;
  return g;
}

}  // namespace

TEST_CASE("f1 examples") {
  CHECK(f1_score({1, 0, 1}, {1, 0, 1}) == 1.0);
  CHECK(f1_score({1, 1, 1, 1}, {1, 0, 1, 0}) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(f1_score({0, 0, 0}, {0, 1, 0}) == 0.0);
  CHECK(kind_of([] { f1_score({1}, {1, 0}); }) == ErrorKind::Validation);
  CHECK(kind_of([] { f1_score({}, {}); }) == ErrorKind::Validation);
}

TEST_CASE("f1 is invariant under joint permutation") {
  Rng rng(41);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<int> p(1 + rng.below(30)), t(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] = rng.bernoulli(0.5);
      t[i] = rng.bernoulli(0.5);
    }
    const double f = f1_score(p, t);
    CHECK(f >= 0.0);
    CHECK(f <= 1.0);
    std::vector<std::size_t> idx(p.size());
    std::iota(idx.begin(), idx.end(), 0);
    rng.shuffle(idx);
    std::vector<int> p2, t2;
    for (auto i : idx) {
      p2.push_back(p[i]);
      t2.push_back(t[i]);
    }
    CHECK(f1_score(p2, t2) == f);
  }
}

TEST_CASE("folds on ten singleton clients") {
  std::vector<std::string> clients;
  std::vector<int> labels;
  for (int i = 0; i < 10; ++i) {
    clients.push_back("c" + std::to_string(i));
    labels.push_back(i < 5 ? 1 : 0);
  }
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto f = make_folds(clients, labels, 5, seed);
    std::map<int, std::pair<int, int>> per;
    for (std::size_t i = 0; i < 10; ++i) {
      per[f.fold_of_session[i]].first += 1;
      per[f.fold_of_session[i]].second += labels[i];
    }
    REQUIRE(per.size() == 5);
    for (const auto& [fold, counts] : per) {
      CHECK(counts.first == 2);
      CHECK(counts.second == 1);
    }
  }
}

TEST_CASE("folds keep clients together and fail when infeasible") {
  const std::vector<std::string> clients{"a", "b", "a", "c", "d", "a", "e", "f"};
  const std::vector<int> labels{1, 0, 1, 0, 1, 1, 0, 0};
  const auto f = make_folds(clients, labels, 5, 3);
  CHECK(f.fold_of_session[0] == f.fold_of_session[2]);
  CHECK(f.fold_of_session[0] == f.fold_of_session[5]);
  CHECK(kind_of([] { make_folds({"a", "b", "c"}, {0, 1, 0}, 5, 0); }) == ErrorKind::InfeasibleSplit);
}

TEST_CASE("folds on generated corpora: grouping, coverage, stratification, determinism") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const int n_sessions = 30 + 10 * static_cast<int>(seed % 4);
    const auto corpus = separable_corpus(seed, n_sessions, n_sessions / 2);
    for (auto key : kScoreKeys) {
      const auto f = make_folds(corpus, std::string(key), 5, seed);
      const auto again = make_folds(corpus, std::string(key), 5, seed);
      CHECK(f.fold_of_session == again.fold_of_session);
      std::map<std::string, int> fold_of_client;
      std::vector<int> sizes(5, 0);
      for (std::size_t i = 0; i < corpus.size(); ++i) {
        const int fold = f.fold_of_session[i];
        REQUIRE(fold >= 0);
        REQUIRE(fold < 5);
        ++sizes[static_cast<std::size_t>(fold)];
        auto [it, inserted] = fold_of_client.try_emplace(corpus[i].client_id, fold);
        CHECK(it->second == fold);
      }
      for (int s : sizes) CHECK(s > 0);
      CHECK(f.max_stratification_gap <= 0.10 + 1e-12);
    }
  }
}

TEST_CASE("bootstrap examples") {
  std::vector<int> half(10000);
  for (std::size_t i = 0; i < half.size(); ++i) half[i] = static_cast<int>(i % 2);
  const auto b = bootstrap_local_baseline(half, 1000, 7);
  CHECK(std::abs(b.mean - 0.5) < 0.02);
  CHECK(b.threshold_3sigma == doctest::Approx(b.mean + 3 * b.sigma));
  CHECK(b.threshold_2sigma == doctest::Approx(b.mean + 2 * b.sigma));
  CHECK(!b.degenerate);

  const auto ones = bootstrap_local_baseline(std::vector<int>(50, 1), 100, 1);
  CHECK(ones.mean == 1.0);
  CHECK(ones.sigma == 0.0);
  CHECK(ones.degenerate);
  const auto g = bootstrap_global_baseline(std::vector<int>(30, 1), 100, 1);
  CHECK(g.mean == 1.0);
  CHECK(g.sigma == 0.0);

  CHECK(kind_of([&] { bootstrap_local_baseline(half, 99, 0); }) == ErrorKind::Validation);
  CHECK(kind_of([] { bootstrap_local_baseline({1}, 1000, 0); }) == ErrorKind::Validation);
}

TEST_CASE("global bootstrap agrees with an independent replicate run") {
  for (std::size_t n : {292u, 1168u}) {
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % 2);
    const auto b = bootstrap_global_baseline(labels, 4000, 11);
    // Independent Monte Carlo with a different generator.
    std::mt19937_64 gen(12345);
    std::bernoulli_distribution coin(0.5);
    std::vector<double> f;
    for (int r = 0; r < 4000; ++r) {
      std::vector<int> p(n);
      for (auto& v : p) v = coin(gen);
      f.push_back(f1_score(p, labels));
    }
    const double mean = std::accumulate(f.begin(), f.end(), 0.0) / f.size();
    double ss = 0.0;
    for (double v : f) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / (f.size() - 1));
    CHECK(std::abs(b.mean - mean) < 4 * sd / std::sqrt(4000.0) * std::sqrt(2.0));
    CHECK(std::abs(b.sigma / sd - 1.0) < 0.08);
    CHECK(std::abs(b.mean - 0.5) < 0.02);
  }
  std::vector<int> small(292), big(1168);
  for (std::size_t i = 0; i < small.size(); ++i) small[i] = static_cast<int>(i % 2);
  for (std::size_t i = 0; i < big.size(); ++i) big[i] = static_cast<int>(i % 2);
  const double ratio =
      bootstrap_global_baseline(small, 4000, 3).sigma / bootstrap_global_baseline(big, 4000, 3).sigma;
  CHECK(ratio == doctest::Approx(2.0).epsilon(0.1));
}

TEST_CASE("bootstrap mean converges as replicates double") {
  Rng rng(43);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<int> labels(200 + rng.below(800));
    const double p = 0.2 + 0.6 * rng.uniform();
    for (auto& v : labels) v = rng.bernoulli(p);
    const std::uint64_t seed = rng.next_u64();
    const int n_boot = 1000;
    const auto a = bootstrap_local_baseline(labels, n_boot, seed);
    const auto b = bootstrap_local_baseline(labels, 2 * n_boot, seed);
    CHECK(std::abs(a.mean - b.mean) < 2 * a.sigma / std::sqrt(static_cast<double>(n_boot)));
  }
}

TEST_CASE("pearson matches the frozen reference values") {
  for (const auto& c : kPearsonReference) {
    const auto r = pearson(c.x, c.y);
    CHECK(std::abs(r.r - c.r) < 1e-9);
    CHECK(std::abs(r.p - c.p) < 1e-9);
  }
}

TEST_CASE("pearson on affine and degenerate inputs") {
  Rng rng(47);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> x(3 + rng.below(50)), up, down;
    for (auto& v : x) v = rng.normal() * 100.0;
    const double a = 0.01 + 10.0 * rng.uniform(), b = rng.normal() * 1e3;
    for (double v : x) {
      up.push_back(a * v + b);
      down.push_back(-a * v + b);
    }
    CHECK(std::abs(pearson(x, up).r - 1.0) <= 1e-12);
    CHECK(std::abs(pearson(x, down).r + 1.0) <= 1e-12);
    CHECK(pearson(x, up).p < 1e-6);
  }
  CHECK(pearson({1, 2, 3, 4}, {1, 2, 3, 4}).p == 0.0);
  CHECK(kind_of([] { pearson({1, 1, 1}, {1, 2, 3}); }) == ErrorKind::UndefinedCorrelation);
  CHECK(kind_of([] { pearson({1, 2}, {1, 2}); }) == ErrorKind::Validation);
  CHECK(kind_of([] { pearson({1, 2, 3}, {1, 2}); }) == ErrorKind::Validation);
}

TEST_CASE("featurization shapes and skipped sessions") {
  auto corpus = separable_corpus(5, 10, 5);
  Session broken = testing::uniform_session("broken", "cx", 6);
  testing::add_turn(broken, Speaker::Client, Eigen::VectorXd::Zero(2));
  corpus.push_back(broken);
  const auto sets = featurize_corpus(corpus, {3, 8}, 1, {}, 2);
  REQUIRE(sets.size() == 2);
  for (const auto& set : sets) {
    Eigen::Index expect = 0;
    for (std::size_t i = 0; i + 1 < corpus.size(); ++i)
      expect += window_count(align_pairs(normalize_turns(corpus[i])).T(), set.w, 1);
    CHECK(static_cast<Eigen::Index>(set.windows.size()) == expect);
    for (const auto& w : set.windows) CHECK(w.session < corpus.size() - 1);
    const auto X = feature_matrix(set, InputType::TC, 3);
    CHECK(X.rows() == expect);
    CHECK(X.cols() == 12);
  }
}

TEST_CASE("grid config validation") {
  auto g = small_grid();
  CHECK_NOTHROW(g.validate());
  g.folds = 1;
  CHECK_THROWS_AS(g.validate(), Error);
  g = small_grid();
  g.score_keys = {"xx"};
  CHECK_THROWS_AS(g.validate(), Error);
  g = small_grid();
  g.windows = {1};
  CHECK_THROWS_AS(g.validate(), Error);
  g = small_grid();
  g.n_boot = 50;
  CHECK_THROWS_AS(g.validate(), Error);
  const auto d = GridConfig::default_grid();
  CHECK(d.score_keys.size() == 12);
  CHECK(d.models.size() == 14);
}

TEST_CASE("test folds never reach training") {
  const auto corpus = separable_corpus(9);
  auto cfg = small_grid();
  const GridContext ctx(corpus, cfg);
  for (std::size_t wi = 0; wi < cfg.windows.size(); ++wi) {
    const auto labels = ctx.window_labels(0, wi);
    const auto folds = ctx.window_folds(0, wi);
    const Eigen::MatrixXd& X = ctx.features(wi, 1, 2);
    for (const auto& spec : default_model_grid()) {
      for (int f = 0; f < cfg.folds; ++f) {
        const auto clean = train_fold(spec, X, labels, folds, f);
        Eigen::MatrixXd Xp = X;
        auto lp = labels;
        for (Eigen::Index i = 0; i < X.rows(); ++i) {
          if (folds[static_cast<std::size_t>(i)] != f) continue;
          Xp.row(i).setConstant(-9.87654321e6);
          lp[static_cast<std::size_t>(i)] = 1 - lp[static_cast<std::size_t>(i)];
        }
        const auto poisoned = train_fold(spec, Xp, lp, folds, f);
        for (int q = 0; q < 20; ++q) {
          const auto row = X.row(q * 7 % X.rows()).transpose().eval();
          CHECK(testing::same_bits(predict_proba(clean, row.data(), row.size()),
                                   predict_proba(poisoned, row.data(), row.size())));
        }
        if (spec.kind == ModelKind::KNN) {
          CHECK(std::get<KnnParams>(clean.params).features == std::get<KnnParams>(poisoned.params).features);
        }
      }
    }
  }
}

TEST_CASE("grid runs are identical across worker counts") {
  const auto corpus = separable_corpus(13);
  auto cfg = small_grid();
  cfg.jobs = 1;
  const auto base = run_grid(corpus, cfg);
  for (int jobs : {2, 5, 8}) {
    cfg.jobs = jobs;
    CHECK(testing::same_report(base, run_grid(corpus, cfg)));
  }
}

TEST_CASE("grid separates the planted corpus") {
  const auto report = run_grid(separable_corpus(21), small_grid());
  CHECK(report.n_failed == 0);
  double best_local = 0.0, best_global = 0.0;
  for (const auto& c : report.cells) {
    CHECK(c.local_f1 >= 0.0);
    CHECK(c.local_f1 <= 1.0);
    double mean = 0.0;
    for (double f : c.fold_local_f1) mean += f;
    CHECK(c.local_f1 == doctest::Approx(mean / c.fold_local_f1.size()));
    best_local = std::max(best_local, c.local_f1);
    CHECK(c.above_local_3sigma == (c.local_f1 > c.baseline_3sigma_local));
    CHECK(c.global.empty() != c.above_local_3sigma);
    for (const auto& g : c.global) best_global = std::max(best_global, g.f1);
  }
  CHECK(best_local >= 0.95);
  CHECK(best_global >= 0.95);
}

TEST_CASE("a fold without both labels fails its cell and the grid continues") {
  // ctrs is positive for one client only, so training sets lose the label.
  auto corpus = separable_corpus(3, 12, 6);
  for (auto& s : corpus) {
    const int score = s.client_id == corpus[1].client_id ? 6 : 0;
    for (auto key : kSubscoreKeys) s.subscores[std::string(key)] = score;
  }
  auto cfg = small_grid();
  cfg.models = {ModelSpec::gnb()};
  cfg.windows = {3};
  cfg.n_lambdas = {1};
  const auto report = run_grid(corpus, cfg);
  CHECK(report.n_failed == report.cells.size());
  for (const auto& c : report.cells) {
    CHECK(c.failed);
    CHECK(!c.error.empty());
  }
}

TEST_CASE("window predictions reproduce the cell's local score") {
  const auto corpus = separable_corpus(17);
  const auto cfg = small_grid();
  const GridContext ctx(corpus, cfg);
  const auto report = ctx.run();
  for (std::size_t cell : {0u, 5u, 17u}) {
    const auto preds = ctx.window_predictions(cell);
    std::map<int, std::pair<std::vector<int>, std::vector<int>>> by_fold;
    for (const auto& p : preds) {
      by_fold[p.fold].first.push_back(p.proba >= cfg.threshold ? 1 : 0);
      by_fold[p.fold].second.push_back(p.truth);
    }
    double mean = 0.0;
    for (const auto& [fold, pt] : by_fold) mean += f1_score(pt.first, pt.second);
    mean /= static_cast<double>(by_fold.size());
    CHECK(mean == doctest::Approx(report.cells[cell].local_f1).epsilon(1e-12));
  }
}
