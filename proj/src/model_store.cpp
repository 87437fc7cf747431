#include "dyad/model_store.hpp"

#include "dyad/common.hpp"

#include <fmt/format.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>

namespace dyad {

namespace {

constexpr const char* kMagic = "DYADMODES-MODEL 1";

const char* kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::GNB: return "GNB";
    case ModelKind::LR: return "LR";
    case ModelKind::LSVM: return "LSVM";
    case ModelKind::KNN: return "KNN";
  }
  return "?";
}

ModelKind parse_kind(const std::string& s) {
  if (s == "GNB") return ModelKind::GNB;
  if (s == "LR") return ModelKind::LR;
  if (s == "LSVM") return ModelKind::LSVM;
  if (s == "KNN") return ModelKind::KNN;
  fail(ErrorKind::Parse, "model store: unknown kind '" + s + "'");
}

void put_f64(std::ostream& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) {
    bytes[i] = static_cast<unsigned char>(bits & 0xffu);
    bits >>= 8;
  }
  out.write(reinterpret_cast<const char*>(bytes), 8);
}

double get_f64(std::istream& in) {
  unsigned char bytes[8];
  if (!in.read(reinterpret_cast<char*>(bytes), 8)) {
    fail(ErrorKind::Parse, "model store: truncated parameter block");
  }
  std::uint64_t bits = 0;
  for (int i = 7; i >= 0; --i) bits = (bits << 8) | bytes[i];
  return std::bit_cast<double>(bits);
}

std::vector<double> flatten(const TrainedModel& model, std::size_t& rows) {
  std::vector<double> v;
  rows = 0;
  auto append = [&](const Eigen::MatrixXd& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) v.push_back(m(i, j));
  };
  auto append_vec = [&](const Eigen::VectorXd& x) {
    for (Eigen::Index i = 0; i < x.size(); ++i) v.push_back(x[i]);
  };
  std::visit(
      [&](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, GnbParams>) {
          append(p.means);
          append(p.variances);
          v.push_back(p.priors[0]);
          v.push_back(p.priors[1]);
          v.push_back(p.smoothing);
        } else if constexpr (std::is_same_v<P, LinearParams>) {
          append_vec(p.weights);
          v.push_back(p.bias);
        } else if constexpr (std::is_same_v<P, SvmParams>) {
          append_vec(p.linear.weights);
          v.push_back(p.linear.bias);
          v.push_back(p.platt_a);
          v.push_back(p.platt_b);
          v.push_back(p.duality_gap);
        } else {
          rows = static_cast<std::size_t>(p.features.rows());
          append(p.features);
          for (int y : p.labels) v.push_back(static_cast<double>(y));
          append_vec(p.center);
          append_vec(p.scale);
        }
      },
      model.params);
  return v;
}

}  // namespace

void write_model(std::ostream& out, const TrainedModel& model, const ModelMetadata& meta) {
  std::size_t rows = 0;
  const std::vector<double> params = flatten(model, rows);
  out << kMagic << '\n';
  out << "kind=" << kind_name(model.spec.kind) << '\n';
  out << "name=" << model.spec.name() << '\n';
  if (model.spec.c) out << "c=" << fmt::format("{}", *model.spec.c) << '\n';
  if (model.spec.k) out << "k=" << *model.spec.k << '\n';
  out << "seed=" << model.spec.seed << '\n';
  out << "standardize=" << (model.spec.standardize ? 1 : 0) << '\n';
  out << "feature_dim=" << model.feature_dim << '\n';
  out << "score=" << meta.score_key << '\n';
  out << "w=" << meta.w << '\n';
  out << "n_lambda=" << meta.n_lambda << '\n';
  out << "input_type=" << to_string(meta.input_type) << '\n';
  out << "fold=" << meta.fold << '\n';
  out << "rows=" << rows << '\n';
  out << "params=" << params.size() << '\n';
  out << "end\n";
  for (double v : params) put_f64(out, v);
}

StoredModel read_model(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kMagic) {
    fail(ErrorKind::Parse, "model store: missing header");
  }
  std::map<std::string, std::string> kv;
  for (;;) {
    if (!std::getline(in, line)) fail(ErrorKind::Parse, "model store: unterminated header");
    if (line == "end") break;
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(ErrorKind::Parse, "model store: bad header line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) fail(ErrorKind::Parse, "model store: missing header key '" + key + "'");
    return it->second;
  };
  auto get_int = [&](const std::string& key) -> long long {
    try {
      return std::stoll(get(key));
    } catch (const std::logic_error&) {
      fail(ErrorKind::Parse, "model store: bad integer for '" + key + "'");
    }
  };

  StoredModel stored;
  TrainedModel& model = stored.model;
  model.spec.kind = parse_kind(get("kind"));
  if (kv.count("c")) {
    try {
      model.spec.c = std::stod(kv["c"]);
    } catch (const std::logic_error&) {
      fail(ErrorKind::Parse, "model store: bad number for 'c'");
    }
  }
  if (kv.count("k")) model.spec.k = static_cast<int>(get_int("k"));
  try {
    model.spec.seed = std::stoull(get("seed"));
  } catch (const std::logic_error&) {
    fail(ErrorKind::Parse, "model store: bad integer for 'seed'");
  }
  model.spec.standardize = get_int("standardize") != 0;
  model.spec.validate();
  model.feature_dim = static_cast<std::size_t>(get_int("feature_dim"));
  stored.meta.score_key = get("score");
  stored.meta.w = static_cast<int>(get_int("w"));
  stored.meta.n_lambda = static_cast<int>(get_int("n_lambda"));
  stored.meta.input_type = parse_input_type(get("input_type"));
  stored.meta.fold = static_cast<int>(get_int("fold"));
  const long long rows_raw = get_int("rows");
  const long long count_raw = get_int("params");
  if (rows_raw < 0 || count_raw < 0 || get_int("feature_dim") < 0) {
    fail(ErrorKind::Parse, "model store: negative size in header");
  }
  const auto rows = static_cast<Eigen::Index>(rows_raw);

  // Read value by value so a corrupt count fails on truncation rather than
  // on a huge allocation.
  std::vector<double> v;
  for (long long i = 0; i < count_raw; ++i) v.push_back(get_f64(in));
  std::size_t pos = 0;
  const auto dim = static_cast<Eigen::Index>(model.feature_dim);
  auto take = [&](Eigen::Index r, Eigen::Index c) {
    if (pos + static_cast<std::size_t>(r * c) > v.size()) {
      fail(ErrorKind::Parse, "model store: parameter block too short");
    }
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < c; ++j) m(i, j) = v[pos++];
    return m;
  };
  auto take_vec = [&](Eigen::Index n) -> Eigen::VectorXd { return take(n, 1).col(0); };
  auto take_one = [&] { return take(1, 1)(0, 0); };

  switch (model.spec.kind) {
    case ModelKind::GNB: {
      GnbParams p;
      p.means = take(2, dim);
      p.variances = take(2, dim);
      p.priors[0] = take_one();
      p.priors[1] = take_one();
      p.smoothing = take_one();
      model.params = std::move(p);
      break;
    }
    case ModelKind::LR: {
      LinearParams p;
      p.weights = take_vec(dim);
      p.bias = take_one();
      model.params = std::move(p);
      break;
    }
    case ModelKind::LSVM: {
      SvmParams p;
      p.linear.weights = take_vec(dim);
      p.linear.bias = take_one();
      p.platt_a = take_one();
      p.platt_b = take_one();
      p.duality_gap = take_one();
      model.params = std::move(p);
      break;
    }
    case ModelKind::KNN: {
      KnnParams p;
      p.features = take(rows, dim);
      const Eigen::VectorXd labels = take_vec(rows);
      p.labels.reserve(static_cast<std::size_t>(rows));
      for (Eigen::Index i = 0; i < rows; ++i) p.labels.push_back(static_cast<int>(labels[i]));
      if (model.spec.standardize) {
        p.center = take_vec(dim);
        p.scale = take_vec(dim);
      }
      model.params = std::move(p);
      break;
    }
  }
  if (pos != v.size()) fail(ErrorKind::Parse, "model store: trailing parameters");
  if (in.peek() != std::char_traits<char>::eof()) fail(ErrorKind::Parse, "model store: trailing bytes");
  return stored;
}

void save_model(const std::string& path, const TrainedModel& model, const ModelMetadata& meta) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write model file '" + path + "'");
  write_model(out, model, meta);
  if (!out) fail(ErrorKind::Io, "write failed for '" + path + "'");
}

StoredModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open model file '" + path + "'");
  return read_model(in);
}

}  // namespace dyad
