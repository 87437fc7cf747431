#pragma once

#include <cmath>
#include <cstdint>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace dyad {

enum class ErrorKind {
  Parse,
  DimensionMismatch,
  Validation,
  EmptySession,
  Precondition,
  Numerical,
  DegenerateTraining,
  InfeasibleSplit,
  NotFound,
  Io,
  UndefinedCorrelation,
};

const char* to_string(ErrorKind kind);

// Every failure raised by the library carries a kind so the C boundary can
// map it onto a status code.
class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

// splitmix64 finaliser; used to derive independent stream seeds from
// (seed, index) tuples.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a,
                                    std::uint64_t b = 0, std::uint64_t c = 0) {
  return mix_seed(mix_seed(mix_seed(seed ^ mix_seed(a)) ^ b) ^ c);
}

// Small deterministic generator (xoshiro256**). All sampling routines are
// written here rather than through <random> distributions so that outputs
// are identical across standard library implementations.
class Rng {
public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  // Uniform integer on [0, n).
  std::uint64_t below(std::uint64_t n);
  // Standard normal via the polar method.
  double normal();
  bool bernoulli(double p) { return uniform() < p; }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

private:
  std::uint64_t s_[4];
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// Runs fn(i) for i in [0, n) on up to `jobs` threads. Work is claimed from a
// shared counter; callers write results into slot i so the output does not
// depend on scheduling. The first exception thrown by any task is rethrown.
void parallel_for(std::size_t n, int jobs,
                  const std::function<void(std::size_t)>& fn);

inline bool all_finite(const double* data, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(data[i])) return false;
  }
  return true;
}

}  // namespace dyad
