#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace sddp {

// Deterministic splitmix64 stream. One instance per logical sampling task;
// all randomness in the toolkit flows through seeds derived with derive_seed
// so that reruns with the same master seed are bit-identical.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi] inclusive.
  int uniform_int(int lo, int hi) {
    if (hi < lo) throw std::invalid_argument("uniform_int: empty range");
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(next_u64() % span);
  }

  // Standard normal via Box-Muller, one value per call (no cached state).
  double normal() {
    const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  std::uint64_t state_;
};

// Derives an independent seed from a master seed, a purpose tag and an index.
// Distinct tags give disjoint seed families, which is how train/valid/test
// splits and per-trajectory rollout streams stay decoupled.
std::uint64_t derive_seed(std::uint64_t master, std::string_view tag, std::uint64_t index = 0);

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.derived().allFinite();
}

// Thrown when a stage LP fails during a forward/backward pass or rollout;
// carries enough position info to identify the offending subproblem.
class SolveError : public std::runtime_error {
 public:
  SolveError(std::string message, int stage, int trajectory)
      : std::runtime_error(std::move(message)), stage_(stage), trajectory_(trajectory) {}
  int stage() const { return stage_; }
  int trajectory() const { return trajectory_; }

 private:
  int stage_;
  int trajectory_;
};

}  // namespace sddp
