#pragma once

#include <cstdint>
#include <Eigen/Core>

namespace marl::rng {

// Purpose-keyed stream ids. Model draws (kernel rows, reward tables,
// feature values) are pure functions of (seed, stream, keys) so lazy and
// materialized storage produce identical values.
enum Stream : std::uint64_t {
  kKernel = 0,
  kRewards = 1,
  kFeatures = 2,
  kPolicyFeatures = 3,
  kNoise = 4,
  kTrajectory = 5,
  kInit = 6,
  kGraph = 7,
  kDcmmEdges = 8,
  kVertexHunt = 9,
  kDirichlet = 10,
  kStateFeatures = 11,
  kRewardFeatures = 12,
};

// splitmix64 finalizer
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t keyed_u64(std::uint64_t seed, std::uint64_t stream,
                               std::uint64_t k0, std::uint64_t k1 = 0,
                               std::uint64_t k2 = 0) {
  std::uint64_t h = mix64(seed);
  h = mix64(h ^ stream);
  h = mix64(h ^ k0);
  h = mix64(h ^ k1);
  h = mix64(h ^ k2);
  return h;
}

// 53-bit mantissa draw in [0, 1)
inline double to_unit(std::uint64_t u) {
  return static_cast<double>(u >> 11) * 0x1.0p-53;
}

inline double keyed_unit(std::uint64_t seed, std::uint64_t stream,
                         std::uint64_t k0, std::uint64_t k1 = 0,
                         std::uint64_t k2 = 0) {
  return to_unit(keyed_u64(seed, stream, k0, k1, k2));
}

// Sequential counter-based generator for trajectory-style consumers.
class Counter {
 public:
  Counter(std::uint64_t seed, std::uint64_t stream)
      : seed_(seed), stream_(stream) {}

  std::uint64_t next_u64() { return keyed_u64(seed_, stream_, counter_++); }
  double next_unit() { return to_unit(next_u64()); }
  double uniform(double lo, double hi) {
    return lo + (hi - lo) * next_unit();
  }

  // Index into a probability vector by CDF walk.
  int sample_discrete(const Eigen::VectorXd& probs) {
    const double u = next_unit();
    double acc = 0.0;
    for (int i = 0; i < probs.size(); ++i) {
      acc += probs[i];
      if (u < acc) return i;
    }
    return static_cast<int>(probs.size()) - 1;
  }

  int uniform_index(int n) {
    return static_cast<int>(next_unit() * n) % n;
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
};

}  // namespace marl::rng
