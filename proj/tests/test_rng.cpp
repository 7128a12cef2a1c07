#include <doctest.h>

#include <set>

#include "marl/rng.hpp"

using namespace marl;

TEST_CASE("keyed draws are pure functions of their keys") {
  CHECK(rng::keyed_u64(1, 2, 3) == rng::keyed_u64(1, 2, 3));
  CHECK(rng::keyed_u64(1, 2, 3, 4, 5) == rng::keyed_u64(1, 2, 3, 4, 5));
  CHECK(rng::keyed_u64(1, 2, 3) != rng::keyed_u64(1, 2, 4));
  CHECK(rng::keyed_u64(1, 2, 3) != rng::keyed_u64(2, 2, 3));
}

TEST_CASE("streams with the same key separate") {
  CHECK(rng::keyed_u64(9, rng::kKernel, 0) !=
        rng::keyed_u64(9, rng::kRewards, 0));
  CHECK(rng::keyed_u64(9, rng::kFeatures, 0) !=
        rng::keyed_u64(9, rng::kNoise, 0));
}

TEST_CASE("unit draws land in [0,1)") {
  for (std::uint64_t i = 0; i < 10000; ++i) {
    const double u = rng::keyed_unit(42, rng::kTrajectory, i);
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("counter generator replays identically") {
  rng::Counter a(7, rng::kTrajectory);
  rng::Counter b(7, rng::kTrajectory);
  for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("counter uniform respects bounds") {
  rng::Counter gen(3, rng::kInit);
  for (int i = 0; i < 1000; ++i) {
    const double v = gen.uniform(-0.1, 0.1);
    CHECK(v >= -0.1);
    CHECK(v < 0.1);
  }
}

TEST_CASE("discrete sampling tracks the distribution") {
  rng::Counter gen(5, rng::kTrajectory);
  Eigen::VectorXd probs(3);
  probs << 0.2, 0.5, 0.3;
  Eigen::Vector3d counts = Eigen::Vector3d::Zero();
  const int n = 100000;
  for (int i = 0; i < n; ++i) counts[gen.sample_discrete(probs)] += 1.0;
  for (int k = 0; k < 3; ++k) {
    const double p_hat = counts[k] / n;
    const double se = std::sqrt(probs[k] * (1 - probs[k]) / n);
    CHECK(std::abs(p_hat - probs[k]) < 4 * se);
  }
}

TEST_CASE("uniform_index covers the range") {
  rng::Counter gen(11, rng::kGraph);
  std::set<int> seen;
  for (int i = 0; i < 1000; ++i) {
    const int v = gen.uniform_index(7);
    CHECK(v >= 0);
    CHECK(v < 7);
    seen.insert(v);
  }
  CHECK(seen.size() == 7);
}
