#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "marl/errors.hpp"
#include "marl/membership.hpp"
#include "marl/mscore.hpp"
#include "marl/rng.hpp"

using namespace marl;

namespace {

// Block-pure membership: node i belongs fully to community i % k.
MembershipMatrix pure_blocks(int n, int k) {
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(n, k);
  for (int i = 0; i < n; ++i) g(i, i % k) = 1.0;
  return MembershipMatrix(g);
}

Eigen::VectorXd varied_degrees(int n, std::uint64_t seed) {
  Eigen::VectorXd theta(n);
  for (int i = 0; i < n; ++i)
    theta[i] = 0.5 + 0.4 * rng::keyed_unit(seed, rng::kInit, i);
  return theta;
}

Eigen::MatrixXd assortative(int k) {
  Eigen::MatrixXd p = Eigen::MatrixXd::Constant(k, k, 0.1);
  p.diagonal().setConstant(0.9);
  return p;
}

}  // namespace

TEST_CASE("DCMM model validates its pieces") {
  const MembershipMatrix gamma = pure_blocks(6, 2);
  const Eigen::VectorXd theta = Eigen::VectorXd::Ones(6);
  CHECK_THROWS_AS(
      mscore::DcmmModel(gamma, Eigen::VectorXd::Ones(5), assortative(2)),
      ConfigError);
  Eigen::VectorXd bad = theta;
  bad[2] = 0.0;
  CHECK_THROWS_AS(mscore::DcmmModel(gamma, bad, assortative(2)), ConfigError);
  CHECK_THROWS_AS(mscore::DcmmModel(gamma, theta, assortative(3)), ConfigError);
  Eigen::MatrixXd asym = assortative(2);
  asym(0, 1) = 0.3;
  CHECK_THROWS_AS(mscore::DcmmModel(gamma, theta, asym), ConfigError);
}

TEST_CASE("edge probabilities expand the block structure for pure nodes") {
  const MembershipMatrix gamma = pure_blocks(4, 2);
  const Eigen::MatrixXd p = assortative(2);
  const mscore::DcmmModel model(gamma, Eigen::VectorXd::Ones(4), p);
  double excess = -1.0;
  const Eigen::MatrixXd omega = model.edge_probabilities(&excess);
  CHECK(excess == 0.0);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      CHECK(omega(i, j) == doctest::Approx(p(i % 2, j % 2)).epsilon(1e-14));
}

TEST_CASE("edge probabilities clip out-of-range products and report it") {
  const MembershipMatrix gamma = pure_blocks(3, 2);
  const mscore::DcmmModel model(gamma, 2.0 * Eigen::VectorXd::Ones(3),
                                assortative(2));
  double excess = 0.0;
  const Eigen::MatrixXd omega = model.edge_probabilities(&excess);
  CHECK(excess == doctest::Approx(4.0 * 0.9 - 1.0));
  CHECK(omega.maxCoeff() <= 1.0);
  CHECK(omega.minCoeff() >= 0.0);
}

TEST_CASE("zero connectivity samples the empty graph, unit the complete one") {
  const int n = 8;
  const MembershipMatrix gamma = pure_blocks(n, 2);
  const Eigen::VectorXd theta = Eigen::VectorXd::Ones(n);

  const mscore::DcmmModel empty(gamma, theta, Eigen::MatrixXd::Zero(2, 2));
  CHECK(mscore::generate_dcmm(empty, 1).isZero(0.0));

  const mscore::DcmmModel full(gamma, theta, Eigen::MatrixXd::Ones(2, 2));
  const Eigen::MatrixXd a = mscore::generate_dcmm(full, 1);
  CHECK(a.diagonal().isZero(0.0));
  CHECK((a - a.transpose()).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK(a.sum() == doctest::Approx(static_cast<double>(n * (n - 1))));
}

TEST_CASE("sampled edge counts match the model mean") {
  const int n = 30;
  const MembershipMatrix gamma = pure_blocks(n, 2);
  const mscore::DcmmModel model(gamma, varied_degrees(n, 3), assortative(2));
  const Eigen::MatrixXd omega = model.edge_probabilities();
  double expected = 0.0, var_one = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      expected += omega(i, j);
      var_one += omega(i, j) * (1.0 - omega(i, j));
    }
  const int seeds = 200;
  double total = 0.0;
  for (int s = 0; s < seeds; ++s)
    total += mscore::generate_dcmm(model, 1000 + s).sum() / 2.0;
  const double mean = total / seeds;
  const double se = std::sqrt(var_one / seeds);
  CHECK(std::abs(mean - expected) < 4.0 * se);
}

TEST_CASE("graph sampling is deterministic in the seed") {
  const MembershipMatrix gamma = pure_blocks(20, 2);
  const mscore::DcmmModel model(gamma, varied_degrees(20, 5), assortative(2));
  CHECK(mscore::generate_dcmm(model, 42) == mscore::generate_dcmm(model, 42));
  CHECK(mscore::generate_dcmm(model, 42) != mscore::generate_dcmm(model, 43));
}

TEST_CASE("score ratios validate their inputs") {
  Eigen::MatrixXd rect(3, 4);
  rect.setZero();
  CHECK_THROWS_AS(mscore::score_ratios(rect, 2), ConfigError);
  Eigen::MatrixXd asym = Eigen::MatrixXd::Zero(3, 3);
  asym(0, 1) = 1.0;
  CHECK_THROWS_AS(mscore::score_ratios(asym, 2), ConfigError);
  const Eigen::MatrixXd a = Eigen::MatrixXd::Zero(3, 3);
  CHECK_THROWS_AS(mscore::score_ratios(a, 0), ConfigError);
  CHECK_THROWS_AS(mscore::score_ratios(a, 4), ConfigError);
}

TEST_CASE("ratios are clamped to the threshold and default H is log N") {
  const MembershipMatrix gamma = pure_blocks(24, 2);
  const mscore::DcmmModel model(gamma, varied_degrees(24, 7), assortative(2));
  const Eigen::MatrixXd a = mscore::generate_dcmm(model, 9);

  const mscore::ScoreRatios def = mscore::score_ratios(a, 2);
  CHECK(def.threshold == doctest::Approx(std::log(24.0)));
  CHECK(def.ratios.cwiseAbs().maxCoeff() <= def.threshold + 1e-12);

  const double h = 0.05;  // absurdly tight so the clamp engages
  const mscore::ScoreRatios tight = mscore::score_ratios(a, 2, h);
  CHECK(tight.ratios.cwiseAbs().maxCoeff() <= h + 1e-15);
  CHECK((tight.ratios.cwiseAbs().array() == h).any());
}

TEST_CASE("a flat spectrum is flagged as degenerate") {
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(4, 4);
  CHECK(mscore::score_ratios(eye, 2).degenerate_spectrum);
  const MembershipMatrix gamma = pure_blocks(24, 2);
  const mscore::DcmmModel model(gamma, varied_degrees(24, 7), assortative(2));
  const Eigen::MatrixXd a = mscore::generate_dcmm(model, 9);
  CHECK_FALSE(mscore::score_ratios(a, 2).degenerate_spectrum);
}

TEST_CASE("K = 1 ratios have no columns") {
  const Eigen::MatrixXd a = Eigen::MatrixXd::Zero(5, 5);
  const mscore::ScoreRatios r = mscore::score_ratios(a, 1);
  CHECK(r.ratios.rows() == 5);
  CHECK(r.ratios.cols() == 0);
  CHECK(r.eigenvalues.size() == 1);
}

TEST_CASE("vertex hunting recovers exactly clustered points") {
  // 30 points at three exact locations.
  Eigen::MatrixXd pts(30, 2);
  Eigen::Matrix<double, 3, 2> locs;
  locs << -1.0, 0.0, 0.5, 2.0, 1.5, -1.0;
  for (int i = 0; i < 30; ++i) pts.row(i) = locs.row(i % 3);
  const Eigen::MatrixXd centers = mscore::vertex_hunting(pts, 3, 11);
  // Lexicographic order: (-1,0), (0.5,2), (1.5,-1).
  CHECK((centers.row(0) - locs.row(0)).lpNorm<Eigen::Infinity>() < 1e-12);
  CHECK((centers.row(1) - locs.row(1)).lpNorm<Eigen::Infinity>() < 1e-12);
  CHECK((centers.row(2) - locs.row(2)).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("vertex hunting is invariant to row order") {
  rng::Counter gen(17, rng::kInit);
  Eigen::MatrixXd pts(40, 2);
  for (int i = 0; i < 40; ++i) {
    const int c = i % 2;
    pts(i, 0) = (c == 0 ? -2.0 : 2.0) + 0.1 * gen.uniform(-1.0, 1.0);
    pts(i, 1) = (c == 0 ? 1.0 : -1.0) + 0.1 * gen.uniform(-1.0, 1.0);
  }
  Eigen::MatrixXd reversed = pts.colwise().reverse();
  const Eigen::MatrixXd a = mscore::vertex_hunting(pts, 2, 23);
  const Eigen::MatrixXd b = mscore::vertex_hunting(reversed, 2, 23);
  CHECK((a - b).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("vertex hunting demands K distinct rows") {
  Eigen::MatrixXd pts = Eigen::MatrixXd::Zero(10, 1);
  pts.bottomRows(5).setConstant(1.0);
  CHECK_THROWS_AS(mscore::vertex_hunting(pts, 3, 1), ConfigError);
  CHECK_THROWS_AS(mscore::vertex_hunting(pts, 1, 1), ConfigError);
}

TEST_CASE("noiseless pure model is recovered exactly") {
  for (int k : {2, 3}) {
    const int n = 20 * k;
    const MembershipMatrix gamma = pure_blocks(n, k);
    const mscore::DcmmModel model(gamma, varied_degrees(n, 13 + k),
                                  assortative(k));
    // Feed the expected adjacency: exactly rank K, no sampling noise.
    const Eigen::MatrixXd omega = model.edge_probabilities();
    const MembershipMatrix est = mscore::estimate(omega, k, 0.0, 31);
    const mscore::Alignment al = mscore::align(est, gamma);
    CHECK(al.mean_l1_error < 1e-8);
  }
}

TEST_CASE("mixed rows are reconstructed exactly from the true vertices") {
  // Pure nodes pin the simplex corners; the remaining rows mix them.
  const int k = 3, n = 36;
  Eigen::MatrixXd g(n, k);
  rng::Counter gen(41, rng::kDirichlet);
  for (int i = 0; i < n; ++i) {
    if (i < k) {
      g.row(i).setZero();
      g(i, i) = 1.0;
    } else {
      double sum = 0.0;
      for (int c = 0; c < k; ++c) {
        g(i, c) = 0.05 + gen.next_unit();
        sum += g(i, c);
      }
      g.row(i) /= sum;
    }
  }
  const MembershipMatrix gamma{g};
  const mscore::DcmmModel model(gamma, varied_degrees(n, 43), assortative(k));
  const Eigen::MatrixXd omega = model.edge_probabilities();
  const mscore::ScoreRatios ratios = mscore::score_ratios(omega, k);

  // True vertices are the pure nodes' ratio rows, in lexicographic order.
  std::vector<int> order{0, 1, 2};
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    for (int c = 0; c < k - 1; ++c) {
      if (ratios.ratios(a, c) < ratios.ratios(b, c)) return true;
      if (ratios.ratios(a, c) > ratios.ratios(b, c)) return false;
    }
    return false;
  });
  Eigen::MatrixXd vertices(k, k - 1);
  for (int c = 0; c < k; ++c) vertices.row(c) = ratios.ratios.row(order[c]);

  mscore::ReconstructionFlags flags;
  const MembershipMatrix est =
      mscore::reconstruct_membership(ratios, vertices, &flags);
  CHECK(flags.clamped_scale_entries == 0);
  CHECK(flags.fallback_rows.empty());
  const mscore::Alignment al = mscore::align(est, gamma);
  CHECK(al.mean_l1_error < 1e-8);
}

TEST_CASE("estimate with one community returns the all-ones column") {
  const Eigen::MatrixXd a = Eigen::MatrixXd::Zero(7, 7);
  const MembershipMatrix est = mscore::estimate(a, 1, 0.0, 3);
  CHECK(est.num_communities() == 1);
  CHECK(est.matrix() == Eigen::MatrixXd::Ones(7, 1));
}

TEST_CASE("estimate is deterministic in the seed") {
  const MembershipMatrix gamma = pure_blocks(40, 2);
  const mscore::DcmmModel model(gamma, varied_degrees(40, 47), assortative(2));
  const Eigen::MatrixXd a = mscore::generate_dcmm(model, 51);
  CHECK(mscore::estimate(a, 2, 0.0, 9).matrix() ==
        mscore::estimate(a, 2, 0.0, 9).matrix());
}

TEST_CASE("sampled graphs recover the pure membership approximately") {
  const int n = 400, k = 2;
  const MembershipMatrix gamma = pure_blocks(n, k);
  const mscore::DcmmModel model(gamma, varied_degrees(n, 53), assortative(k));
  const Eigen::MatrixXd a = mscore::generate_dcmm(model, 57);
  const MembershipMatrix est = mscore::estimate(a, k, 0.0, 59);
  const mscore::Alignment al = mscore::align(est, gamma);
  CHECK(al.mean_l1_error < 0.1);
}

TEST_CASE("alignment finds the identity and a planted swap") {
  const MembershipMatrix gamma =
      MembershipMatrix::dirichlet(12, Eigen::Vector3d(1.0, 1.0, 1.0), 61);
  const mscore::Alignment id = mscore::align(gamma, gamma);
  CHECK(id.mean_l1_error == doctest::Approx(0.0));
  CHECK(id.permutation == std::vector<int>{0, 1, 2});
  CHECK_FALSE(id.greedy);

  Eigen::MatrixXd swapped = gamma.matrix();
  swapped.col(0).swap(swapped.col(2));
  const mscore::Alignment al = mscore::align(MembershipMatrix(swapped), gamma);
  CHECK(al.mean_l1_error == doctest::Approx(0.0));
  CHECK(al.permutation == std::vector<int>{2, 1, 0});
}

TEST_CASE("alignment rejects shape mismatches") {
  const MembershipMatrix a = pure_blocks(6, 2);
  const MembershipMatrix b = pure_blocks(6, 3);
  const MembershipMatrix c = pure_blocks(8, 2);
  CHECK_THROWS_AS(mscore::align(a, b), ConfigError);
  CHECK_THROWS_AS(mscore::align(a, c), ConfigError);
}

TEST_CASE("greedy alignment above eight communities is a valid permutation") {
  const int k = 9, n = 27;
  const MembershipMatrix gamma = pure_blocks(n, k);
  Eigen::MatrixXd rotated(n, k);
  for (int c = 0; c < k; ++c)
    rotated.col(c) = gamma.matrix().col((c + 4) % k);
  const mscore::Alignment al = mscore::align(MembershipMatrix(rotated), gamma);
  CHECK(al.greedy);
  std::vector<int> sorted = al.permutation;
  std::sort(sorted.begin(), sorted.end());
  std::vector<int> expected(k);
  std::iota(expected.begin(), expected.end(), 0);
  CHECK(sorted == expected);
  // The planted rotation is a perfect match the greedy pass can find.
  CHECK(al.mean_l1_error == doctest::Approx(0.0));
  CHECK(al.permutation[0] == 4);
}
