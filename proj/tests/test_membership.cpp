#include <doctest.h>

#include <Eigen/Dense>

#include "marl/errors.hpp"
#include "marl/membership.hpp"

using namespace marl;

namespace {

MembershipMatrix random_full_rank(int n, int k, std::uint64_t seed) {
  Eigen::VectorXd alpha = Eigen::VectorXd::Ones(k);
  return MembershipMatrix::dirichlet(n, alpha, seed);
}

}  // namespace

TEST_CASE("rows must be a valid matrix") {
  CHECK_THROWS_AS(MembershipMatrix(Eigen::MatrixXd()), ConfigError);
}

TEST_CASE("identity membership aggregates unchanged") {
  const MembershipMatrix gamma = MembershipMatrix::identity(4);
  Eigen::VectorXd values(4);
  values << 1.0, -2.0, 0.5, 7.0;
  CHECK((gamma.aggregate(values) - values).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("half-half row takes the midpoint") {
  Eigen::MatrixXd g(1, 2);
  g << 0.5, 0.5;
  const MembershipMatrix gamma(g);
  Eigen::VectorXd values(2);
  values << 1.0, 3.0;
  CHECK(gamma.aggregate(values)[0] == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("aggregate equals a direct matrix product") {
  const MembershipMatrix gamma = random_full_rank(9, 3, 21);
  Eigen::VectorXd values(3);
  values << -1.2, 0.4, 2.7;
  Eigen::VectorXd direct = Eigen::VectorXd::Zero(9);
  for (int i = 0; i < 9; ++i)
    for (int k = 0; k < 3; ++k)
      direct[i] += gamma.matrix()(i, k) * values[k];
  CHECK((gamma.aggregate(values) - direct).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("aggregate stays inside the convex bounds") {
  const MembershipMatrix gamma = random_full_rank(20, 4, 5);
  Eigen::VectorXd values(4);
  values << -3.0, 1.0, 4.0, 0.25;
  const Eigen::VectorXd agents = gamma.aggregate(values);
  for (int i = 0; i < 20; ++i) {
    CHECK(agents[i] >= values.minCoeff() - 1e-12);
    CHECK(agents[i] <= values.maxCoeff() + 1e-12);
  }
}

TEST_CASE("identity inversion is the identity") {
  const MembershipMatrix gamma = MembershipMatrix::identity(3);
  Eigen::VectorXd v(3);
  v << 4.0, 5.0, 6.0;
  CHECK((gamma.invert(v) - v).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("inversion recovers planted community values") {
  const MembershipMatrix gamma = random_full_rank(12, 3, 99);
  Eigen::VectorXd c_true(3);
  c_true << 2.0, -1.0, 0.5;
  const Eigen::VectorXd agents = gamma.aggregate(c_true);
  CHECK((gamma.invert(agents) - c_true).lpNorm<Eigen::Infinity>() < 1e-10);
}

TEST_CASE("rank-deficient inversion demands a ridge") {
  Eigen::MatrixXd g(4, 2);  // duplicated community columns
  g << 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5;
  const MembershipMatrix gamma(g);
  Eigen::VectorXd v(4);
  v << 1.0, 2.0, 3.0, 4.0;
  CHECK_THROWS_AS(gamma.invert(v), RankError);

  // Ridge output minimizes ||G c - v||^2 + eps ||c||^2; compare against a
  // dense normal-equation solve.
  const double eps = 1e-6;
  const Eigen::VectorXd ridge = gamma.invert(v, eps);
  CHECK(ridge.allFinite());
  const Eigen::MatrixXd lhs =
      g.transpose() * g + eps * Eigen::MatrixXd::Identity(2, 2);
  const Eigen::VectorXd dense = lhs.ldlt().solve(g.transpose() * v);
  // The duplicated columns make the ridge system ill-conditioned (~1e6), so
  // the two solvers agree to roughly 1e-10 * cond; 1e-8 is the honest bar.
  CHECK((ridge - dense).lpNorm<Eigen::Infinity>() < 1e-8);
}

TEST_CASE("ridge solutions approach the exact solution as eps shrinks") {
  const MembershipMatrix gamma = random_full_rank(15, 4, 17);
  Eigen::VectorXd c_true(4);
  c_true << 1.0, -2.0, 0.3, 4.0;
  const Eigen::VectorXd agents = gamma.aggregate(c_true);
  const Eigen::VectorXd exact = gamma.invert(agents);
  double prev = 1e100;
  for (double eps : {1e-2, 1e-4, 1e-6}) {
    const double err =
        (gamma.invert(agents, eps) - exact).lpNorm<Eigen::Infinity>();
    CHECK(err < prev);
    prev = err;
  }
}

TEST_CASE("matrix overloads agree with columnwise vector calls") {
  const MembershipMatrix gamma = random_full_rank(10, 3, 123);
  Eigen::MatrixXd community(3, 5);
  for (int k = 0; k < 3; ++k)
    for (int j = 0; j < 5; ++j) community(k, j) = 0.37 * k - 0.11 * j;
  const Eigen::MatrixXd agents = gamma.aggregate(community);
  const Eigen::MatrixXd back = gamma.invert(agents);
  CHECK((back - community).lpNorm<Eigen::Infinity>() < 1e-9);
}

TEST_CASE("round trip aggregate then invert is the identity on communities") {
  const MembershipMatrix gamma = random_full_rank(25, 5, 2024);
  Eigen::VectorXd c(5);
  c << 0.1, 0.2, -0.3, 0.4, 5.0;
  CHECK((gamma.invert(gamma.aggregate(c)) - c).lpNorm<Eigen::Infinity>() <
        1e-10);
}

TEST_CASE("validate reports clean diagnostics on Dirichlet draws") {
  const MembershipMatrix gamma = random_full_rank(30, 4, 8);
  const MembershipDiagnostics d = gamma.validate();
  CHECK(d.ok());
  CHECK(d.row_sums_ok);
  CHECK(d.nonnegative);
  CHECK(d.full_rank);
  CHECK(d.max_row_sum_error < 1e-12);
}

TEST_CASE("validate flags a short row sum") {
  Eigen::MatrixXd g(2, 2);
  g << 0.4, 0.5, 0.5, 0.5;
  const MembershipDiagnostics d = MembershipMatrix(g).validate();
  CHECK_FALSE(d.row_sums_ok);
  CHECK(d.max_row_sum_error == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("validate flags duplicated columns as rank deficiency") {
  Eigen::MatrixXd g(4, 4);
  g.setConstant(0.25);
  g.col(1) = g.col(0);
  const MembershipDiagnostics d = MembershipMatrix(g).validate();
  CHECK_FALSE(d.full_rank);
  CHECK(d.smallest_singular_value_sq < MembershipMatrix::kRankTolerance);
}

TEST_CASE("pure rows are detected") {
  Eigen::MatrixXd g(3, 2);
  g << 1.0, 0.0, 0.0, 1.0, 0.25, 0.75;
  const MembershipMatrix gamma(g);
  CHECK(gamma.is_pure(0));
  CHECK(gamma.is_pure(1));
  CHECK_FALSE(gamma.is_pure(2));
  CHECK(gamma.validate().pure_count == 2);
}

TEST_CASE("dirichlet rows are stochastic and deterministic in the seed") {
  Eigen::VectorXd alpha(4);
  alpha << 1.0, 1.0, 1.0, 1.0;
  const MembershipMatrix a = MembershipMatrix::dirichlet(50, alpha, 77);
  const MembershipMatrix b = MembershipMatrix::dirichlet(50, alpha, 77);
  CHECK(a.matrix() == b.matrix());
  for (int i = 0; i < 50; ++i) {
    CHECK(a.row(i).minCoeff() >= 0.0);
    CHECK(a.row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
  }
  const MembershipMatrix c = MembershipMatrix::dirichlet(50, alpha, 78);
  CHECK(a.matrix() != c.matrix());
}

TEST_CASE("json serialization round-trips") {
  const MembershipMatrix gamma = random_full_rank(6, 3, 31);
  const MembershipMatrix back = MembershipMatrix::from_json(gamma.to_json());
  CHECK(back.num_agents() == 6);
  CHECK(back.num_communities() == 3);
  CHECK((back.matrix() - gamma.matrix()).lpNorm<Eigen::Infinity>() == 0.0);
}
