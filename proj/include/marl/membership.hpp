#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "marl/rng.hpp"

namespace marl {

struct MembershipDiagnostics {
  double max_row_sum_error = 0.0;
  double min_entry = 0.0;
  double smallest_singular_value_sq = 0.0;  // of G'G
  int pure_count = 0;
  bool row_sums_ok = false;
  bool nonnegative = false;
  bool full_rank = false;
  bool ok() const { return row_sums_ok && nonnegative; }
};

// Row-stochastic agent-community linkage G in R^{N x K}.
class MembershipMatrix {
 public:
  explicit MembershipMatrix(Eigen::MatrixXd gamma);

  // Rows sampled from Dirichlet(alpha), one draw per agent.
  static MembershipMatrix dirichlet(int num_agents,
                                    const Eigen::VectorXd& alpha,
                                    std::uint64_t seed);
  static MembershipMatrix identity(int k);

  int num_agents() const { return static_cast<int>(gamma_.rows()); }
  int num_communities() const { return static_cast<int>(gamma_.cols()); }
  const Eigen::MatrixXd& matrix() const { return gamma_; }
  Eigen::VectorXd row(int i) const { return gamma_.row(i).transpose(); }
  bool is_pure(int i) const;

  // Agent values from community values: G * c. Columns of `community_values`
  // may be any equal-shaped payload (Q estimates, omega, mu, V, R-bar).
  Eigen::VectorXd aggregate(const Eigen::VectorXd& community_values) const;
  Eigen::MatrixXd aggregate(const Eigen::MatrixXd& community_values) const;

  // (Ridge-)least-squares inversion of the agent-community structure.
  // epsilon = 0 requires full column rank and throws RankError otherwise.
  Eigen::VectorXd invert(const Eigen::VectorXd& agent_values,
                         double epsilon = 0.0) const;
  Eigen::MatrixXd invert(const Eigen::MatrixXd& agent_values,
                         double epsilon = 0.0) const;

  MembershipDiagnostics validate() const;

  std::string to_json() const;
  static MembershipMatrix from_json(const std::string& text);

  static constexpr double kDefaultEpsilon = 1e-8;
  static constexpr double kRankTolerance = 1e-10;  // on sigma_min(G'G)

 private:
  Eigen::MatrixXd gamma_;
  Eigen::MatrixXd pinv_;  // (G'G)^{-1} G' via QR, cached when full rank
  bool full_rank_ = false;
};

}  // namespace marl
