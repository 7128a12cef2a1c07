#include "marl/membership.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "marl/errors.hpp"
#include "nlohmann/json.hpp"

namespace marl {

MembershipMatrix::MembershipMatrix(Eigen::MatrixXd gamma)
    : gamma_(std::move(gamma)) {
  if (gamma_.rows() < 1 || gamma_.cols() < 1)
    throw ConfigError("membership matrix must be nonempty");
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(gamma_, Eigen::ComputeThinU |
                                                    Eigen::ComputeThinV);
  const double smin = svd.singularValues().tail(1)(0);
  full_rank_ = gamma_.rows() >= gamma_.cols() &&
               smin * smin > kRankTolerance;
  if (full_rank_) {
    // Column-by-column QR solve; the normal-equation formula is the
    // specification of the result, not the method.
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(gamma_);
    pinv_.resize(gamma_.cols(), gamma_.rows());
    Eigen::MatrixXd eye =
        Eigen::MatrixXd::Identity(gamma_.rows(), gamma_.rows());
    for (int j = 0; j < gamma_.rows(); ++j)
      pinv_.col(j) = qr.solve(eye.col(j));
  }
}

MembershipMatrix MembershipMatrix::dirichlet(int num_agents,
                                             const Eigen::VectorXd& alpha,
                                             std::uint64_t seed) {
  const int k = static_cast<int>(alpha.size());
  Eigen::MatrixXd g(num_agents, k);
  rng::Counter gen(seed, rng::kDirichlet);
  for (int i = 0; i < num_agents; ++i) {
    double sum = 0.0;
    for (int c = 0; c < k; ++c) {
      // Gamma(alpha) via Marsaglia-Tsang would be overkill here: the harness
      // only needs alpha = 1 (exponential) but we keep general alpha by
      // Johnk-free shortcut: for alpha >= 1 use sum of exponentials when
      // integral, else fall back to inverse-power trick for alpha in (0,1].
      double a = alpha[c];
      double draw = 0.0;
      int whole = static_cast<int>(std::floor(a));
      for (int r = 0; r < whole; ++r)
        draw += -std::log(1.0 - gen.next_unit());
      double frac = a - whole;
      if (frac > 0.0) {
        // Gamma(frac) for frac in (0,1) via Ahrens-Dieter GS.
        for (;;) {
          const double u = gen.next_unit();
          const double v = gen.next_unit();
          const double b = (std::exp(1.0) + frac) / std::exp(1.0);
          const double p = b * u;
          if (p <= 1.0) {
            const double x = std::pow(p, 1.0 / frac);
            if (v <= std::exp(-x)) {
              draw += x;
              break;
            }
          } else {
            const double x = -std::log((b - p) / frac);
            if (v <= std::pow(x, frac - 1.0)) {
              draw += x;
              break;
            }
          }
        }
      }
      g(i, c) = draw;
      sum += draw;
    }
    g.row(i) /= sum;
  }
  return MembershipMatrix(std::move(g));
}

MembershipMatrix MembershipMatrix::identity(int k) {
  return MembershipMatrix(Eigen::MatrixXd::Identity(k, k));
}

bool MembershipMatrix::is_pure(int i) const {
  int ones = 0;
  for (int c = 0; c < gamma_.cols(); ++c)
    if (std::abs(gamma_(i, c) - 1.0) <= 1e-12) ++ones;
  return ones == 1;
}

Eigen::VectorXd MembershipMatrix::aggregate(
    const Eigen::VectorXd& community_values) const {
  if (community_values.size() != gamma_.cols())
    throw ConfigError("aggregate: expected K community values");
  return gamma_ * community_values;
}

Eigen::MatrixXd MembershipMatrix::aggregate(
    const Eigen::MatrixXd& community_values) const {
  if (community_values.rows() != gamma_.cols())
    throw ConfigError("aggregate: community payload must have K rows");
  return gamma_ * community_values;
}

Eigen::VectorXd MembershipMatrix::invert(const Eigen::VectorXd& agent_values,
                                         double epsilon) const {
  Eigen::MatrixXd v = agent_values;
  return invert(Eigen::MatrixXd(agent_values), epsilon).col(0);
}

Eigen::MatrixXd MembershipMatrix::invert(const Eigen::MatrixXd& agent_values,
                                         double epsilon) const {
  if (agent_values.rows() != gamma_.rows())
    throw ConfigError("invert: expected N agent values");
  if (gamma_.rows() < gamma_.cols())
    throw RankError("invert: N < K, system underdetermined");
  if (epsilon < 0.0) throw ConfigError("invert: epsilon must be >= 0");
  if (epsilon == 0.0) {
    if (!full_rank_)
      throw RankError(
          "invert: membership matrix is rank deficient; retry with "
          "epsilon > 0");
    return pinv_ * agent_values;
  }
  // Ridge solution via QR of the stacked system [G; sqrt(eps) I].
  const int n = static_cast<int>(gamma_.rows());
  const int k = static_cast<int>(gamma_.cols());
  Eigen::MatrixXd stacked(n + k, k);
  stacked.topRows(n) = gamma_;
  stacked.bottomRows(k) =
      std::sqrt(epsilon) * Eigen::MatrixXd::Identity(k, k);
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n + k, agent_values.cols());
  rhs.topRows(n) = agent_values;
  return Eigen::ColPivHouseholderQR<Eigen::MatrixXd>(stacked).solve(rhs);
}

MembershipDiagnostics MembershipMatrix::validate() const {
  MembershipDiagnostics d;
  d.min_entry = gamma_.minCoeff();
  d.nonnegative = d.min_entry >= 0.0;
  for (int i = 0; i < gamma_.rows(); ++i) {
    d.max_row_sum_error =
        std::max(d.max_row_sum_error, std::abs(gamma_.row(i).sum() - 1.0));
    if (is_pure(i)) ++d.pure_count;
  }
  d.row_sums_ok = d.max_row_sum_error <= 1e-12;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(gamma_);
  const double smin = svd.singularValues().tail(1)(0);
  d.smallest_singular_value_sq = smin * smin;
  d.full_rank = gamma_.rows() >= gamma_.cols() &&
                d.smallest_singular_value_sq > kRankTolerance;
  return d;
}

std::string MembershipMatrix::to_json() const {
  nlohmann::json j;
  j["N"] = num_agents();
  j["K"] = num_communities();
  auto rows = nlohmann::json::array();
  for (int i = 0; i < gamma_.rows(); ++i) {
    auto row = nlohmann::json::array();
    for (int c = 0; c < gamma_.cols(); ++c) row.push_back(gamma_(i, c));
    rows.push_back(row);
  }
  j["rows"] = rows;
  return j.dump();
}

MembershipMatrix MembershipMatrix::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  const int n = j.at("N").get<int>();
  const int k = j.at("K").get<int>();
  const auto& rows = j.at("rows");
  if (static_cast<int>(rows.size()) != n)
    throw ConfigError("membership json: row count mismatch");
  Eigen::MatrixXd g(n, k);
  for (int i = 0; i < n; ++i) {
    if (static_cast<int>(rows[i].size()) != k)
      throw ConfigError("membership json: column count mismatch");
    for (int c = 0; c < k; ++c) g(i, c) = rows[i][c].get<double>();
  }
  return MembershipMatrix(std::move(g));
}

}  // namespace marl
