#include "marl/transfer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "marl/errors.hpp"
#include "marl/oracle.hpp"
#include "nlohmann/json.hpp"

namespace marl {

std::string CommunityLibrary::to_json() const {
  nlohmann::json j;
  j["K"] = num_communities;
  j["feature_dim"] = feature_dim;
  j["feature_seed"] = feature_seed;
  j["task_id"] = task_id;
  j["config_hash"] = config_hash;
  auto cols = nlohmann::json::array();
  for (int k = 0; k < num_communities; ++k) {
    auto col = nlohmann::json::array();
    for (int d = 0; d < feature_dim; ++d) col.push_back(omega(d, k));
    cols.push_back(col);
  }
  j["omega"] = cols;
  return j.dump(2);
}

CommunityLibrary CommunityLibrary::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  CommunityLibrary lib;
  lib.num_communities = j.at("K").get<int>();
  lib.feature_dim = j.at("feature_dim").get<int>();
  lib.feature_seed = j.at("feature_seed").get<std::uint64_t>();
  lib.task_id = j.value("task_id", "");
  lib.config_hash = j.value("config_hash", "");
  const auto& cols = j.at("omega");
  if (static_cast<int>(cols.size()) != lib.num_communities)
    throw ConfigError("library json: omega column count mismatch");
  lib.omega.resize(lib.feature_dim, lib.num_communities);
  for (int k = 0; k < lib.num_communities; ++k) {
    if (static_cast<int>(cols[k].size()) != lib.feature_dim)
      throw ConfigError("library json: omega dimension mismatch");
    for (int d = 0; d < lib.feature_dim; ++d)
      lib.omega(d, k) = cols[k][d].get<double>();
  }
  if (!lib.omega.allFinite())
    throw NumericError("library json: non-finite omega entry");
  return lib;
}

CommunityLibrary make_library(const CriticStateQ& critic,
                              std::uint64_t feature_seed,
                              const std::string& task_id,
                              const std::string& config_hash) {
  CommunityLibrary lib;
  lib.num_communities = static_cast<int>(critic.omega.cols());
  lib.feature_dim = static_cast<int>(critic.omega.rows());
  lib.feature_seed = feature_seed;
  lib.omega = critic.omega;
  lib.task_id = task_id;
  lib.config_hash = config_hash;
  return lib;
}

double transfer_q(const CommunityLibrary& library,
                  const Eigen::VectorXd& gamma_new, const FeatureMap& phi,
                  int s, std::uint64_t a) {
  if (gamma_new.size() != library.num_communities)
    throw ConfigError("transfer_q: membership dimension mismatch");
  if (phi.dim() != library.feature_dim)
    throw ConfigError("transfer_q: feature dimension mismatch");
  return gamma_new.dot(library.omega.transpose() * phi(s, a));
}

TransferTaskReport transfer_task_eval(const CommunityLibrary& library_t1,
                                      const MultiAgentMDP& mdp_t2,
                                      const MembershipMatrix& gamma_true_t2,
                                      const MembershipMatrix& gamma_hat_t2,
                                      const std::vector<AgentPolicy>& policies,
                                      const FeatureMap& phi) {
  oracle::require_desk_scale(mdp_t2);
  const int k = library_t1.num_communities;
  if (gamma_true_t2.num_communities() != k ||
      gamma_hat_t2.num_communities() != k)
    throw ConfigError("transfer_task_eval: community count mismatch");
  // Target task's own converged critics are the reference.
  Eigen::MatrixXd omega_t2(library_t1.feature_dim, k);
  for (int c = 0; c < k; ++c)
    omega_t2.col(c) =
        oracle::critic_fixed_point(mdp_t2, policies, gamma_true_t2, phi, c);

  TransferTaskReport report;
  report.realized_shifts = Eigen::VectorXd::Zero(k);
  const int n = gamma_true_t2.num_agents();
  report.membership_l1_error = 0.0;
  for (int i = 0; i < n; ++i)
    report.membership_l1_error = std::max(
        report.membership_l1_error,
        (gamma_hat_t2.row(i) - gamma_true_t2.row(i)).lpNorm<1>());

  double total = 0.0;
  long count = 0;
  for (int s = 0; s < mdp_t2.num_states(); ++s)
    for (std::uint64_t a = 0; a < mdp_t2.num_joint_actions(); ++a) {
      const Eigen::VectorXd p = phi(s, a);
      const Eigen::VectorXd q_t1 = library_t1.omega.transpose() * p;
      const Eigen::VectorXd q_t2 = omega_t2.transpose() * p;
      for (int c = 0; c < k; ++c)
        report.realized_shifts[c] = std::max(report.realized_shifts[c],
                                             std::abs(q_t1[c] - q_t2[c]));
      for (int i = 0; i < n; ++i) {
        const double transferred = gamma_hat_t2.row(i).dot(q_t1);
        const double reference = gamma_true_t2.row(i).dot(q_t2);
        const double err = std::abs(transferred - reference);
        report.max_abs_error = std::max(report.max_abs_error, err);
        total += err;
        ++count;
      }
    }
  report.mean_abs_error = total / static_cast<double>(count);
  return report;
}

Eigen::VectorXd uncertainty_scores(const MembershipMatrix& gamma,
                                   const Eigen::MatrixXd& gradients) {
  if (gradients.cols() != gamma.num_communities())
    throw ConfigError("uncertainty_scores: one gradient column per community");
  const Eigen::VectorXd mass = gamma.matrix().colwise().sum();
  Eigen::VectorXd scores(gamma.num_communities());
  for (int k = 0; k < gamma.num_communities(); ++k)
    scores[k] = mass[k] * gradients.col(k).norm();
  return scores;
}

std::vector<int> select_communities(const Eigen::VectorXd& scores,
                                    int budget) {
  const int k = static_cast<int>(scores.size());
  if (budget < 1 || budget >= k)
    throw ConfigError("select_communities: budget must satisfy 1 <= M < K");
  std::vector<int> idx(k);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  idx.resize(budget);
  std::sort(idx.begin(), idx.end());
  return idx;
}

TrainResult train_active(const MultiAgentMDP& mdp,
                         const MembershipMatrix& gamma, TrainConfig config) {
  if (config.query_budget < 1 && !config.force_full_selection)
    throw ConfigError("train_active requires a query budget");
  return train(mdp, gamma, config);
}

}  // namespace marl
