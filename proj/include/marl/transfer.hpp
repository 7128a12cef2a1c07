#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "marl/ac_q.hpp"
#include "marl/env.hpp"
#include "marl/membership.hpp"

namespace marl {

// Pre-trained community critics together with enough provenance to rebuild
// the feature map they were trained against.
struct CommunityLibrary {
  int num_communities = 0;
  int feature_dim = 0;
  std::uint64_t feature_seed = 0;  // seed of the task MDP the critics saw
  Eigen::MatrixXd omega;           // feature_dim x K
  std::string task_id;
  std::string config_hash;

  std::string to_json() const;
  static CommunityLibrary from_json(const std::string& text);
};

CommunityLibrary make_library(const CriticStateQ& critic,
                              std::uint64_t feature_seed,
                              const std::string& task_id,
                              const std::string& config_hash);

// Q^new(s,a) = sum_k gamma_new(k) phi(s,a)' omega^(k).
double transfer_q(const CommunityLibrary& library,
                  const Eigen::VectorXd& gamma_new, const FeatureMap& phi,
                  int s, std::uint64_t a);

struct TransferTaskReport {
  double max_abs_error = 0.0;
  double mean_abs_error = 0.0;
  // Realized per-community shift between the source and target critics,
  // measured over the (s,a) grid rather than assumed.
  Eigen::VectorXd realized_shifts;
  double membership_l1_error = 0.0;
};

// Evaluates transferring T1's community critics to task T2 under estimated
// memberships; the reference aggregates T2's own converged critics.
TransferTaskReport transfer_task_eval(const CommunityLibrary& library_t1,
                                      const MultiAgentMDP& mdp_t2,
                                      const MembershipMatrix& gamma_true_t2,
                                      const MembershipMatrix& gamma_hat_t2,
                                      const std::vector<AgentPolicy>& policies,
                                      const FeatureMap& phi);

// U^(k) = (sum_i gamma_i(k)) * ||g^(k)||_2 with g^(k) the latest critic
// gradient e^(k) * phi_t (column k of `gradients`).
Eigen::VectorXd uncertainty_scores(const MembershipMatrix& gamma,
                                   const Eigen::MatrixXd& gradients);

// The M largest scores; ties broken toward the lowest index. For additive
// scores this equals the subset argmax.
std::vector<int> select_communities(const Eigen::VectorXd& scores, int budget);

// Actively gated community Q-critic training (budget M per step).
TrainResult train_active(const MultiAgentMDP& mdp,
                         const MembershipMatrix& gamma, TrainConfig config);

}  // namespace marl
