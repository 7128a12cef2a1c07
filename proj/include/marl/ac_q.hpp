#pragma once

#include <Eigen/Core>
#include <optional>
#include <vector>

#include "marl/env.hpp"
#include "marl/membership.hpp"
#include "marl/trace.hpp"

namespace marl {

// Community-level Q critic state: one omega column and one running
// average-reward estimate mu per community.
struct CriticStateQ {
  Eigen::MatrixXd omega;  // m_Omega x K
  Eigen::VectorXd mu;     // K
  long t = 0;

  static CriticStateQ zero(int m_omega, int num_communities);
};

// SARSA-style transition record: the next action is the one actually
// executed at t+1, so Q_{t+1} evaluates phi(s_{t+1}, a_{t+1}).
struct TransitionRecord {
  int s = 0;
  std::uint64_t a = 0;
  Eigen::VectorXd agent_rewards;  // r_{a,t+1}
  int s_next = 0;
  std::uint64_t a_next = 0;
};

// TD errors e^(k) = r^(k) - mu_t^(k) + phi(s',a')'w - phi(s,a)'w, using the
// pre-update mu. `community_rewards` is invert(Gamma, r_a).
Eigen::VectorXd td_errors_q(const CriticStateQ& critic,
                            const Eigen::VectorXd& community_rewards,
                            const Eigen::VectorXd& phi_t,
                            const Eigen::VectorXd& phi_next);

// Full critic step: mu and omega updates for every community. Returns the
// TD errors. Throws NumericError on non-finite errors.
Eigen::VectorXd critic_step(CriticStateQ& critic, const MembershipMatrix& gamma,
                            const TransitionRecord& record,
                            const FeatureMap& phi, double eta,
                            double membership_epsilon = 0.0);

// A_t^i from aggregated community parameters; the counterfactual sum ranges
// over agent i's own actions only.
double advantage_estimate(const CriticStateQ& critic,
                          const MembershipMatrix& gamma, int agent,
                          const MultiAgentMDP& mdp,
                          const std::vector<AgentPolicy>& policies,
                          const FeatureMap& phi, int s, std::uint64_t a);

// theta^i <- box-project(theta^i + eta * A * psi).
void actor_step(AgentPolicy& policy, double advantage,
                const Eigen::VectorXd& score, double eta);

struct TrainConfig {
  long iterations = 500;
  StepSchedule schedule{0.65, 0.85};
  std::uint64_t seed = 0;
  long log_stride = 1;
  int m_omega = 10;
  int m_policy = 5;
  bool freeze_actor = false;
  double membership_epsilon = 0.0;
  double theta_init_halfwidth = 0.1;
  double box_halfwidth = 10.0;
  long j_hat_window = 50;
  bool log_oracle_j = false;  // desk-scale only
  // Active-learning gating: budget in [1, K) enables selection; with
  // force_full_selection the selection is bypassed (debug path that must be
  // bit-identical to ungated training).
  int query_budget = 0;
  bool force_full_selection = false;
};

struct TrainResult {
  TrainingTrace trace;
  CriticStateQ critic;
  std::vector<AgentPolicy> policies;
};

// Community Q-critic training loop (and, with query_budget set, its actively
// gated variant: only the selected communities receive omega updates, mu
// updates always apply).
TrainResult train(const MultiAgentMDP& mdp, const MembershipMatrix& gamma,
                  const TrainConfig& config);

}  // namespace marl
