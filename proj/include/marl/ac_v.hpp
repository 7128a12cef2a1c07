#pragma once

#include <Eigen/Core>
#include <vector>

#include "marl/ac_q.hpp"
#include "marl/env.hpp"
#include "marl/membership.hpp"
#include "marl/trace.hpp"

namespace marl {

// Community-level state-value critic plus reward-model regression state.
struct CriticStateV {
  Eigen::MatrixXd v;    // m_V x K
  Eigen::VectorXd mu;   // K
  Eigen::MatrixXd rho;  // m_rho x K
  long t = 0;

  static CriticStateV zero(int m_v, int m_rho, int num_communities);
};

// Uses only (s_t, r_{a,t+1}, s_{t+1}); the TD error references the
// pre-update mu as in the Q variant.
Eigen::VectorXd critic_step_v(CriticStateV& critic,
                              const MembershipMatrix& gamma,
                              const Eigen::VectorXd& agent_rewards,
                              const StateFeatureMap& phi_v, int s, int s_next,
                              double eta, double membership_epsilon = 0.0);

// rho^(k) += beta (r^(k) - f'rho^(k)) f for the linear reward model; returns
// the per-agent estimates R-bar^i aggregated through the membership.
Eigen::VectorXd reward_model_step(CriticStateV& critic,
                                  const MembershipMatrix& gamma,
                                  const Eigen::VectorXd& agent_rewards,
                                  const FeatureMap& reward_features, int s,
                                  std::uint64_t a, double beta,
                                  double membership_epsilon = 0.0);

// A_t^i = R-bar^i - mu^i + V^i(s_{t+1}) - V^i(s_t), all aggregated via the
// membership, then the projected policy step.
void actor_step_v(AgentPolicy& policy, double r_bar_i, double mu_i,
                  double v_next_i, double v_now_i, const Eigen::VectorXd& score,
                  double eta);

struct TrainConfigV {
  long iterations = 500;
  StepSchedule schedule{0.65, 0.85};
  std::uint64_t seed = 0;
  long log_stride = 1;
  int m_v = 6;
  int m_rho = 8;
  int m_policy = 5;
  bool freeze_actor = false;
  double membership_epsilon = 0.0;
  double theta_init_halfwidth = 0.1;
  double box_halfwidth = 10.0;
  long j_hat_window = 50;
};

struct TrainResultV {
  TrainingTrace trace;
  CriticStateV critic;
  std::vector<AgentPolicy> policies;
};

// State-value variant: mu/v/rho critic updates then the V-form actor.
TrainResultV train_v(const MultiAgentMDP& mdp, const MembershipMatrix& gamma,
                     const TrainConfigV& config);

}  // namespace marl
