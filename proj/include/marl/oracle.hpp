#pragma once

#include <Eigen/Core>
#include <vector>

#include "marl/env.hpp"
#include "marl/membership.hpp"

namespace marl::oracle {

// Everything here enumerates the full (s, a) space and is desk-scale only:
// |S| * |A|^N table entries must stay under MultiAgentMDP::kExplicitCap.

struct ExactSolution {
  Eigen::VectorXd stationary;         // d_theta over S
  Eigen::VectorXd occupancy;          // d(s) pi(s,a) over S*|A|
  double average_return = 0.0;        // J(theta)
  Eigen::VectorXd community_returns;  // J^(k)
  Eigen::VectorXd q;                  // relative Q over S*|A|
  Eigen::VectorXd v;                  // over S
  Eigen::MatrixXd community_critics;  // m_Omega x K, column k = omega^(k)
};

// Joint policy table pi_theta(s, a), shape S x |A|.
Eigen::MatrixXd policy_table(const MultiAgentMDP& mdp,
                             const std::vector<AgentPolicy>& policies);

// Induced state chain P^theta(s'|s), shape S x S.
Eigen::MatrixXd state_transition(const MultiAgentMDP& mdp,
                                 const Eigen::MatrixXd& pi);

// State-action chain P^theta(s',a'|s,a) = P(s'|s,a) pi(s',a').
Eigen::MatrixXd state_action_transition(const MultiAgentMDP& mdp,
                                        const Eigen::MatrixXd& pi);

Eigen::VectorXd stationary_distribution(const MultiAgentMDP& mdp,
                                        const std::vector<AgentPolicy>& p);

// Globally averaged rewards R-bar(s,a) over S*|A| (mean across agents).
Eigen::VectorXd mean_reward_vector(const MultiAgentMDP& mdp);
// Agent i's reward vector over S*|A|.
Eigen::VectorXd agent_reward_vector(const MultiAgentMDP& mdp, int agent);
// Community reward vectors R^(k), columns of an (S*|A|) x K matrix,
// obtained by least-squares inversion of the agent-community structure.
Eigen::MatrixXd community_reward_vectors(const MultiAgentMDP& mdp,
                                         const MembershipMatrix& gamma);

struct AverageReturn {
  double global = 0.0;                // J(theta)
  Eigen::VectorXd per_community;      // J^(k)
};
AverageReturn average_return(const MultiAgentMDP& mdp,
                             const std::vector<AgentPolicy>& policies,
                             const MembershipMatrix& gamma);

// Relative Q for an arbitrary reward vector (defaults to R-bar), pinned by
// the zero-stationary-mean normalization sum d(s) pi(s,a) Q(s,a) = 0.
Eigen::VectorXd relative_q(const MultiAgentMDP& mdp,
                           const std::vector<AgentPolicy>& policies,
                           const Eigen::VectorXd& reward_vector);
Eigen::VectorXd relative_q(const MultiAgentMDP& mdp,
                           const std::vector<AgentPolicy>& policies);
Eigen::VectorXd state_values(const MultiAgentMDP& mdp,
                             const Eigen::MatrixXd& pi,
                             const Eigen::VectorXd& q);

// Unique solution of Phi' D (T(Phi w) - Phi w) = 0 for community k.
Eigen::VectorXd critic_fixed_point(const MultiAgentMDP& mdp,
                                   const std::vector<AgentPolicy>& policies,
                                   const MembershipMatrix& gamma,
                                   const FeatureMap& phi, int community);

// State-level analogue for the V critic: solves
// PhiV' D^s (R_V^(k) - J^(k) 1 + P_S PhiV v - PhiV v) = 0.
Eigen::VectorXd critic_fixed_point_v(const MultiAgentMDP& mdp,
                                     const std::vector<AgentPolicy>& policies,
                                     const MembershipMatrix& gamma,
                                     const StateFeatureMap& phi_v,
                                     int community);

// Occupancy-weighted least squares min sum d pi (f'rho - R^(k))^2.
Eigen::VectorXd reward_model_fixed_point(
    const MultiAgentMDP& mdp, const std::vector<AgentPolicy>& policies,
    const MembershipMatrix& gamma, const FeatureMap& reward_features,
    int community);

// Exact per-agent policy gradients, global-advantage form.
std::vector<Eigen::VectorXd> policy_gradient(
    const MultiAgentMDP& mdp, const std::vector<AgentPolicy>& policies);
// Local-advantage form A^i(s,a) = Q(s,a) - V~^i(s, a^{-i}).
std::vector<Eigen::VectorXd> policy_gradient_local(
    const MultiAgentMDP& mdp, const std::vector<AgentPolicy>& policies);

ExactSolution solve(const MultiAgentMDP& mdp,
                    const std::vector<AgentPolicy>& policies,
                    const MembershipMatrix& gamma, const FeatureMap& phi);

void require_desk_scale(const MultiAgentMDP& mdp);

}  // namespace marl::oracle
