#include "marl/oracle.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "marl/errors.hpp"

namespace marl::oracle {

namespace {

Eigen::Index pair_index(const MultiAgentMDP& mdp, int s, std::uint64_t a) {
  return static_cast<Eigen::Index>(s) *
             static_cast<Eigen::Index>(mdp.num_joint_actions()) +
         static_cast<Eigen::Index>(a);
}

}  // namespace

void require_desk_scale(const MultiAgentMDP& mdp) {
  const std::uint64_t entries =
      static_cast<std::uint64_t>(mdp.num_states()) * mdp.num_joint_actions();
  if (!mdp.explicit_mode() || entries > MultiAgentMDP::kExplicitCap)
    throw SizeError("oracle requires a desk-scale explicit-table MDP");
}

Eigen::MatrixXd policy_table(const MultiAgentMDP& mdp,
                             const std::vector<AgentPolicy>& policies) {
  require_desk_scale(mdp);
  const int S = mdp.num_states();
  const auto JA = static_cast<Eigen::Index>(mdp.num_joint_actions());
  Eigen::MatrixXd pi(S, JA);
  for (int s = 0; s < S; ++s) {
    // Product over agents of each agent's own-action probabilities.
    std::vector<Eigen::VectorXd> probs;
    probs.reserve(policies.size());
    for (const auto& p : policies) probs.push_back(p.probs(s));
    for (Eigen::Index a = 0; a < JA; ++a) {
      double v = 1.0;
      for (int i = 0; i < mdp.num_agents(); ++i)
        v *= probs[i][mdp.actions().agent_action(
            static_cast<std::uint64_t>(a), i)];
      pi(s, a) = v;
    }
  }
  return pi;
}

Eigen::MatrixXd state_transition(const MultiAgentMDP& mdp,
                                 const Eigen::MatrixXd& pi) {
  const int S = mdp.num_states();
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(S, S);
  for (int s = 0; s < S; ++s)
    for (std::uint64_t a = 0; a < mdp.num_joint_actions(); ++a)
      p.row(s) += pi(s, static_cast<Eigen::Index>(a)) *
                  mdp.transition_row(s, a).transpose();
  return p;
}

Eigen::MatrixXd state_action_transition(const MultiAgentMDP& mdp,
                                        const Eigen::MatrixXd& pi) {
  const int S = mdp.num_states();
  const auto JA = static_cast<Eigen::Index>(mdp.num_joint_actions());
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(S * JA, S * JA);
  for (int s = 0; s < S; ++s)
    for (Eigen::Index a = 0; a < JA; ++a) {
      const Eigen::VectorXd row =
          mdp.transition_row(s, static_cast<std::uint64_t>(a));
      for (int sp = 0; sp < S; ++sp)
        for (Eigen::Index ap = 0; ap < JA; ++ap)
          p(s * JA + a, sp * JA + ap) = row[sp] * pi(sp, ap);
    }
  return p;
}

Eigen::VectorXd stationary_distribution(const MultiAgentMDP& mdp,
                                        const std::vector<AgentPolicy>& pol) {
  const Eigen::MatrixXd pi = policy_table(mdp, pol);
  const Eigen::MatrixXd p = state_transition(mdp, pi);
  const int S = mdp.num_states();
  // Solve d'P = d', sum d = 1: replace one balance equation by the
  // normalization row.
  Eigen::MatrixXd m = p.transpose() - Eigen::MatrixXd::Identity(S, S);
  m.row(S - 1).setOnes();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(S);
  rhs[S - 1] = 1.0;
  Eigen::VectorXd d = Eigen::ColPivHouseholderQR<Eigen::MatrixXd>(m).solve(rhs);
  if ((p.transpose() * d - d).lpNorm<Eigen::Infinity>() > 1e-10)
    throw NumericError("stationary distribution solve failed balance check");
  return d;
}

Eigen::VectorXd mean_reward_vector(const MultiAgentMDP& mdp) {
  require_desk_scale(mdp);
  const int S = mdp.num_states();
  const auto JA = static_cast<Eigen::Index>(mdp.num_joint_actions());
  Eigen::VectorXd r(S * JA);
  for (int s = 0; s < S; ++s)
    for (Eigen::Index a = 0; a < JA; ++a)
      r[s * JA + a] =
          mdp.mean_agent_rewards(s, static_cast<std::uint64_t>(a)).mean();
  return r;
}

Eigen::VectorXd agent_reward_vector(const MultiAgentMDP& mdp, int agent) {
  require_desk_scale(mdp);
  const int S = mdp.num_states();
  const auto JA = static_cast<Eigen::Index>(mdp.num_joint_actions());
  Eigen::VectorXd r(S * JA);
  for (int s = 0; s < S; ++s)
    for (Eigen::Index a = 0; a < JA; ++a)
      r[s * JA + a] = mdp.reward(agent, s, static_cast<std::uint64_t>(a));
  return r;
}

Eigen::MatrixXd community_reward_vectors(const MultiAgentMDP& mdp,
                                         const MembershipMatrix& gamma) {
  const int S = mdp.num_states();
  const auto JA = static_cast<Eigen::Index>(mdp.num_joint_actions());
  Eigen::MatrixXd agent_rewards(mdp.num_agents(), S * JA);
  for (int i = 0; i < mdp.num_agents(); ++i)
    agent_rewards.row(i) = agent_reward_vector(mdp, i).transpose();
  // invert() maps per-(s,a) agent vectors to community vectors.
  return gamma.invert(Eigen::MatrixXd(agent_rewards)).transpose();
}

AverageReturn average_return(const MultiAgentMDP& mdp,
                             const std::vector<AgentPolicy>& policies,
                             const MembershipMatrix& gamma) {
  const Eigen::MatrixXd pi = policy_table(mdp, policies);
  const Eigen::VectorXd d = stationary_distribution(mdp, policies);
  const auto JA = static_cast<Eigen::Index>(mdp.num_joint_actions());
  Eigen::VectorXd occupancy(mdp.num_states() * JA);
  for (int s = 0; s < mdp.num_states(); ++s)
    for (Eigen::Index a = 0; a < JA; ++a)
      occupancy[s * JA + a] = d[s] * pi(s, a);
  AverageReturn out;
  out.global = occupancy.dot(mean_reward_vector(mdp));
  const Eigen::MatrixXd rc = community_reward_vectors(mdp, gamma);
  out.per_community = rc.transpose() * occupancy;
  return out;
}

Eigen::VectorXd relative_q(const MultiAgentMDP& mdp,
                           const std::vector<AgentPolicy>& policies,
                           const Eigen::VectorXd& reward_vector) {
  const Eigen::MatrixXd pi = policy_table(mdp, policies);
  const Eigen::VectorXd d = stationary_distribution(mdp, policies);
  const auto JA = static_cast<Eigen::Index>(mdp.num_joint_actions());
  const Eigen::Index n = mdp.num_states() * JA;
  Eigen::VectorXd occupancy(n);
  for (int s = 0; s < mdp.num_states(); ++s)
    for (Eigen::Index a = 0; a < JA; ++a)
      occupancy[s * JA + a] = d[s] * pi(s, a);
  const double j = occupancy.dot(reward_vector);
  const Eigen::MatrixXd p = state_action_transition(mdp, pi);
  // (I - P) Q = R - J 1; singular along span{1}, solved in least squares and
  // shifted to zero stationary mean.
  Eigen::MatrixXd m = Eigen::MatrixXd::Identity(n, n) - p;
  Eigen::VectorXd b = reward_vector.array() - j;
  Eigen::VectorXd q = Eigen::ColPivHouseholderQR<Eigen::MatrixXd>(m).solve(b);
  if ((m * q - b).lpNorm<Eigen::Infinity>() > 1e-8)
    throw NumericError("relative Q system inconsistent outside span{1}");
  q.array() -= occupancy.dot(q);
  return q;
}

Eigen::VectorXd relative_q(const MultiAgentMDP& mdp,
                           const std::vector<AgentPolicy>& policies) {
  return relative_q(mdp, policies, mean_reward_vector(mdp));
}

Eigen::VectorXd state_values(const MultiAgentMDP& mdp,
                             const Eigen::MatrixXd& pi,
                             const Eigen::VectorXd& q) {
  const auto JA = static_cast<Eigen::Index>(mdp.num_joint_actions());
  Eigen::VectorXd v = Eigen::VectorXd::Zero(mdp.num_states());
  for (int s = 0; s < mdp.num_states(); ++s)
    for (Eigen::Index a = 0; a < JA; ++a) v[s] += pi(s, a) * q[s * JA + a];
  return v;
}

Eigen::VectorXd critic_fixed_point(const MultiAgentMDP& mdp,
                                   const std::vector<AgentPolicy>& policies,
                                   const MembershipMatrix& gamma,
                                   const FeatureMap& phi, int community) {
  const Eigen::MatrixXd pi = policy_table(mdp, policies);
  const Eigen::VectorXd d = stationary_distribution(mdp, policies);
  const auto JA = static_cast<Eigen::Index>(mdp.num_joint_actions());
  const Eigen::Index n = mdp.num_states() * JA;
  Eigen::VectorXd occupancy(n);
  for (int s = 0; s < mdp.num_states(); ++s)
    for (Eigen::Index a = 0; a < JA; ++a)
      occupancy[s * JA + a] = d[s] * pi(s, a);
  const Eigen::MatrixXd rc = community_reward_vectors(mdp, gamma);
  const Eigen::VectorXd rk = rc.col(community);
  const double jk = occupancy.dot(rk);
  const Eigen::MatrixXd p = state_action_transition(mdp, pi);
  const Eigen::MatrixXd& f = phi.matrix();
  const Eigen::MatrixXd df = occupancy.asDiagonal() * f;
  // Phi' D (P - I) Phi w = -Phi' D (R^(k) - J^(k) 1)
  Eigen::MatrixXd lhs = f.transpose() * occupancy.asDiagonal() * (p * f - f);
  Eigen::VectorXd rhs = -df.transpose() * (rk.array() - jk).matrix();
  Eigen::FullPivLU<Eigen::MatrixXd> lu(lhs);
  if (!lu.isInvertible())
    throw NumericError(
        "projected Bellman system singular: feature matrix violates the "
        "rank conditions");
  Eigen::VectorXd w = lu.solve(rhs);
  const Eigen::VectorXd residual =
      df.transpose() *
      ((rk.array() - jk).matrix() + p * (f * w) - f * w);
  if (residual.lpNorm<Eigen::Infinity>() > 1e-10)
    throw NumericError("critic fixed point residual too large");
  return w;
}

Eigen::VectorXd critic_fixed_point_v(const MultiAgentMDP& mdp,
                                     const std::vector<AgentPolicy>& policies,
                                     const MembershipMatrix& gamma,
                                     const StateFeatureMap& phi_v,
                                     int community) {
  const Eigen::MatrixXd pi = policy_table(mdp, policies);
  const Eigen::VectorXd d = stationary_distribution(mdp, policies);
  const Eigen::MatrixXd ps = state_transition(mdp, pi);
  const auto JA = static_cast<Eigen::Index>(mdp.num_joint_actions());
  const Eigen::MatrixXd rc = community_reward_vectors(mdp, gamma);
  // State-level expected community reward and J^(k).
  Eigen::VectorXd rk_state = Eigen::VectorXd::Zero(mdp.num_states());
  for (int s = 0; s < mdp.num_states(); ++s)
    for (Eigen::Index a = 0; a < JA; ++a)
      rk_state[s] += pi(s, a) * rc(s * JA + a, community);
  const double jk = d.dot(rk_state);
  const Eigen::MatrixXd& f = phi_v.matrix();
  const Eigen::MatrixXd df = d.asDiagonal() * f;
  Eigen::MatrixXd lhs = f.transpose() * d.asDiagonal() * (ps * f - f);
  Eigen::VectorXd rhs = -df.transpose() * (rk_state.array() - jk).matrix();
  Eigen::FullPivLU<Eigen::MatrixXd> lu(lhs);
  if (!lu.isInvertible())
    throw NumericError("state-level projected Bellman system singular");
  return lu.solve(rhs);
}

Eigen::VectorXd reward_model_fixed_point(
    const MultiAgentMDP& mdp, const std::vector<AgentPolicy>& policies,
    const MembershipMatrix& gamma, const FeatureMap& reward_features,
    int community) {
  const Eigen::MatrixXd pi = policy_table(mdp, policies);
  const Eigen::VectorXd d = stationary_distribution(mdp, policies);
  const auto JA = static_cast<Eigen::Index>(mdp.num_joint_actions());
  const Eigen::Index n = mdp.num_states() * JA;
  Eigen::VectorXd occupancy(n);
  for (int s = 0; s < mdp.num_states(); ++s)
    for (Eigen::Index a = 0; a < JA; ++a)
      occupancy[s * JA + a] = d[s] * pi(s, a);
  const Eigen::VectorXd rk =
      community_reward_vectors(mdp, gamma).col(community);
  const Eigen::MatrixXd& f = reward_features.matrix();
  const Eigen::MatrixXd df = occupancy.asDiagonal() * f;
  Eigen::MatrixXd lhs = f.transpose() * df;
  Eigen::VectorXd rhs = df.transpose() * rk;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(lhs);
  if (!lu.isInvertible())
    throw NumericError("weighted least-squares system singular");
  return lu.solve(rhs);
}

std::vector<Eigen::VectorXd> policy_gradient(
    const MultiAgentMDP& mdp, const std::vector<AgentPolicy>& policies) {
  const Eigen::MatrixXd pi = policy_table(mdp, policies);
  const Eigen::VectorXd d = stationary_distribution(mdp, policies);
  const Eigen::VectorXd q = relative_q(mdp, policies);
  const Eigen::VectorXd v = state_values(mdp, pi, q);
  const auto JA = static_cast<Eigen::Index>(mdp.num_joint_actions());
  std::vector<Eigen::VectorXd> grads(mdp.num_agents());
  for (int i = 0; i < mdp.num_agents(); ++i)
    grads[i] = Eigen::VectorXd::Zero(policies[i].dim());
  for (int s = 0; s < mdp.num_states(); ++s)
    for (Eigen::Index a = 0; a < JA; ++a) {
      const double weight = d[s] * pi(s, a);
      const double adv = q[s * JA + a] - v[s];
      if (weight == 0.0) continue;
      for (int i = 0; i < mdp.num_agents(); ++i) {
        const int ai = mdp.actions().agent_action(
            static_cast<std::uint64_t>(a), i);
        grads[i] += weight * adv * policies[i].score(s, ai);
      }
    }
  return grads;
}

std::vector<Eigen::VectorXd> policy_gradient_local(
    const MultiAgentMDP& mdp, const std::vector<AgentPolicy>& policies) {
  const Eigen::MatrixXd pi = policy_table(mdp, policies);
  const Eigen::VectorXd d = stationary_distribution(mdp, policies);
  const Eigen::VectorXd q = relative_q(mdp, policies);
  const auto JA = static_cast<Eigen::Index>(mdp.num_joint_actions());
  std::vector<Eigen::VectorXd> grads(mdp.num_agents());
  for (int i = 0; i < mdp.num_agents(); ++i)
    grads[i] = Eigen::VectorXd::Zero(policies[i].dim());
  for (int s = 0; s < mdp.num_states(); ++s)
    for (Eigen::Index a = 0; a < JA; ++a) {
      const double weight = d[s] * pi(s, a);
      if (weight == 0.0) continue;
      for (int i = 0; i < mdp.num_agents(); ++i) {
        // V~^i(s, a^{-i}) marginalizes agent i's own action.
        const Eigen::VectorXd probs = policies[i].probs(s);
        double vtilde = 0.0;
        for (int b = 0; b < mdp.actions_per_agent(); ++b) {
          const std::uint64_t code = mdp.actions().with_agent_action(
              static_cast<std::uint64_t>(a), i, b);
          vtilde += probs[b] * q[static_cast<Eigen::Index>(
              pair_index(mdp, s, code))];
        }
        const double local_adv = q[s * JA + a] - vtilde;
        const int ai = mdp.actions().agent_action(
            static_cast<std::uint64_t>(a), i);
        grads[i] += weight * local_adv * policies[i].score(s, ai);
      }
    }
  return grads;
}

ExactSolution solve(const MultiAgentMDP& mdp,
                    const std::vector<AgentPolicy>& policies,
                    const MembershipMatrix& gamma, const FeatureMap& phi) {
  ExactSolution sol;
  const Eigen::MatrixXd pi = policy_table(mdp, policies);
  sol.stationary = stationary_distribution(mdp, policies);
  const auto JA = static_cast<Eigen::Index>(mdp.num_joint_actions());
  sol.occupancy.resize(mdp.num_states() * JA);
  for (int s = 0; s < mdp.num_states(); ++s)
    for (Eigen::Index a = 0; a < JA; ++a)
      sol.occupancy[s * JA + a] = sol.stationary[s] * pi(s, a);
  const AverageReturn ar = average_return(mdp, policies, gamma);
  sol.average_return = ar.global;
  sol.community_returns = ar.per_community;
  sol.q = relative_q(mdp, policies);
  sol.v = state_values(mdp, pi, sol.q);
  sol.community_critics.resize(phi.dim(), gamma.num_communities());
  for (int k = 0; k < gamma.num_communities(); ++k)
    sol.community_critics.col(k) =
        critic_fixed_point(mdp, policies, gamma, phi, k);
  return sol;
}

}  // namespace marl::oracle
