#include "marl/ac_q.hpp"

#include <cmath>

#include "marl/errors.hpp"
#include "marl/oracle.hpp"
#include "marl/transfer.hpp"

namespace marl {

CriticStateQ CriticStateQ::zero(int m_omega, int num_communities) {
  CriticStateQ c;
  c.omega = Eigen::MatrixXd::Zero(m_omega, num_communities);
  c.mu = Eigen::VectorXd::Zero(num_communities);
  c.t = 0;
  return c;
}

Eigen::VectorXd td_errors_q(const CriticStateQ& critic,
                            const Eigen::VectorXd& community_rewards,
                            const Eigen::VectorXd& phi_t,
                            const Eigen::VectorXd& phi_next) {
  const Eigen::VectorXd q_t = critic.omega.transpose() * phi_t;
  const Eigen::VectorXd q_next = critic.omega.transpose() * phi_next;
  return community_rewards - critic.mu + q_next - q_t;
}

Eigen::VectorXd critic_step(CriticStateQ& critic, const MembershipMatrix& gamma,
                            const TransitionRecord& record,
                            const FeatureMap& phi, double eta,
                            double membership_epsilon) {
  const Eigen::VectorXd rc =
      gamma.invert(record.agent_rewards, membership_epsilon);
  const Eigen::VectorXd phi_t = phi(record.s, record.a);
  const Eigen::VectorXd phi_next = phi(record.s_next, record.a_next);
  const Eigen::VectorXd e = td_errors_q(critic, rc, phi_t, phi_next);
  if (!e.allFinite())
    throw NumericError("non-finite TD error in Q critic step");
  critic.mu = (1.0 - eta) * critic.mu + eta * rc;
  critic.omega += eta * phi_t * e.transpose();
  ++critic.t;
  return e;
}

double advantage_estimate(const CriticStateQ& critic,
                          const MembershipMatrix& gamma, int agent,
                          const MultiAgentMDP& mdp,
                          const std::vector<AgentPolicy>& policies,
                          const FeatureMap& phi, int s, std::uint64_t a) {
  const Eigen::VectorXd omega_i = critic.omega * gamma.row(agent);
  const double q_sa = phi(s, a).dot(omega_i);
  const Eigen::VectorXd probs = policies[agent].probs(s);
  double counterfactual = 0.0;
  for (int b = 0; b < mdp.actions_per_agent(); ++b) {
    const std::uint64_t code = mdp.actions().with_agent_action(a, agent, b);
    counterfactual += probs[b] * phi(s, code).dot(omega_i);
  }
  return q_sa - counterfactual;
}

void actor_step(AgentPolicy& policy, double advantage,
                const Eigen::VectorXd& score, double eta) {
  policy.project_step(eta * advantage * score);
}

namespace {

void validate_train_config(const MembershipMatrix& gamma,
                           const TrainConfig& config) {
  if (config.iterations < 0) throw ConfigError("iterations must be >= 0");
  if (config.log_stride < 1) throw ConfigError("log stride must be >= 1");
  if (config.m_omega < 1 || config.m_policy < 1)
    throw ConfigError("feature dimensions must be positive");
  if (config.query_budget != 0 &&
      (config.query_budget < 1 ||
       config.query_budget >= gamma.num_communities()))
    throw ConfigError("query budget must satisfy 1 <= M < K");
}

}  // namespace

TrainResult train(const MultiAgentMDP& mdp, const MembershipMatrix& gamma,
                  const TrainConfig& config) {
  validate_train_config(gamma, config);
  const int n = mdp.num_agents();
  const int k = gamma.num_communities();
  if (gamma.num_agents() != n)
    throw ConfigError("membership matrix agent count mismatch");

  const FeatureMap phi = FeatureMap::random(mdp, config.m_omega);
  std::vector<AgentPolicy> policies;
  policies.reserve(n);
  rng::Counter init(config.seed, rng::kInit);
  for (int i = 0; i < n; ++i) {
    AgentPolicy p =
        AgentPolicy::random(mdp, i, config.m_policy, config.box_halfwidth);
    Eigen::VectorXd theta0(config.m_policy);
    for (int d = 0; d < config.m_policy; ++d)
      theta0[d] = init.uniform(-config.theta_init_halfwidth,
                               config.theta_init_halfwidth);
    p.set_theta(theta0);
    policies.push_back(std::move(p));
  }

  CriticStateQ critic = CriticStateQ::zero(config.m_omega, k);
  // With selection forced off (debug), the run takes exactly the ungated
  // path so its trace is bit-identical to plain training.
  const bool active = config.query_budget > 0 && !config.force_full_selection;

  TrainingTrace trace;
  trace.columns = {"t", "J_hat"};
  if (config.log_oracle_j) trace.columns.push_back("J_oracle");
  for (int c = 0; c < k; ++c)
    trace.columns.push_back("mu_" + std::to_string(c + 1));
  for (int c = 0; c < k; ++c)
    for (int d = 0; d < config.m_omega; ++d)
      trace.columns.push_back("omega_" + std::to_string(c + 1) + "_" +
                              std::to_string(d + 1));
  for (int i = 0; i < n; ++i)
    for (int d = 0; d < config.m_policy; ++d)
      trace.columns.push_back("theta_" + std::to_string(i + 1) + "_" +
                              std::to_string(d + 1));
  if (active) trace.columns.push_back("selected_mask");

  std::vector<double> window;  // trailing r-bar values
  double window_sum = 0.0;
  std::size_t window_pos = 0;

  const auto log_row = [&](long t, double selected_mask) {
    std::vector<double> row;
    row.reserve(trace.columns.size());
    row.push_back(static_cast<double>(t));
    row.push_back(window.empty() ? 0.0
                                 : window_sum / static_cast<double>(
                                                    window.size()));
    if (config.log_oracle_j)
      row.push_back(
          oracle::average_return(mdp, policies, gamma).global);
    for (int c = 0; c < k; ++c) row.push_back(critic.mu[c]);
    for (int c = 0; c < k; ++c)
      for (int d = 0; d < config.m_omega; ++d)
        row.push_back(critic.omega(d, c));
    for (int i = 0; i < n; ++i)
      for (int d = 0; d < config.m_policy; ++d)
        row.push_back(policies[i].theta()[d]);
    if (active) row.push_back(selected_mask);
    trace.rows.push_back(std::move(row));
  };

  rng::Counter traj(config.seed, rng::kTrajectory);
  int s = 0;
  std::uint64_t a = sample_joint_action(mdp, policies, s, traj);
  log_row(0, 0.0);

  for (long t = 1; t <= config.iterations; ++t) {
    const double eta_w = config.schedule.critic_rate(t);
    const double eta_th = config.schedule.actor_rate(t);

    const int s_next = mdp.sample_next_state(s, a, traj);
    const Eigen::VectorXd rewards = mdp.sample_rewards(s, a, traj);
    const std::uint64_t a_next =
        sample_joint_action(mdp, policies, s_next, traj);
    const TransitionRecord record{s, a, rewards, s_next, a_next};

    double selected_mask = 0.0;
    const Eigen::VectorXd rc =
        gamma.invert(record.agent_rewards, config.membership_epsilon);
    const Eigen::VectorXd phi_t = phi(record.s, record.a);
    const Eigen::VectorXd phi_next = phi(record.s_next, record.a_next);
    const Eigen::VectorXd e = td_errors_q(critic, rc, phi_t, phi_next);
    if (!e.allFinite())
      throw NumericError("non-finite TD error at step " + std::to_string(t));
    critic.mu = (1.0 - eta_w) * critic.mu + eta_w * rc;
    if (active) {
      const Eigen::MatrixXd grads = phi_t * e.transpose();
      const Eigen::VectorXd scores = uncertainty_scores(gamma, grads);
      const std::vector<int> selected =
          select_communities(scores, config.query_budget);
      for (int c : selected) {
        critic.omega.col(c) += eta_w * e[c] * phi_t;
        selected_mask += std::ldexp(1.0, c);
      }
    } else {
      critic.omega += eta_w * phi_t * e.transpose();
      selected_mask = std::ldexp(1.0, k) - 1.0;
    }
    ++critic.t;

    if (!config.freeze_actor) {
      for (int i = 0; i < n; ++i) {
        const double adv = advantage_estimate(critic, gamma, i, mdp, policies,
                                              phi, record.s, record.a);
        const int ai = mdp.actions().agent_action(record.a, i);
        const Eigen::VectorXd psi = policies[i].score(record.s, ai);
        actor_step(policies[i], adv, psi, eta_th);
      }
    }

    const double rbar = rewards.mean();
    if (static_cast<long>(window.size()) < config.j_hat_window) {
      window.push_back(rbar);
      window_sum += rbar;
    } else {
      window_sum += rbar - window[window_pos];
      window[window_pos] = rbar;
      window_pos = (window_pos + 1) % window.size();
    }

    s = s_next;
    a = a_next;
    if (t % config.log_stride == 0) log_row(t, selected_mask);
  }

  return TrainResult{std::move(trace), std::move(critic),
                     std::move(policies)};
}

}  // namespace marl
