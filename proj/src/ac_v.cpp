#include "marl/ac_v.hpp"

#include <cmath>

#include "marl/errors.hpp"

namespace marl {

CriticStateV CriticStateV::zero(int m_v, int m_rho, int num_communities) {
  CriticStateV c;
  c.v = Eigen::MatrixXd::Zero(m_v, num_communities);
  c.mu = Eigen::VectorXd::Zero(num_communities);
  c.rho = Eigen::MatrixXd::Zero(m_rho, num_communities);
  c.t = 0;
  return c;
}

Eigen::VectorXd critic_step_v(CriticStateV& critic,
                              const MembershipMatrix& gamma,
                              const Eigen::VectorXd& agent_rewards,
                              const StateFeatureMap& phi_v, int s, int s_next,
                              double eta, double membership_epsilon) {
  const Eigen::VectorXd rc = gamma.invert(agent_rewards, membership_epsilon);
  const Eigen::VectorXd f_now = phi_v(s);
  const Eigen::VectorXd f_next = phi_v(s_next);
  const Eigen::VectorXd e =
      rc - critic.mu + critic.v.transpose() * (f_next - f_now);
  if (!e.allFinite())
    throw NumericError("non-finite TD error in V critic step");
  critic.mu = (1.0 - eta) * critic.mu + eta * rc;
  critic.v += eta * f_now * e.transpose();
  return e;
}

Eigen::VectorXd reward_model_step(CriticStateV& critic,
                                  const MembershipMatrix& gamma,
                                  const Eigen::VectorXd& agent_rewards,
                                  const FeatureMap& reward_features, int s,
                                  std::uint64_t a, double beta,
                                  double membership_epsilon) {
  const Eigen::VectorXd rc = gamma.invert(agent_rewards, membership_epsilon);
  const Eigen::VectorXd f = reward_features(s, a);
  const Eigen::VectorXd residual = rc - critic.rho.transpose() * f;
  if (!residual.allFinite())
    throw NumericError("non-finite residual in reward model step");
  critic.rho += beta * f * residual.transpose();
  return gamma.aggregate(
      Eigen::VectorXd(critic.rho.transpose() * f));
}

void actor_step_v(AgentPolicy& policy, double r_bar_i, double mu_i,
                  double v_next_i, double v_now_i, const Eigen::VectorXd& score,
                  double eta) {
  const double advantage = r_bar_i - mu_i + v_next_i - v_now_i;
  policy.project_step(eta * advantage * score);
}

TrainResultV train_v(const MultiAgentMDP& mdp, const MembershipMatrix& gamma,
                     const TrainConfigV& config) {
  if (config.iterations < 0) throw ConfigError("iterations must be >= 0");
  if (config.log_stride < 1) throw ConfigError("log stride must be >= 1");
  const int n = mdp.num_agents();
  const int k = gamma.num_communities();
  if (gamma.num_agents() != n)
    throw ConfigError("membership matrix agent count mismatch");

  const StateFeatureMap phi_v = StateFeatureMap::random(mdp, config.m_v);
  const FeatureMap reward_features =
      FeatureMap::random(mdp, config.m_rho, rng::kRewardFeatures);

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

  CriticStateV critic = CriticStateV::zero(config.m_v, config.m_rho, k);

  TrainingTrace trace;
  trace.columns = {"t", "J_hat"};
  for (int c = 0; c < k; ++c)
    trace.columns.push_back("mu_" + std::to_string(c + 1));
  for (int c = 0; c < k; ++c)
    for (int d = 0; d < config.m_v; ++d)
      trace.columns.push_back("v_" + std::to_string(c + 1) + "_" +
                              std::to_string(d + 1));
  for (int c = 0; c < k; ++c)
    for (int d = 0; d < config.m_rho; ++d)
      trace.columns.push_back("rho_" + std::to_string(c + 1) + "_" +
                              std::to_string(d + 1));
  for (int i = 0; i < n; ++i)
    for (int d = 0; d < config.m_policy; ++d)
      trace.columns.push_back("theta_" + std::to_string(i + 1) + "_" +
                              std::to_string(d + 1));

  std::vector<double> window;
  double window_sum = 0.0;
  std::size_t window_pos = 0;

  const auto log_row = [&](long t) {
    std::vector<double> row;
    row.reserve(trace.columns.size());
    row.push_back(static_cast<double>(t));
    row.push_back(window.empty()
                      ? 0.0
                      : window_sum / static_cast<double>(window.size()));
    for (int c = 0; c < k; ++c) row.push_back(critic.mu[c]);
    for (int c = 0; c < k; ++c)
      for (int d = 0; d < config.m_v; ++d) row.push_back(critic.v(d, c));
    for (int c = 0; c < k; ++c)
      for (int d = 0; d < config.m_rho; ++d) row.push_back(critic.rho(d, c));
    for (int i = 0; i < n; ++i)
      for (int d = 0; d < config.m_policy; ++d)
        row.push_back(policies[i].theta()[d]);
    trace.rows.push_back(std::move(row));
  };

  rng::Counter traj(config.seed, rng::kTrajectory);
  int s = 0;
  log_row(0);

  for (long t = 1; t <= config.iterations; ++t) {
    const double eta_v = config.schedule.critic_rate(t);
    const double eta_th = config.schedule.actor_rate(t);
    // beta_rho shares the critic schedule.
    const double beta = eta_v;

    const Transition tr = step(mdp, policies, s, traj);

    // V values at the pre-update parameters feed the actor step.
    const Eigen::VectorXd f_now = phi_v(tr.state);
    const Eigen::VectorXd f_next = phi_v(tr.next_state);
    const Eigen::VectorXd v_now_c = critic.v.transpose() * f_now;
    const Eigen::VectorXd v_next_c = critic.v.transpose() * f_next;

    critic_step_v(critic, gamma, tr.agent_rewards, phi_v, tr.state,
                  tr.next_state, eta_v, config.membership_epsilon);
    const Eigen::VectorXd r_bar_agents =
        reward_model_step(critic, gamma, tr.agent_rewards, reward_features,
                          tr.state, tr.joint_action, beta,
                          config.membership_epsilon);
    ++critic.t;

    if (!config.freeze_actor) {
      const Eigen::VectorXd mu_agents = gamma.aggregate(critic.mu);
      const Eigen::VectorXd v_now_agents = gamma.aggregate(v_now_c);
      const Eigen::VectorXd v_next_agents = gamma.aggregate(v_next_c);
      for (int i = 0; i < n; ++i) {
        const int ai = mdp.actions().agent_action(tr.joint_action, i);
        const Eigen::VectorXd psi = policies[i].score(tr.state, ai);
        actor_step_v(policies[i], r_bar_agents[i], mu_agents[i],
                     v_next_agents[i], v_now_agents[i], psi, eta_th);
      }
    }

    const double rbar = tr.agent_rewards.mean();
    if (static_cast<long>(window.size()) < config.j_hat_window) {
      window.push_back(rbar);
      window_sum += rbar;
    } else {
      window_sum += rbar - window[window_pos];
      window[window_pos] = rbar;
      window_pos = (window_pos + 1) % window.size();
    }

    s = tr.next_state;
    if (t % config.log_stride == 0) log_row(t);
  }

  return TrainResultV{std::move(trace), std::move(critic),
                      std::move(policies)};
}

}  // namespace marl
