#include "marl/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "marl/errors.hpp"

namespace marl {

bool ConsensusGraph::connected() const {
  const int n = size();
  if (n == 0) return false;
  std::vector<char> seen(n, 0);
  std::vector<int> stack{0};
  seen[0] = 1;
  int reached = 1;
  while (!stack.empty()) {
    const int u = stack.back();
    stack.pop_back();
    for (int v : neighbors[u]) {
      if (!seen[v]) {
        seen[v] = 1;
        ++reached;
        stack.push_back(v);
      }
    }
  }
  return reached == n;
}

ConsensusGraph ConsensusGraph::complete(int n) {
  if (n < 1) throw ConfigError("graph needs at least one node");
  ConsensusGraph g;
  g.neighbors.resize(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (j != i) g.neighbors[i].push_back(j);
  return g;
}

ConsensusGraph ConsensusGraph::ring_with_chords(int n, std::uint64_t seed) {
  if (n < 1) throw ConfigError("graph needs at least one node");
  ConsensusGraph g;
  g.neighbors.resize(n);
  std::vector<std::vector<char>> adj(n, std::vector<char>(n, 0));
  const auto add_edge = [&](int i, int j) {
    if (i == j || adj[i][j]) return false;
    adj[i][j] = adj[j][i] = 1;
    g.neighbors[i].push_back(j);
    g.neighbors[j].push_back(i);
    return true;
  };
  for (int i = 0; i < n; ++i) add_edge(i, (i + 1) % n);

  rng::Counter gen(seed, rng::kGraph);
  int chords = n / 4;
  // Bounded retries: dense small rings can run out of non-edges.
  for (long tries = 0; chords > 0 && tries < 64L * n; ++tries) {
    const int i = static_cast<int>(gen.uniform_index(n));
    const int j = static_cast<int>(gen.uniform_index(n));
    if (add_edge(i, j)) --chords;
  }
  for (auto& list : g.neighbors) std::sort(list.begin(), list.end());
  return g;
}

Eigen::MatrixXd consensus_weights(const ConsensusGraph& graph) {
  if (!graph.connected()) throw ConfigError("communication graph disconnected");
  const int n = graph.size();
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    const auto deg = [&](int u) {
      return static_cast<double>(graph.neighbors[u].size());
    };
    double off = 0.0;
    for (int j : graph.neighbors[i]) {
      c(i, j) = 1.0 / (1.0 + std::max(deg(i), deg(j)));
      off += c(i, j);
    }
    c(i, i) = 1.0 - off;
  }
  return c;
}

BaselineResult train_baseline(const MultiAgentMDP& mdp,
                              const ConsensusGraph& graph,
                              const TrainConfig& config) {
  const int n = mdp.num_agents();
  if (graph.size() != n) throw ConfigError("graph size != agent count");
  if (config.iterations < 0) throw ConfigError("iterations must be >= 0");
  if (config.log_stride < 1) throw ConfigError("log stride must be >= 1");
  const Eigen::MatrixXd c = consensus_weights(graph);

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

  Eigen::MatrixXd omega = Eigen::MatrixXd::Zero(config.m_omega, n);
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(n);

  TrainingTrace trace;
  trace.columns = {"t", "J_hat"};
  for (int i = 0; i < n; ++i)
    trace.columns.push_back("mu_" + std::to_string(i + 1));
  for (int i = 0; i < n; ++i)
    for (int d = 0; d < config.m_omega; ++d)
      trace.columns.push_back("omega_" + std::to_string(i + 1) + "_" +
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
    row.push_back(window.empty() ? 0.0
                                 : window_sum / static_cast<double>(
                                                    window.size()));
    for (int i = 0; i < n; ++i) row.push_back(mu[i]);
    for (int i = 0; i < n; ++i)
      for (int d = 0; d < config.m_omega; ++d) row.push_back(omega(d, i));
    for (int i = 0; i < n; ++i)
      for (int d = 0; d < config.m_policy; ++d)
        row.push_back(policies[i].theta()[d]);
    trace.rows.push_back(std::move(row));
  };

  rng::Counter traj(config.seed, rng::kTrajectory);
  int s = 0;
  std::uint64_t a = sample_joint_action(mdp, policies, s, traj);
  log_row(0);

  for (long t = 1; t <= config.iterations; ++t) {
    const double eta_w = config.schedule.critic_rate(t);
    const double eta_th = config.schedule.actor_rate(t);

    const int s_next = mdp.sample_next_state(s, a, traj);
    const Eigen::VectorXd rewards = mdp.sample_rewards(s, a, traj);
    const std::uint64_t a_next =
        sample_joint_action(mdp, policies, s_next, traj);

    const Eigen::VectorXd phi_t = phi(s, a);
    const Eigen::VectorXd phi_next = phi(s_next, a_next);
    // Same evaluation order as the community critic so an N = 1 run is
    // bit-identical to single-community training.
    const Eigen::VectorXd q_t = omega.transpose() * phi_t;
    const Eigen::VectorXd q_next = omega.transpose() * phi_next;
    const Eigen::VectorXd e = rewards - mu + q_next - q_t;
    if (!e.allFinite())
      throw NumericError("non-finite TD error at step " + std::to_string(t));

    // Local update first, then mixing through C (columns are agents, so the
    // post-mix column i is Sum_j C(i,j) * column j, i.e. omega * C').
    mu = c * ((1.0 - eta_w) * mu + eta_w * rewards);
    omega = (omega + eta_w * phi_t * e.transpose()) * c.transpose();

    if (!config.freeze_actor) {
      for (int i = 0; i < n; ++i) {
        const Eigen::VectorXd omega_i = omega.col(i);
        const double q_sa = phi_t.dot(omega_i);
        const Eigen::VectorXd probs = policies[i].probs(s);
        double counterfactual = 0.0;
        for (int b = 0; b < mdp.actions_per_agent(); ++b) {
          const std::uint64_t code = mdp.actions().with_agent_action(a, i, b);
          counterfactual += probs[b] * phi(s, code).dot(omega_i);
        }
        const int ai = mdp.actions().agent_action(a, i);
        const Eigen::VectorXd psi = policies[i].score(s, ai);
        actor_step(policies[i], q_sa - counterfactual, psi, eta_th);
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
    if (t % config.log_stride == 0) log_row(t);
  }

  return BaselineResult{std::move(trace), std::move(omega), std::move(mu),
                        std::move(policies)};
}

}  // namespace marl
