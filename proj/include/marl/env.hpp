#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "marl/rng.hpp"

namespace marl {

// Polynomially decaying two-time-scale stepsizes: critic t^{-alpha},
// actor t^{-beta} with beta > alpha so the actor moves on the slow scale.
struct StepSchedule {
  double critic_exponent;
  double actor_exponent;

  StepSchedule(double alpha = 0.65, double beta = 0.85);
  double critic_rate(long t) const;
  double actor_rate(long t) const;
};

// Little-endian mixed-radix joint action code, agent 0 least significant.
class JointActionSpace {
 public:
  JointActionSpace(int num_agents, int actions_per_agent);
  std::uint64_t count() const { return count_; }
  std::uint64_t encode(const std::vector<int>& actions) const;
  void decode(std::uint64_t code, std::vector<int>& actions) const;
  int agent_action(std::uint64_t code, int agent) const;
  // Replace agent's action inside an encoded joint action.
  std::uint64_t with_agent_action(std::uint64_t code, int agent,
                                  int action) const;

 private:
  int num_agents_;
  int actions_per_agent_;
  std::uint64_t count_;
  std::vector<std::uint64_t> radix_;  // actions^agent
};

enum class KernelMode { kAuto, kExplicitTable, kLazySeeded };

class MultiAgentMDP {
 public:
  static constexpr double kErgodicityFloor = 1e-5;
  static constexpr std::uint64_t kExplicitCap = 50000;  // |S|*|A|^N entries

  static MultiAgentMDP random(int num_agents, int num_states,
                              int actions_per_agent, std::uint64_t seed,
                              KernelMode mode = KernelMode::kAuto,
                              double reward_noise_halfwidth = 0.5);

  // Random kernel, caller-supplied reward tables (one |S| x |A|^N matrix
  // per agent). Explicit mode only.
  static MultiAgentMDP with_rewards(int num_agents, int num_states,
                                    int actions_per_agent, std::uint64_t seed,
                                    std::vector<Eigen::MatrixXd> rewards,
                                    double reward_noise_halfwidth);

  // Caller-supplied kernel rows (index s * |A| + a) and reward tables. The
  // ergodicity floor is applied to each supplied row. Explicit mode only.
  static MultiAgentMDP with_kernel(int num_agents, int num_states,
                                   int actions_per_agent, std::uint64_t seed,
                                   std::vector<Eigen::VectorXd> kernel_rows,
                                   std::vector<Eigen::MatrixXd> rewards,
                                   double reward_noise_halfwidth);

  int num_agents() const { return num_agents_; }
  int num_states() const { return num_states_; }
  int actions_per_agent() const { return actions_per_agent_; }
  const JointActionSpace& actions() const { return actions_; }
  std::uint64_t num_joint_actions() const { return actions_.count(); }
  bool explicit_mode() const { return explicit_mode_; }
  std::uint64_t seed() const { return seed_; }
  double reward_noise_halfwidth() const { return noise_halfwidth_; }

  // Row of P(.|s, a); sums to 1 and every entry >= ergodicity floor.
  Eigen::VectorXd transition_row(int s, std::uint64_t a) const;
  double reward(int agent, int s, std::uint64_t a) const;
  Eigen::VectorXd mean_agent_rewards(int s, std::uint64_t a) const;

  int sample_next_state(int s, std::uint64_t a, rng::Counter& gen) const;
  Eigen::VectorXd sample_rewards(int s, std::uint64_t a,
                                 rng::Counter& gen) const;

 private:
  MultiAgentMDP(int num_agents, int num_states, int actions_per_agent,
                std::uint64_t seed, bool explicit_mode, double noise);

  int num_agents_;
  int num_states_;
  int actions_per_agent_;
  std::uint64_t seed_;
  bool explicit_mode_;
  double noise_halfwidth_;
  JointActionSpace actions_;
  // Explicit caches; empty in lazy mode.
  std::vector<Eigen::VectorXd> transition_;      // [s * |A| + a] -> row over S
  std::vector<Eigen::MatrixXd> reward_tables_;   // per agent, S x |A|

  Eigen::VectorXd lazy_transition_row(int s, std::uint64_t a) const;
};

// Floors entries at `floor`, renormalizing the remaining mass so the row
// still sums to one and no entry drops below the floor.
void apply_ergodicity_floor(Eigen::VectorXd& row, double floor);

// Joint-action features phi(s, a) in [0,1]^dim for the Q critic (and, with
// a different stream, the reward model f(s, a)).
class FeatureMap {
 public:
  static FeatureMap random(const MultiAgentMDP& mdp, int dim,
                           rng::Stream stream = rng::kFeatures);
  // Materialized map over an explicit caller-supplied |S||A| x dim table.
  static FeatureMap from_matrix(const MultiAgentMDP& mdp,
                                Eigen::MatrixXd table);

  int dim() const { return dim_; }
  bool materialized() const { return materialized_; }
  Eigen::VectorXd operator()(int s, std::uint64_t a) const;
  // Materialized mode only: |S||A| x dim table for rank diagnostics.
  const Eigen::MatrixXd& matrix() const;
  bool full_column_rank() const;
  // True when no u solves Phi u = 1 (checked via rank of [Phi | 1]).
  bool excludes_constant_direction() const;

 private:
  FeatureMap(const MultiAgentMDP* mdp, int dim, rng::Stream stream);
  const MultiAgentMDP* mdp_;
  int dim_;
  rng::Stream stream_;
  bool materialized_;
  Eigen::MatrixXd table_;
};

// State features phi_V(s) in [0,1]^dim for the V critic.
class StateFeatureMap {
 public:
  static StateFeatureMap random(const MultiAgentMDP& mdp, int dim);
  int dim() const { return dim_; }
  Eigen::VectorXd operator()(int s) const { return table_.row(s).transpose(); }
  const Eigen::MatrixXd& matrix() const { return table_; }

 private:
  int dim_ = 0;
  Eigen::MatrixXd table_;
};

// Boltzmann policy over an agent's own actions.
class AgentPolicy {
 public:
  AgentPolicy(Eigen::MatrixXd features, Eigen::VectorXd theta,
              Eigen::VectorXd box_lo, Eigen::VectorXd box_hi, int num_actions);

  // Feature rows q_{s,b} ~ U[0,1]^{m}; theta = 0; box [-10, 10]^m.
  static AgentPolicy random(const MultiAgentMDP& mdp, int agent, int dim,
                            double box_halfwidth = 10.0);

  int num_actions() const { return num_actions_; }
  int dim() const { return static_cast<int>(theta_.size()); }
  const Eigen::VectorXd& theta() const { return theta_; }
  void set_theta(const Eigen::VectorXd& theta);

  Eigen::VectorXd probs(int s) const;          // softmax over own actions
  double prob(int s, int action) const;
  Eigen::VectorXd score(int s, int action) const;  // grad log pi
  Eigen::VectorXd feature(int s, int action) const;
  int sample_action(int s, rng::Counter& gen) const;

  // theta += step, then coordinatewise projection onto the box.
  void project_step(const Eigen::VectorXd& step);

 private:
  Eigen::MatrixXd features_;  // (S * |A_i|) x m, row index s * |A_i| + b
  Eigen::VectorXd theta_;
  Eigen::VectorXd lo_, hi_;
  int num_actions_;
};

struct Transition {
  int state = 0;
  std::uint64_t joint_action = 0;
  int next_state = 0;
  Eigen::VectorXd agent_rewards;
};

std::uint64_t sample_joint_action(const MultiAgentMDP& mdp,
                                  const std::vector<AgentPolicy>& policies,
                                  int s, rng::Counter& gen);

// One environment step: each agent samples its action independently, the
// state advances, and every agent receives a noisy local reward.
Transition step(const MultiAgentMDP& mdp,
                const std::vector<AgentPolicy>& policies, int s,
                rng::Counter& gen);

}  // namespace marl
