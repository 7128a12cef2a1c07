#include "marl/env.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "marl/errors.hpp"

namespace marl {

StepSchedule::StepSchedule(double alpha, double beta)
    : critic_exponent(alpha), actor_exponent(beta) {
  if (!(alpha > 0.5 && alpha <= 1.0))
    throw ConfigError("critic exponent must lie in (0.5, 1]");
  if (!(beta > alpha && beta <= 1.0))
    throw ConfigError("actor exponent must lie in (alpha, 1]");
}

double StepSchedule::critic_rate(long t) const {
  return std::pow(static_cast<double>(t < 1 ? 1 : t), -critic_exponent);
}

double StepSchedule::actor_rate(long t) const {
  return std::pow(static_cast<double>(t < 1 ? 1 : t), -actor_exponent);
}

JointActionSpace::JointActionSpace(int num_agents, int actions_per_agent)
    : num_agents_(num_agents), actions_per_agent_(actions_per_agent) {
  if (num_agents < 1 || actions_per_agent < 1)
    throw ConfigError("joint action space needs positive sizes");
  radix_.resize(num_agents);
  std::uint64_t r = 1;
  for (int i = 0; i < num_agents; ++i) {
    radix_[i] = r;
    if (i + 1 < num_agents) {
      if (r > UINT64_MAX / static_cast<std::uint64_t>(actions_per_agent))
        throw SizeError("joint action count overflows 64 bits");
      r *= static_cast<std::uint64_t>(actions_per_agent);
    }
  }
  if (radix_.back() >
      UINT64_MAX / static_cast<std::uint64_t>(actions_per_agent))
    throw SizeError("joint action count overflows 64 bits");
  count_ = radix_.back() * static_cast<std::uint64_t>(actions_per_agent);
}

std::uint64_t JointActionSpace::encode(const std::vector<int>& actions) const {
  std::uint64_t code = 0;
  for (int i = 0; i < num_agents_; ++i)
    code += static_cast<std::uint64_t>(actions[i]) * radix_[i];
  return code;
}

void JointActionSpace::decode(std::uint64_t code,
                              std::vector<int>& actions) const {
  actions.resize(num_agents_);
  for (int i = 0; i < num_agents_; ++i) {
    actions[i] = static_cast<int>(code % actions_per_agent_);
    code /= actions_per_agent_;
  }
}

int JointActionSpace::agent_action(std::uint64_t code, int agent) const {
  return static_cast<int>((code / radix_[agent]) % actions_per_agent_);
}

std::uint64_t JointActionSpace::with_agent_action(std::uint64_t code,
                                                  int agent,
                                                  int action) const {
  const int old = agent_action(code, agent);
  return code + (static_cast<std::uint64_t>(action) -
                 static_cast<std::uint64_t>(old)) *
                    radix_[agent];
}

void apply_ergodicity_floor(Eigen::VectorXd& row, double floor) {
  const double sum = row.sum();
  if (sum <= 0.0) throw NumericError("transition row has no mass");
  row /= sum;
  // Waterfill: pin entries below the floor, rescale the free mass. One or
  // two passes suffice at these sizes.
  for (int pass = 0; pass < 64; ++pass) {
    double pinned = 0.0;
    double free_mass = 0.0;
    int pinned_count = 0;
    for (int i = 0; i < row.size(); ++i) {
      if (row[i] <= floor) {
        pinned += floor;
        ++pinned_count;
      } else {
        free_mass += row[i];
      }
    }
    if (pinned_count == 0) return;
    if (pinned_count == row.size()) {
      row.setConstant(1.0 / row.size());
      return;
    }
    const double scale = (1.0 - pinned) / free_mass;
    bool stable = true;
    for (int i = 0; i < row.size(); ++i) {
      if (row[i] <= floor) {
        row[i] = floor;
      } else {
        row[i] *= scale;
        if (row[i] < floor) stable = false;
      }
    }
    if (stable) return;
  }
}

MultiAgentMDP::MultiAgentMDP(int num_agents, int num_states,
                             int actions_per_agent, std::uint64_t seed,
                             bool explicit_mode, double noise)
    : num_agents_(num_agents),
      num_states_(num_states),
      actions_per_agent_(actions_per_agent),
      seed_(seed),
      explicit_mode_(explicit_mode),
      noise_halfwidth_(noise),
      actions_(num_agents, actions_per_agent) {
  if (num_agents < 1 || num_states < 1 || actions_per_agent < 1)
    throw ConfigError("MDP sizes must be positive");
  if (noise < 0.0) throw ConfigError("reward noise halfwidth must be >= 0");
}

Eigen::VectorXd MultiAgentMDP::lazy_transition_row(int s,
                                                   std::uint64_t a) const {
  Eigen::VectorXd row(num_states_);
  for (int sp = 0; sp < num_states_; ++sp)
    row[sp] = rng::keyed_unit(seed_, rng::kKernel, static_cast<std::uint64_t>(s),
                              a, static_cast<std::uint64_t>(sp));
  apply_ergodicity_floor(row, kErgodicityFloor);
  return row;
}

MultiAgentMDP MultiAgentMDP::random(int num_agents, int num_states,
                                    int actions_per_agent, std::uint64_t seed,
                                    KernelMode mode, double noise) {
  MultiAgentMDP mdp(num_agents, num_states, actions_per_agent, seed,
                    /*explicit_mode=*/false, noise);
  const std::uint64_t ja = mdp.actions_.count();
  const bool fits =
      ja <= kExplicitCap &&
      static_cast<std::uint64_t>(num_states) <= kExplicitCap / ja;
  if (mode == KernelMode::kExplicitTable && !fits)
    throw SizeError(
        "explicit transition/reward tables exceed the enumeration cap; "
        "use lazy-seeded mode");
  const bool want_explicit =
      mode == KernelMode::kExplicitTable ||
      (mode == KernelMode::kAuto && fits);
  if (!want_explicit) return mdp;

  mdp.explicit_mode_ = true;
  mdp.transition_.resize(static_cast<std::size_t>(num_states) * ja);
  for (int s = 0; s < num_states; ++s)
    for (std::uint64_t a = 0; a < ja; ++a)
      mdp.transition_[static_cast<std::size_t>(s) * ja + a] =
          mdp.lazy_transition_row(s, a);
  mdp.reward_tables_.resize(num_agents);
  for (int i = 0; i < num_agents; ++i) {
    Eigen::MatrixXd table(num_states, static_cast<int>(ja));
    for (int s = 0; s < num_states; ++s)
      for (std::uint64_t a = 0; a < ja; ++a)
        table(s, static_cast<int>(a)) =
            4.0 * rng::keyed_unit(seed, rng::kRewards,
                                  static_cast<std::uint64_t>(i),
                                  static_cast<std::uint64_t>(s), a);
    mdp.reward_tables_[i] = std::move(table);
  }
  return mdp;
}

MultiAgentMDP MultiAgentMDP::with_rewards(int num_agents, int num_states,
                                          int actions_per_agent,
                                          std::uint64_t seed,
                                          std::vector<Eigen::MatrixXd> rewards,
                                          double noise) {
  MultiAgentMDP mdp =
      random(num_agents, num_states, actions_per_agent, seed,
             KernelMode::kExplicitTable, noise);
  if (static_cast<int>(rewards.size()) != num_agents)
    throw ConfigError("with_rewards: one reward table per agent required");
  for (const auto& r : rewards) {
    if (r.rows() != num_states ||
        static_cast<std::uint64_t>(r.cols()) != mdp.num_joint_actions())
      throw ConfigError("with_rewards: reward table shape mismatch");
    if (!r.allFinite())
      throw NumericError("with_rewards: non-finite reward entry");
  }
  mdp.reward_tables_ = std::move(rewards);
  return mdp;
}

MultiAgentMDP MultiAgentMDP::with_kernel(int num_agents, int num_states,
                                         int actions_per_agent,
                                         std::uint64_t seed,
                                         std::vector<Eigen::VectorXd> kernel_rows,
                                         std::vector<Eigen::MatrixXd> rewards,
                                         double noise) {
  MultiAgentMDP mdp = with_rewards(num_agents, num_states, actions_per_agent,
                                   seed, std::move(rewards), noise);
  if (kernel_rows.size() != mdp.transition_.size())
    throw ConfigError("with_kernel: need one row per (state, joint action)");
  for (auto& row : kernel_rows) {
    if (row.size() != num_states)
      throw ConfigError("with_kernel: kernel row length mismatch");
    if (!row.allFinite() || row.minCoeff() < 0.0)
      throw ConfigError("with_kernel: kernel rows must be nonnegative");
    apply_ergodicity_floor(row, kErgodicityFloor);
  }
  mdp.transition_ = std::move(kernel_rows);
  return mdp;
}

Eigen::VectorXd MultiAgentMDP::transition_row(int s, std::uint64_t a) const {
  if (explicit_mode_)
    return transition_[static_cast<std::size_t>(s) * actions_.count() + a];
  return lazy_transition_row(s, a);
}

double MultiAgentMDP::reward(int agent, int s, std::uint64_t a) const {
  if (explicit_mode_) return reward_tables_[agent](s, static_cast<int>(a));
  return 4.0 * rng::keyed_unit(seed_, rng::kRewards,
                               static_cast<std::uint64_t>(agent),
                               static_cast<std::uint64_t>(s), a);
}

Eigen::VectorXd MultiAgentMDP::mean_agent_rewards(int s,
                                                  std::uint64_t a) const {
  Eigen::VectorXd r(num_agents_);
  for (int i = 0; i < num_agents_; ++i) r[i] = reward(i, s, a);
  return r;
}

int MultiAgentMDP::sample_next_state(int s, std::uint64_t a,
                                     rng::Counter& gen) const {
  return gen.sample_discrete(transition_row(s, a));
}

Eigen::VectorXd MultiAgentMDP::sample_rewards(int s, std::uint64_t a,
                                              rng::Counter& gen) const {
  Eigen::VectorXd r = mean_agent_rewards(s, a);
  if (noise_halfwidth_ > 0.0)
    for (int i = 0; i < num_agents_; ++i)
      r[i] += gen.uniform(-noise_halfwidth_, noise_halfwidth_);
  else
    for (int i = 0; i < num_agents_; ++i) gen.next_unit();  // fixed stream use
  return r;
}

FeatureMap::FeatureMap(const MultiAgentMDP* mdp, int dim, rng::Stream stream)
    : mdp_(mdp), dim_(dim), stream_(stream) {
  const std::uint64_t ja = mdp->num_joint_actions();
  const std::uint64_t entries =
      static_cast<std::uint64_t>(mdp->num_states()) * ja;
  materialized_ = mdp->explicit_mode() &&
                  entries <= MultiAgentMDP::kExplicitCap;
  if (materialized_) {
    table_.resize(static_cast<Eigen::Index>(entries), dim);
    for (int s = 0; s < mdp->num_states(); ++s)
      for (std::uint64_t a = 0; a < ja; ++a)
        for (int d = 0; d < dim; ++d)
          table_(static_cast<Eigen::Index>(s) * ja + a, d) =
              rng::keyed_unit(mdp->seed(), stream,
                              static_cast<std::uint64_t>(s), a,
                              static_cast<std::uint64_t>(d));
  }
}

FeatureMap FeatureMap::random(const MultiAgentMDP& mdp, int dim,
                              rng::Stream stream) {
  if (dim < 1) throw ConfigError("feature dimension must be positive");
  return FeatureMap(&mdp, dim, stream);
}

FeatureMap FeatureMap::from_matrix(const MultiAgentMDP& mdp,
                                   Eigen::MatrixXd table) {
  if (!mdp.explicit_mode())
    throw ConfigError("explicit tables required for from_matrix features");
  const auto rows = static_cast<Eigen::Index>(
      static_cast<std::uint64_t>(mdp.num_states()) * mdp.num_joint_actions());
  if (table.rows() != rows || table.cols() < 1)
    throw ConfigError("feature table shape mismatch");
  FeatureMap phi(&mdp, static_cast<int>(table.cols()), rng::kFeatures);
  phi.materialized_ = true;
  phi.table_ = std::move(table);
  return phi;
}

Eigen::VectorXd FeatureMap::operator()(int s, std::uint64_t a) const {
  if (materialized_)
    return table_
        .row(static_cast<Eigen::Index>(s) * mdp_->num_joint_actions() + a)
        .transpose();
  Eigen::VectorXd phi(dim_);
  for (int d = 0; d < dim_; ++d)
    phi[d] = rng::keyed_unit(mdp_->seed(), stream_,
                             static_cast<std::uint64_t>(s), a,
                             static_cast<std::uint64_t>(d));
  return phi;
}

const Eigen::MatrixXd& FeatureMap::matrix() const {
  if (!materialized_)
    throw ConfigError("feature matrix unavailable in lazy-seeded mode");
  return table_;
}

bool FeatureMap::full_column_rank() const {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(matrix());
  return qr.rank() == dim_;
}

bool FeatureMap::excludes_constant_direction() const {
  Eigen::MatrixXd augmented(table_.rows(), dim_ + 1);
  augmented.leftCols(dim_) = matrix();
  augmented.col(dim_).setOnes();
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(augmented);
  return qr.rank() == dim_ + 1;
}

StateFeatureMap StateFeatureMap::random(const MultiAgentMDP& mdp, int dim) {
  if (dim < 1) throw ConfigError("feature dimension must be positive");
  StateFeatureMap m;
  m.dim_ = dim;
  m.table_.resize(mdp.num_states(), dim);
  for (int s = 0; s < mdp.num_states(); ++s)
    for (int d = 0; d < dim; ++d)
      m.table_(s, d) = rng::keyed_unit(mdp.seed(), rng::kStateFeatures,
                                       static_cast<std::uint64_t>(s),
                                       static_cast<std::uint64_t>(d));
  return m;
}

AgentPolicy::AgentPolicy(Eigen::MatrixXd features, Eigen::VectorXd theta,
                         Eigen::VectorXd box_lo, Eigen::VectorXd box_hi,
                         int num_actions)
    : features_(std::move(features)),
      theta_(std::move(theta)),
      lo_(std::move(box_lo)),
      hi_(std::move(box_hi)),
      num_actions_(num_actions) {
  if (features_.rows() % num_actions_ != 0)
    throw ConfigError("policy feature table rows must be S * |A_i|");
  if ((lo_.array() > hi_.array()).any())
    throw ConfigError("policy box has lo > hi");
  set_theta(theta_);
}

AgentPolicy AgentPolicy::random(const MultiAgentMDP& mdp, int agent, int dim,
                                double box_halfwidth) {
  Eigen::MatrixXd q(mdp.num_states() * mdp.actions_per_agent(), dim);
  for (int s = 0; s < mdp.num_states(); ++s)
    for (int b = 0; b < mdp.actions_per_agent(); ++b)
      for (int d = 0; d < dim; ++d)
        q(s * mdp.actions_per_agent() + b, d) = rng::keyed_unit(
            mdp.seed(), rng::kPolicyFeatures,
            static_cast<std::uint64_t>(agent),
            static_cast<std::uint64_t>(s * mdp.actions_per_agent() + b),
            static_cast<std::uint64_t>(d));
  return AgentPolicy(std::move(q), Eigen::VectorXd::Zero(dim),
                     Eigen::VectorXd::Constant(dim, -box_halfwidth),
                     Eigen::VectorXd::Constant(dim, box_halfwidth),
                     mdp.actions_per_agent());
}

void AgentPolicy::set_theta(const Eigen::VectorXd& theta) {
  if (theta.size() != lo_.size())
    throw ConfigError("theta dimension mismatch");
  theta_ = theta.cwiseMax(lo_).cwiseMin(hi_);
}

Eigen::VectorXd AgentPolicy::feature(int s, int action) const {
  return features_.row(s * num_actions_ + action).transpose();
}

Eigen::VectorXd AgentPolicy::probs(int s) const {
  Eigen::VectorXd logits(num_actions_);
  for (int b = 0; b < num_actions_; ++b)
    logits[b] = features_.row(s * num_actions_ + b).dot(theta_);
  const double m = logits.maxCoeff();
  Eigen::VectorXd p = (logits.array() - m).exp();
  return p / p.sum();
}

double AgentPolicy::prob(int s, int action) const { return probs(s)[action]; }

Eigen::VectorXd AgentPolicy::score(int s, int action) const {
  const Eigen::VectorXd p = probs(s);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(theta_.size());
  for (int b = 0; b < num_actions_; ++b)
    mean += p[b] * features_.row(s * num_actions_ + b).transpose();
  return feature(s, action) - mean;
}

int AgentPolicy::sample_action(int s, rng::Counter& gen) const {
  return gen.sample_discrete(probs(s));
}

void AgentPolicy::project_step(const Eigen::VectorXd& step) {
  theta_ = (theta_ + step).cwiseMax(lo_).cwiseMin(hi_);
}

std::uint64_t sample_joint_action(const MultiAgentMDP& mdp,
                                  const std::vector<AgentPolicy>& policies,
                                  int s, rng::Counter& gen) {
  std::vector<int> actions(mdp.num_agents());
  for (int i = 0; i < mdp.num_agents(); ++i)
    actions[i] = policies[i].sample_action(s, gen);
  return mdp.actions().encode(actions);
}

Transition step(const MultiAgentMDP& mdp,
                const std::vector<AgentPolicy>& policies, int s,
                rng::Counter& gen) {
  Transition tr;
  tr.state = s;
  tr.joint_action = sample_joint_action(mdp, policies, s, gen);
  tr.next_state = mdp.sample_next_state(s, tr.joint_action, gen);
  tr.agent_rewards = mdp.sample_rewards(s, tr.joint_action, gen);
  return tr;
}

}  // namespace marl
