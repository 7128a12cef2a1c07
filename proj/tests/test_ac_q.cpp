#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <limits>

#include "marl/ac_q.hpp"
#include "marl/env.hpp"
#include "marl/errors.hpp"
#include "marl/membership.hpp"
#include "marl/oracle.hpp"

using namespace marl;

namespace {

std::vector<AgentPolicy> train_initial_policies(const MultiAgentMDP& mdp,
                                                const TrainConfig& cfg) {
  // Mirror of the training loop's policy initialization.
  std::vector<AgentPolicy> policies;
  rng::Counter init(cfg.seed, rng::kInit);
  for (int i = 0; i < mdp.num_agents(); ++i) {
    AgentPolicy p =
        AgentPolicy::random(mdp, i, cfg.m_policy, cfg.box_halfwidth);
    Eigen::VectorXd theta0(cfg.m_policy);
    for (int d = 0; d < cfg.m_policy; ++d)
      theta0[d] =
          init.uniform(-cfg.theta_init_halfwidth, cfg.theta_init_halfwidth);
    p.set_theta(theta0);
    policies.push_back(std::move(p));
  }
  return policies;
}

FeatureMap tabular_complement_features(const MultiAgentMDP& mdp) {
  const auto n =
      static_cast<Eigen::Index>(mdp.num_states() * mdp.num_joint_actions());
  Eigen::MatrixXd seedm(n, n);
  seedm.col(0).setOnes();
  for (Eigen::Index j = 1; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i)
      seedm(i, j) = rng::keyed_unit(9, rng::kFeatures, i, j);
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(seedm);
  const Eigen::MatrixXd qfull =
      qr.householderQ() * Eigen::MatrixXd::Identity(n, n);
  return FeatureMap::from_matrix(mdp, qfull.rightCols(n - 1));
}

}  // namespace

TEST_CASE("zero critic state has the right shapes") {
  const CriticStateQ c = CriticStateQ::zero(7, 3);
  CHECK(c.omega.rows() == 7);
  CHECK(c.omega.cols() == 3);
  CHECK(c.omega.isZero(0.0));
  CHECK(c.mu.size() == 3);
  CHECK(c.mu.isZero(0.0));
  CHECK(c.t == 0);
}

TEST_CASE("TD errors follow the defining formula") {
  CriticStateQ c = CriticStateQ::zero(3, 2);
  c.omega << 1.0, -1.0, 0.5, 2.0, 0.0, 0.25;
  c.mu << 0.3, -0.7;
  Eigen::VectorXd rc(2), phi_t(3), phi_next(3);
  rc << 1.0, 2.0;
  phi_t << 0.2, 0.4, 0.6;
  phi_next << 0.9, 0.1, 0.3;
  const Eigen::VectorXd e = td_errors_q(c, rc, phi_t, phi_next);
  for (int k = 0; k < 2; ++k) {
    const double expected = rc[k] - c.mu[k] + phi_next.dot(c.omega.col(k)) -
                            phi_t.dot(c.omega.col(k));
    CHECK(e[k] == doctest::Approx(expected).epsilon(1e-14));
  }
}

TEST_CASE("critic step with zero stepsize only advances the clock") {
  const MultiAgentMDP mdp = MultiAgentMDP::random(2, 3, 2, 7);
  const MembershipMatrix gamma = MembershipMatrix::identity(2);
  const FeatureMap phi = FeatureMap::random(mdp, 4);
  CriticStateQ c = CriticStateQ::zero(4, 2);
  c.omega.setConstant(0.5);
  c.mu.setConstant(0.25);
  const CriticStateQ before = c;

  rng::Counter gen(1, rng::kTrajectory);
  TransitionRecord rec{0, 1, mdp.sample_rewards(0, 1, gen), 2, 0};
  critic_step(c, gamma, rec, phi, 0.0);
  CHECK(c.omega == before.omega);
  CHECK(c.mu == before.mu);
  CHECK(c.t == 1);
}

TEST_CASE("critic step uses the pre-update mu and matches hand arithmetic") {
  const MultiAgentMDP mdp = MultiAgentMDP::random(2, 3, 2, 11);
  const MembershipMatrix gamma = MembershipMatrix::identity(2);
  const FeatureMap phi = FeatureMap::random(mdp, 3);
  CriticStateQ c = CriticStateQ::zero(3, 2);
  c.mu << 0.5, -0.5;
  c.omega.setConstant(0.1);
  const CriticStateQ before = c;

  Eigen::VectorXd rewards(2);
  rewards << 2.0, 1.0;
  const TransitionRecord rec{1, 2, rewards, 0, 3};
  const double eta = 0.2;
  const Eigen::VectorXd e = critic_step(c, gamma, rec, phi, eta);

  const Eigen::VectorXd rc = gamma.invert(rewards);
  const Eigen::VectorXd expected_e =
      td_errors_q(before, rc, phi(1, 2), phi(0, 3));
  CHECK((e - expected_e).lpNorm<Eigen::Infinity>() < 1e-14);
  CHECK((c.mu - ((1 - eta) * before.mu + eta * rc))
            .lpNorm<Eigen::Infinity>() < 1e-14);
  const Eigen::MatrixXd expected_omega =
      before.omega + eta * phi(1, 2) * e.transpose();
  CHECK((c.omega - expected_omega).lpNorm<Eigen::Infinity>() < 1e-14);
}

TEST_CASE("critic step rejects non-finite rewards") {
  const MultiAgentMDP mdp = MultiAgentMDP::random(2, 3, 2, 13);
  const MembershipMatrix gamma = MembershipMatrix::identity(2);
  const FeatureMap phi = FeatureMap::random(mdp, 3);
  CriticStateQ c = CriticStateQ::zero(3, 2);
  Eigen::VectorXd rewards(2);
  rewards << std::numeric_limits<double>::infinity(), 0.0;
  const TransitionRecord rec{0, 0, rewards, 1, 1};
  CHECK_THROWS_AS(critic_step(c, gamma, rec, phi, 0.1), NumericError);
}

TEST_CASE("advantage vanishes for a zero critic and for single-action agents") {
  const MultiAgentMDP mdp = MultiAgentMDP::random(2, 3, 2, 17);
  const MembershipMatrix gamma = MembershipMatrix::identity(2);
  const FeatureMap phi = FeatureMap::random(mdp, 4);
  auto policies = train_initial_policies(mdp, TrainConfig{.seed = 5});
  const CriticStateQ zero = CriticStateQ::zero(4, 2);
  CHECK(advantage_estimate(zero, gamma, 0, mdp, policies, phi, 1, 2) == 0.0);

  const MultiAgentMDP single = MultiAgentMDP::random(2, 3, 1, 19);
  const FeatureMap phi1 = FeatureMap::random(single, 4);
  auto policies1 = train_initial_policies(single, TrainConfig{.seed = 6});
  CriticStateQ c = CriticStateQ::zero(4, 2);
  c.omega.setRandom();
  CHECK(advantage_estimate(c, gamma, 0, single, policies1, phi1, 2, 0) ==
        doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("advantage matches direct counterfactual enumeration") {
  const MultiAgentMDP mdp = MultiAgentMDP::random(3, 3, 2, 23);
  const MembershipMatrix gamma =
      MembershipMatrix::dirichlet(3, Eigen::Vector2d(1.0, 1.0), 4);
  const FeatureMap phi = FeatureMap::random(mdp, 5);
  auto policies = train_initial_policies(mdp, TrainConfig{.seed = 8});
  CriticStateQ c = CriticStateQ::zero(5, 2);
  rng::Counter gen(3, rng::kInit);
  for (int d = 0; d < 5; ++d)
    for (int k = 0; k < 2; ++k) c.omega(d, k) = gen.uniform(-1.0, 1.0);

  for (int i = 0; i < 3; ++i) {
    const int s = 1;
    const std::uint64_t a = 5;
    const Eigen::VectorXd omega_i = c.omega * gamma.row(i);
    const Eigen::VectorXd probs = policies[i].probs(s);
    double expected = phi(s, a).dot(omega_i);
    for (int b = 0; b < 2; ++b)
      expected -=
          probs[b] *
          phi(s, mdp.actions().with_agent_action(a, i, b)).dot(omega_i);
    CHECK(advantage_estimate(c, gamma, i, mdp, policies, phi, s, a) ==
          doctest::Approx(expected).epsilon(1e-13));
  }
}

TEST_CASE("actor step is a projected gradient nudge") {
  const MultiAgentMDP mdp = MultiAgentMDP::random(1, 3, 2, 29);
  auto policies = train_initial_policies(mdp, TrainConfig{.seed = 9});
  const Eigen::VectorXd theta0 = policies[0].theta();
  Eigen::VectorXd score = Eigen::VectorXd::Ones(theta0.size());

  actor_step(policies[0], 0.0, score, 0.5);
  CHECK(policies[0].theta() == theta0);

  actor_step(policies[0], 1.0, score, 0.25);
  CHECK((policies[0].theta() - (theta0.array() + 0.25).matrix())
            .lpNorm<Eigen::Infinity>() < 1e-14);

  actor_step(policies[0], 1e9, score, 1.0);
  CHECK(policies[0].theta().maxCoeff() == doctest::Approx(10.0));
  actor_step(policies[0], -1e9, score, 1.0);
  CHECK(policies[0].theta().minCoeff() == doctest::Approx(-10.0));
}

TEST_CASE("zero-iteration training logs only the initial row") {
  const MultiAgentMDP mdp = MultiAgentMDP::random(2, 3, 2, 31);
  const MembershipMatrix gamma = MembershipMatrix::identity(2);
  TrainConfig cfg;
  cfg.iterations = 0;
  cfg.seed = 12;
  const TrainResult res = train(mdp, gamma, cfg);
  CHECK(res.trace.rows.size() == 1);
  CHECK(res.trace.rows[0][0] == 0.0);
  CHECK(res.critic.mu.isZero(0.0));
  CHECK(res.critic.omega.isZero(0.0));
  for (const auto& p : res.policies)
    CHECK(p.theta().lpNorm<Eigen::Infinity>() <= cfg.theta_init_halfwidth);
}

TEST_CASE("training is deterministic in the seed") {
  const MultiAgentMDP mdp = MultiAgentMDP::random(3, 4, 2, 37);
  const MembershipMatrix gamma =
      MembershipMatrix::dirichlet(3, Eigen::Vector2d(1.0, 1.0), 2);
  TrainConfig cfg;
  cfg.iterations = 200;
  cfg.seed = 77;
  const TrainResult a = train(mdp, gamma, cfg);
  const TrainResult b = train(mdp, gamma, cfg);
  CHECK(a.trace == b.trace);

  cfg.seed = 78;
  const TrainResult c = train(mdp, gamma, cfg);
  CHECK(a.trace.rows != c.trace.rows);
}

TEST_CASE("logged thetas never leave the projection box") {
  const MultiAgentMDP mdp = MultiAgentMDP::random(2, 3, 2, 41);
  const MembershipMatrix gamma = MembershipMatrix::identity(2);
  TrainConfig cfg;
  cfg.iterations = 300;
  cfg.seed = 3;
  cfg.box_halfwidth = 0.2;  // tight box so the clamp actually engages
  const TrainResult res = train(mdp, gamma, cfg);
  const int first_theta = res.trace.column_index("theta_1_1");
  REQUIRE(first_theta >= 0);
  bool clamped = false;
  for (const auto& row : res.trace.rows)
    for (std::size_t j = first_theta; j < row.size(); ++j) {
      CHECK(std::abs(row[j]) <= cfg.box_halfwidth + 1e-12);
      if (std::abs(std::abs(row[j]) - cfg.box_halfwidth) < 1e-12)
        clamped = true;
    }
  CHECK(clamped);
}

TEST_CASE("relabeling communities permutes critic columns and nothing else") {
  const int n = 3;
  const MultiAgentMDP mdp = MultiAgentMDP::random(n, 3, 2, 43);
  const MembershipMatrix gamma =
      MembershipMatrix::dirichlet(n, Eigen::Vector2d(1.0, 1.0), 10);
  Eigen::MatrixXd swapped = gamma.matrix();
  swapped.col(0).swap(swapped.col(1));

  TrainConfig cfg;
  cfg.iterations = 150;
  cfg.seed = 55;
  cfg.m_omega = 4;
  const TrainResult a = train(mdp, gamma, cfg);
  const TrainResult b = train(mdp, MembershipMatrix(swapped), cfg);

  CHECK((a.critic.mu[0] - b.critic.mu[1]) == doctest::Approx(0.0));
  CHECK((a.critic.mu[1] - b.critic.mu[0]) == doctest::Approx(0.0));
  CHECK((a.critic.omega.col(0) - b.critic.omega.col(1))
            .lpNorm<Eigen::Infinity>() < 1e-12);
  CHECK((a.critic.omega.col(1) - b.critic.omega.col(0))
            .lpNorm<Eigen::Infinity>() < 1e-12);
  for (int i = 0; i < n; ++i)
    CHECK((a.policies[i].theta() - b.policies[i].theta())
              .lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("forcing full selection reproduces the ungated run bit for bit") {
  const MultiAgentMDP mdp = MultiAgentMDP::random(3, 3, 2, 47);
  const MembershipMatrix gamma =
      MembershipMatrix::dirichlet(3, Eigen::Vector3d(1.0, 1.0, 1.0), 14);
  TrainConfig plain;
  plain.iterations = 150;
  plain.seed = 21;
  TrainConfig forced = plain;
  forced.query_budget = 1;
  forced.force_full_selection = true;
  CHECK(train(mdp, gamma, plain).trace == train(mdp, gamma, forced).trace);
}

TEST_CASE("frozen-actor critic converges toward its exact fixed point") {
  const MultiAgentMDP mdp = MultiAgentMDP::random(2, 3, 2, 53);
  const MembershipMatrix gamma = MembershipMatrix::identity(2);
  TrainConfig cfg;
  cfg.iterations = 60000;
  cfg.seed = 4;
  cfg.freeze_actor = true;
  cfg.m_omega = 4;
  cfg.log_stride = cfg.iterations;
  const TrainResult res = train(mdp, gamma, cfg);

  const auto policies = train_initial_policies(mdp, cfg);
  const FeatureMap phi = FeatureMap::random(mdp, cfg.m_omega);
  const oracle::AverageReturn ar = oracle::average_return(mdp, policies, gamma);
  for (int k = 0; k < 2; ++k) {
    CHECK(std::abs(res.critic.mu[k] - ar.per_community[k]) < 0.1);
    const Eigen::VectorXd target =
        oracle::critic_fixed_point(mdp, policies, gamma, phi, k);
    const double final_dist = (res.critic.omega.col(k) - target).norm();
    // omega starts at zero, so the initial distance is ||target||.
    CHECK(final_dist < 0.5 * target.norm());
  }
}

TEST_CASE("exact critic turns the expected actor update into the gradient") {
  // One community whose reward is the global mean, tabular-complement
  // features: the advantage estimate is then the exact local advantage, so
  // the occupancy-weighted update direction is the exact policy gradient.
  const int n = 2;
  const MultiAgentMDP mdp = MultiAgentMDP::random(n, 3, 2, 59);
  const MembershipMatrix gamma(Eigen::MatrixXd::Ones(n, 1));
  const FeatureMap phi = tabular_complement_features(mdp);

  std::vector<AgentPolicy> policies;
  rng::Counter init(61, rng::kInit);
  for (int i = 0; i < n; ++i) {
    AgentPolicy p = AgentPolicy::random(mdp, i, 5);
    Eigen::VectorXd theta(5);
    for (int d = 0; d < 5; ++d) theta[d] = init.uniform(-1.0, 1.0);
    p.set_theta(theta);
    policies.push_back(std::move(p));
  }

  CriticStateQ critic = CriticStateQ::zero(phi.dim(), 1);
  critic.omega.col(0) =
      oracle::critic_fixed_point(mdp, policies, gamma, phi, 0);

  const Eigen::MatrixXd pi = oracle::policy_table(mdp, policies);
  const Eigen::VectorXd d = oracle::stationary_distribution(mdp, policies);
  const auto grads = oracle::policy_gradient(mdp, policies);
  const auto ja = static_cast<Eigen::Index>(mdp.num_joint_actions());
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd update = Eigen::VectorXd::Zero(5);
    for (int s = 0; s < 3; ++s)
      for (Eigen::Index a = 0; a < ja; ++a) {
        const double adv =
            advantage_estimate(critic, gamma, i, mdp, policies, phi, s, a);
        const int ai = mdp.actions().agent_action(a, i);
        update += d[s] * pi(s, a) * adv * policies[i].score(s, ai);
      }
    CHECK((update - grads[i]).lpNorm<Eigen::Infinity>() < 1e-8);
  }
}

TEST_CASE("training improves the exact return on a desk-scale instance") {
  const MultiAgentMDP mdp = MultiAgentMDP::random(2, 3, 2, 67);
  const MembershipMatrix gamma = MembershipMatrix::identity(2);
  TrainConfig cfg;
  cfg.iterations = 20000;
  cfg.seed = 16;
  cfg.log_stride = cfg.iterations;
  const TrainResult res = train(mdp, gamma, cfg);

  const auto start = train_initial_policies(mdp, cfg);
  const double j0 = oracle::average_return(mdp, start, gamma).global;
  const double j1 = oracle::average_return(mdp, res.policies, gamma).global;
  CHECK(j1 > j0);
}
