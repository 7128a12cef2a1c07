#pragma once

#include <Eigen/Core>
#include <vector>

#include "marl/ac_q.hpp"
#include "marl/env.hpp"
#include "marl/trace.hpp"

namespace marl {

// Undirected communication graph for the neighbor-based baseline.
struct ConsensusGraph {
  std::vector<std::vector<int>> neighbors;

  int size() const { return static_cast<int>(neighbors.size()); }
  bool connected() const;
  static ConsensusGraph complete(int n);
  // Default topology: ring plus floor(n/4) random chords.
  static ConsensusGraph ring_with_chords(int n, std::uint64_t seed);
};

// Metropolis weights: C(i,j) = 1 / (1 + max(deg i, deg j)) for neighbors,
// self weight fills the remainder. Doubly stochastic by construction.
Eigen::MatrixXd consensus_weights(const ConsensusGraph& graph);

struct BaselineResult {
  TrainingTrace trace;
  Eigen::MatrixXd omega;  // m_Omega x N (per-agent critics)
  Eigen::VectorXd mu;     // per-agent average-reward estimates
  std::vector<AgentPolicy> policies;
};

// Neighbor-based networked actor-critic: per-agent TD critics on local
// rewards mixed through the consensus matrix each step; actor step as in
// the community algorithm but with the agent's own critic.
BaselineResult train_baseline(const MultiAgentMDP& mdp,
                              const ConsensusGraph& graph,
                              const TrainConfig& config);

}  // namespace marl
