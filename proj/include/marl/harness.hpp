#pragma once

#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "marl/ac_q.hpp"
#include "marl/ac_v.hpp"
#include "marl/baseline.hpp"
#include "marl/env.hpp"
#include "marl/membership.hpp"
#include "marl/trace.hpp"

namespace marl::harness {

inline constexpr const char* kLibraryVersion = "0.1.0";
inline constexpr int kSchemaVersion = 1;

enum class ExperimentKind {
  kFigure12,   // community Q-critic training curves
  kFigure3,    // paired community-vs-consensus comparison
  kDeskOracle, // exact small-instance solution dump
  kMscoreSweep,
  kTransfer,
  kActive,
};

std::string to_string(ExperimentKind kind);
ExperimentKind experiment_kind_from_string(const std::string& s);

// JSON-backed experiment description. Serialization uses a fixed key order
// so parse -> serialize -> parse is a fixed point, byte for byte.
struct ExperimentConfig {
  int schema_version = kSchemaVersion;
  ExperimentKind kind = ExperimentKind::kFigure12;
  std::string algorithm = "q";  // "q" | "v" | "baseline"

  int num_agents = 20;
  int num_states = 20;
  int actions_per_agent = 2;
  int num_communities = 4;
  std::vector<double> dirichlet_alpha = {1.0, 1.0, 1.0, 1.0};
  double critic_exponent = 0.65;
  double actor_exponent = 0.85;
  long iterations = 500;
  std::vector<std::uint64_t> seeds = {0};
  long log_stride = 1;
  std::string out_dir = "runs";
  int m_omega = 10;
  int m_policy = 5;
  int m_v = 6;
  int m_rho = 8;
  double reward_noise = 0.5;
  double membership_epsilon = 0.0;
  bool log_oracle_j = false;

  int query_budget = 0;  // active runs
  bool force_full_selection = false;

  std::vector<int> mscore_sizes = {300, 1200};  // mscore-sweep
  double mscore_degree_low = 0.3;
  double mscore_degree_high = 0.9;
  double mscore_in_connectivity = 0.9;
  double mscore_out_connectivity = 0.2;

  double transfer_shift = 0.1;  // transfer runs: perturbation scale

  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::string& path);
  nlohmann::ordered_json to_json() const;
  std::string serialize() const;  // canonical, newline-terminated
  void validate() const;

  TrainConfig train_config(std::uint64_t seed) const;
  TrainConfigV train_config_v(std::uint64_t seed) const;
};

struct RunArtifact {
  nlohmann::ordered_json config_snapshot;
  std::uint64_t seed = 0;
  std::string trace_path;  // empty when the run emits no trace
  nlohmann::ordered_json summary;
  std::vector<std::string> plot_paths;
  std::string fingerprint;
};

// Per-seed dispatch; seeds run concurrently, one output directory each
// (<out>/seed_<n>/). Returns one artifact per seed in seed-list order,
// except figure3 which returns a community/baseline pair per seed.
std::vector<RunArtifact> run_experiment(const ExperimentConfig& config);

// Community-aligned reward tables (four communities over binary actions):
// community 0 prefers action 0 (values in [3,4] vs [1,2]), community 1 the
// mirror; community 2 favors even states, community 3 odd states.
std::vector<Eigen::MatrixXd> community_aligned_rewards(
    int num_agents, int num_states, int actions_per_agent,
    const MembershipMatrix& gamma, std::uint64_t seed);

// Trailing-window summary recomputable from the trace alone.
nlohmann::ordered_json trace_summary(const TrainingTrace& trace);

// One SVG polyline plot per selected column (x axis = t). Unknown columns
// raise ConfigError. Returns written paths; empty selection writes nothing.
std::vector<std::string> emit_plots(const TrainingTrace& trace,
                                    const std::vector<std::string>& columns,
                                    const std::string& out_dir,
                                    const std::string& prefix);

// Two-series overlay (e.g. paired J curves) with a text legend.
std::string emit_pair_plot(const TrainingTrace& a, const TrainingTrace& b,
                           const std::string& column,
                           const std::string& label_a,
                           const std::string& label_b,
                           const std::string& path);

struct CompareReport {
  std::vector<double> final_diffs;  // A minus B, per seed
  int wins_a = 0;
  int wins_b = 0;
  int ties = 0;
  double win_rate_a = 0.0;  // ties count half
  double mean_gap = 0.0;

  nlohmann::ordered_json to_json() const;
};

// Final-J comparison of paired traces (same seeds, same length).
CompareReport compare(const std::vector<TrainingTrace>& a,
                      const std::vector<TrainingTrace>& b);

std::string config_fingerprint(const ExperimentConfig& config,
                               std::uint64_t seed);

}  // namespace marl::harness
