// Command-line front end: training runs, membership estimation, transfer
// evaluation, exact small-instance solutions, and trace plotting.
#include <CLI11.hpp>
#include <cstdio>
#include <exception>
#include <optional>
#include <string>
#include <vector>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "marl/errors.hpp"
#include "marl/harness.hpp"
#include "marl/mscore.hpp"
#include "marl/trace.hpp"
#include "marl/transfer.hpp"

namespace {

using marl::harness::ExperimentConfig;
using marl::harness::ExperimentKind;

struct GlobalFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<long> log_stride;
};

ExperimentConfig resolve_config(const GlobalFlags& flags,
                                ExperimentKind kind,
                                const std::string& algorithm) {
  ExperimentConfig config;
  if (!flags.config_path.empty()) {
    config = ExperimentConfig::load(flags.config_path);
  } else {
    // Workable defaults per run kind when no config file is given.
    switch (kind) {
      case ExperimentKind::kDeskOracle:
      case ExperimentKind::kTransfer:
        config.num_agents = 2;
        config.num_states = 3;
        config.actions_per_agent = 2;
        config.num_communities = 2;
        config.dirichlet_alpha = {1.0, 1.0};
        config.m_omega = 4;
        break;
      case ExperimentKind::kFigure3:
        config.num_agents = 10;
        config.num_states = 10;
        config.iterations = 500;
        break;
      case ExperimentKind::kActive:
        config.query_budget = 1;
        break;
      default:
        break;
    }
  }
  config.kind = kind;
  config.algorithm = algorithm;
  if (flags.seed) config.seeds = {*flags.seed};
  if (flags.out) config.out_dir = *flags.out;
  if (flags.log_stride) config.log_stride = *flags.log_stride;
  config.validate();
  return config;
}

Eigen::MatrixXd read_adjacency(const std::string& path,
                               const std::string& format) {
  std::ifstream in(path);
  if (!in) throw marl::ConfigError("cannot read adjacency file: " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::vector<double> row;
    double v;
    while (ls >> v) row.push_back(v);
    if (!row.empty()) rows.push_back(std::move(row));
  }
  if (rows.empty()) throw marl::ConfigError("empty adjacency file");
  if (format == "dense") {
    const std::size_t n = rows.size();
    Eigen::MatrixXd a(n, n);
    for (std::size_t i = 0; i < n; ++i) {
      if (rows[i].size() != n)
        throw marl::ConfigError("dense adjacency must be square");
      for (std::size_t j = 0; j < n; ++j) a(i, j) = rows[i][j];
    }
    return a;
  }
  if (format != "edges")
    throw marl::ConfigError("adjacency format must be dense or edges");
  int n = 0;
  for (const auto& row : rows) {
    if (row.size() != 2)
      throw marl::ConfigError("edge list rows must contain two node ids");
    n = std::max(n, 1 + static_cast<int>(std::max(row[0], row[1])));
  }
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  for (const auto& row : rows) {
    const int i = static_cast<int>(row[0]);
    const int j = static_cast<int>(row[1]);
    if (i != j) a(i, j) = a(j, i) = 1.0;
  }
  return a;
}

void report_artifacts(const std::vector<marl::harness::RunArtifact>& runs) {
  for (const auto& artifact : runs) {
    std::printf("seed=%llu fingerprint=%s",
                static_cast<unsigned long long>(artifact.seed),
                artifact.fingerprint.c_str());
    if (!artifact.trace_path.empty())
      std::printf(" trace=%s", artifact.trace_path.c_str());
    std::printf("\n");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Community-structured multi-agent actor-critic toolkit"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalFlags flags;
  std::uint64_t seed_value = 0;
  std::string out_value;
  long stride_value = 0;
  app.add_option("--config", flags.config_path, "JSON experiment config");
  auto* seed_opt = app.add_option("--seed", seed_value, "override seed list");
  auto* out_opt = app.add_option("--out", out_value, "output directory");
  auto* stride_opt =
      app.add_option("--log-stride", stride_value, "trace logging stride");

  app.add_subcommand("train-q", "community Q-critic actor-critic training");
  app.add_subcommand("train-v", "state-value-critic actor-critic training");
  app.add_subcommand("train-active",
                     "actively gated training under a query budget");
  app.add_subcommand("compare-baseline",
                     "paired community vs neighbor-baseline runs");
  auto* estimate_cmd = app.add_subcommand(
      "estimate-membership", "spectral membership estimation");
  std::string adjacency_path;
  std::string adjacency_format = "dense";
  int estimate_k = 0;
  estimate_cmd->add_option("--adjacency", adjacency_path,
                           "adjacency file (dense 0/1 matrix or edge list); "
                           "omit to run the synthetic sweep");
  estimate_cmd->add_option("--format", adjacency_format,
                           "adjacency format: dense | edges");
  estimate_cmd->add_option("--communities", estimate_k,
                           "number of communities for --adjacency mode");

  auto* transfer_cmd =
      app.add_subcommand("transfer", "cross-task critic transfer evaluation");
  std::string library_path;
  std::string membership_path;
  transfer_cmd->add_option("--library", library_path,
                           "community critic library JSON; with --membership "
                           "emits a Q-value table instead of the experiment");
  transfer_cmd->add_option("--membership", membership_path,
                           "membership JSON whose first row is gamma_new");
  app.add_subcommand("oracle", "exact solution of a small instance");

  auto* plot_cmd = app.add_subcommand("plot", "render trace columns as SVG");
  std::string plot_trace;
  std::vector<std::string> plot_columns;
  plot_cmd->add_option("trace", plot_trace, "trace CSV path")->required();
  plot_cmd->add_option("--columns", plot_columns, "columns to plot")
      ->required();

  try {
    app.parse(argc, argv);
    if (*seed_opt) flags.seed = seed_value;
    if (*out_opt) flags.out = out_value;
    if (*stride_opt) flags.log_stride = stride_value;

    const std::string sub = app.get_subcommands().front()->get_name();
    if (sub == "plot") {
      const marl::TrainingTrace trace =
          marl::TrainingTrace::read_csv_file(plot_trace);
      const std::string dir = flags.out.value_or(".");
      const auto paths =
          marl::harness::emit_plots(trace, plot_columns, dir, "plot_");
      for (const auto& p : paths) std::printf("%s\n", p.c_str());
      return 0;
    }

    if (sub == "estimate-membership" && !adjacency_path.empty()) {
      const Eigen::MatrixXd adjacency =
          read_adjacency(adjacency_path, adjacency_format);
      const int k = estimate_k > 0 ? estimate_k : 4;
      const marl::MembershipMatrix estimated = marl::mscore::estimate(
          adjacency, k, 0.0, flags.seed.value_or(0));
      const std::filesystem::path dir(flags.out.value_or("."));
      std::filesystem::create_directories(dir);
      const auto path = dir / "membership.json";
      std::ofstream out(path);
      out << estimated.to_json() << "\n";
      std::printf("%s\n", path.string().c_str());
      return 0;
    }

    if (sub == "transfer" && !library_path.empty()) {
      if (membership_path.empty())
        throw marl::ConfigError("--library requires --membership");
      std::ifstream lib_in(library_path);
      if (!lib_in)
        throw marl::ConfigError("cannot read library: " + library_path);
      std::stringstream lib_text;
      lib_text << lib_in.rdbuf();
      const marl::CommunityLibrary library =
          marl::CommunityLibrary::from_json(lib_text.str());
      std::ifstream mem_in(membership_path);
      if (!mem_in)
        throw marl::ConfigError("cannot read membership: " + membership_path);
      std::stringstream mem_text;
      mem_text << mem_in.rdbuf();
      const marl::MembershipMatrix membership =
          marl::MembershipMatrix::from_json(mem_text.str());
      if (membership.num_communities() != library.num_communities)
        throw marl::ConfigError("membership/library community mismatch");
      const Eigen::VectorXd gamma_new = membership.row(0);

      // Rebuild the feature map the library critics were trained against.
      ExperimentConfig config =
          resolve_config(flags, ExperimentKind::kTransfer, "q");
      const marl::MultiAgentMDP mdp = marl::MultiAgentMDP::random(
          config.num_agents, config.num_states, config.actions_per_agent,
          library.feature_seed, marl::KernelMode::kExplicitTable,
          config.reward_noise);
      const marl::FeatureMap phi =
          marl::FeatureMap::random(mdp, library.feature_dim);

      marl::TrainingTrace table;
      table.columns = {"s", "a", "q_new"};
      for (int s = 0; s < mdp.num_states(); ++s)
        for (std::uint64_t a = 0; a < mdp.num_joint_actions(); ++a)
          table.rows.push_back(
              {static_cast<double>(s), static_cast<double>(a),
               marl::transfer_q(library, gamma_new, phi, s, a)});
      const std::filesystem::path dir(flags.out.value_or("."));
      std::filesystem::create_directories(dir);
      const auto path = dir / "q_table.csv";
      table.write_csv_file(path.string());
      std::printf("%s\n", path.string().c_str());
      return 0;
    }

    ExperimentKind kind = ExperimentKind::kFigure12;
    std::string algorithm = "q";
    if (sub == "train-q") {
      kind = ExperimentKind::kFigure12;
    } else if (sub == "train-v") {
      kind = ExperimentKind::kFigure12;
      algorithm = "v";
    } else if (sub == "train-active") {
      kind = ExperimentKind::kActive;
    } else if (sub == "compare-baseline") {
      kind = ExperimentKind::kFigure3;
    } else if (sub == "estimate-membership") {
      kind = ExperimentKind::kMscoreSweep;
    } else if (sub == "transfer") {
      kind = ExperimentKind::kTransfer;
    } else if (sub == "oracle") {
      kind = ExperimentKind::kDeskOracle;
    }

    ExperimentConfig config = resolve_config(flags, kind, algorithm);
    report_artifacts(marl::harness::run_experiment(config));
    return 0;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const marl::NumericError& e) {
    std::fprintf(stderr, "numeric abort: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
