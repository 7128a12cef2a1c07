#include "marl/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <sstream>

#include "marl/errors.hpp"
#include "marl/mscore.hpp"
#include "marl/oracle.hpp"
#include "marl/transfer.hpp"

namespace marl::harness {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::kFigure12: return "figure1-2";
    case ExperimentKind::kFigure3: return "figure3";
    case ExperimentKind::kDeskOracle: return "desk-oracle";
    case ExperimentKind::kMscoreSweep: return "mscore-sweep";
    case ExperimentKind::kTransfer: return "transfer";
    case ExperimentKind::kActive: return "active";
  }
  throw ConfigError("unknown experiment kind");
}

ExperimentKind experiment_kind_from_string(const std::string& s) {
  if (s == "figure1-2") return ExperimentKind::kFigure12;
  if (s == "figure3") return ExperimentKind::kFigure3;
  if (s == "desk-oracle") return ExperimentKind::kDeskOracle;
  if (s == "mscore-sweep") return ExperimentKind::kMscoreSweep;
  if (s == "transfer") return ExperimentKind::kTransfer;
  if (s == "active") return ExperimentKind::kActive;
  throw ConfigError("unknown experiment kind: " + s);
}

namespace {

const char* const kKnownKeys[] = {
    "schema_version", "kind", "algorithm", "num_agents", "num_states",
    "actions_per_agent", "num_communities", "dirichlet_alpha",
    "critic_exponent", "actor_exponent", "iterations", "seeds", "log_stride",
    "out_dir", "m_omega", "m_policy", "m_v", "m_rho", "reward_noise",
    "membership_epsilon", "log_oracle_j", "query_budget",
    "force_full_selection", "mscore_sizes", "mscore_degree_low",
    "mscore_degree_high", "mscore_in_connectivity", "mscore_out_connectivity",
    "transfer_shift"};

template <typename T>
void read_field(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

std::vector<AgentPolicy> make_policies(const MultiAgentMDP& mdp,
                                       const TrainConfig& config) {
  std::vector<AgentPolicy> policies;
  policies.reserve(mdp.num_agents());
  rng::Counter init(config.seed, rng::kInit);
  for (int i = 0; i < mdp.num_agents(); ++i) {
    AgentPolicy p = AgentPolicy::random(mdp, i, config.m_policy,
                                        config.box_halfwidth);
    Eigen::VectorXd theta0(config.m_policy);
    for (int d = 0; d < config.m_policy; ++d)
      theta0[d] = init.uniform(-config.theta_init_halfwidth,
                               config.theta_init_halfwidth);
    p.set_theta(theta0);
    policies.push_back(std::move(p));
  }
  return policies;
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

std::string dump_json(const ordered_json& j) { return j.dump(2) + "\n"; }

std::string svg_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

struct PlotSeries {
  std::string label;
  std::string color;
  const std::vector<double>* x = nullptr;
  const std::vector<double>* y = nullptr;
};

// Fixed 640x400 canvas, data box [60,620]x[20,360], y axis inverted.
std::string render_plot(const std::vector<PlotSeries>& series,
                        const std::string& title, bool legend) {
  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  bool first = true;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x->size(); ++i) {
      const double px = (*s.x)[i];
      const double py = (*s.y)[i];
      if (first) {
        xmin = xmax = px;
        ymin = ymax = py;
        first = false;
      } else {
        xmin = std::min(xmin, px);
        xmax = std::max(xmax, px);
        ymin = std::min(ymin, py);
        ymax = std::max(ymax, py);
      }
    }
  }
  if (xmax - xmin <= 0) xmax = xmin + 1;
  if (ymax - ymin <= 0) ymax = ymin + 1;
  const auto sx = [&](double v) {
    return 60.0 + (v - xmin) / (xmax - xmin) * 560.0;
  };
  const auto sy = [&](double v) {
    return 360.0 - (v - ymin) / (ymax - ymin) * 340.0;
  };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" "
         "height=\"400\" viewBox=\"0 0 640 400\">\n";
  svg << "<rect x=\"0\" y=\"0\" width=\"640\" height=\"400\" "
         "fill=\"white\"/>\n";
  svg << "<line x1=\"60\" y1=\"360\" x2=\"620\" y2=\"360\" "
         "stroke=\"black\"/>\n";
  svg << "<line x1=\"60\" y1=\"20\" x2=\"60\" y2=\"360\" "
         "stroke=\"black\"/>\n";
  svg << "<text x=\"320\" y=\"14\" text-anchor=\"middle\" "
         "font-size=\"12\">" << title << "</text>\n";
  svg << "<text x=\"58\" y=\"372\" text-anchor=\"end\" font-size=\"10\">"
      << svg_num(xmin) << "</text>\n";
  svg << "<text x=\"620\" y=\"372\" text-anchor=\"end\" font-size=\"10\">"
      << svg_num(xmax) << "</text>\n";
  svg << "<text x=\"56\" y=\"360\" text-anchor=\"end\" font-size=\"10\">"
      << svg_num(ymin) << "</text>\n";
  svg << "<text x=\"56\" y=\"24\" text-anchor=\"end\" font-size=\"10\">"
      << svg_num(ymax) << "</text>\n";
  for (const auto& s : series) {
    svg << "<polyline fill=\"none\" stroke=\"" << s.color
        << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.x->size(); ++i) {
      if (i) svg << ' ';
      svg << svg_num(sx((*s.x)[i])) << ',' << svg_num(sy((*s.y)[i]));
    }
    svg << "\"/>\n";
  }
  if (legend) {
    double ly = 34.0;
    for (const auto& s : series) {
      svg << "<line x1=\"480\" y1=\"" << svg_num(ly - 4) << "\" x2=\"510\" y2=\""
          << svg_num(ly - 4) << "\" stroke=\"" << s.color
          << "\" stroke-width=\"1.5\"/>\n";
      svg << "<text x=\"514\" y=\"" << svg_num(ly)
          << "\" font-size=\"11\">" << s.label << "</text>\n";
      ly += 16.0;
    }
  }
  svg << "</svg>\n";
  return svg.str();
}

std::vector<double> trace_column_values(const TrainingTrace& trace,
                                        const std::string& name) {
  const int idx = trace.column_index(name);
  if (idx < 0) throw ConfigError("unknown trace column: " + name);
  std::vector<double> values;
  values.reserve(trace.rows.size());
  for (const auto& row : trace.rows) values.push_back(row[idx]);
  return values;
}

double final_j(const TrainingTrace& trace) {
  const int idx = trace.column_index("J_hat");
  if (idx < 0) throw ConfigError("trace has no J_hat column");
  if (trace.rows.empty()) throw ConfigError("trace has no rows");
  return trace.rows.back()[idx];
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* key : kKnownKeys)
      if (it.key() == key) known = true;
    if (!known) throw ConfigError("unknown config key: " + it.key());
  }
  ExperimentConfig c;
  read_field(j, "schema_version", c.schema_version);
  if (c.schema_version != kSchemaVersion)
    throw ConfigError("unsupported schema_version");
  if (j.contains("kind")) {
    if (!j.at("kind").is_string()) throw ConfigError("kind must be a string");
    c.kind = experiment_kind_from_string(j.at("kind").get<std::string>());
  }
  read_field(j, "algorithm", c.algorithm);
  read_field(j, "num_agents", c.num_agents);
  read_field(j, "num_states", c.num_states);
  read_field(j, "actions_per_agent", c.actions_per_agent);
  read_field(j, "num_communities", c.num_communities);
  if (j.contains("dirichlet_alpha"))
    read_field(j, "dirichlet_alpha", c.dirichlet_alpha);
  else
    c.dirichlet_alpha.assign(c.num_communities, 1.0);
  read_field(j, "critic_exponent", c.critic_exponent);
  read_field(j, "actor_exponent", c.actor_exponent);
  read_field(j, "iterations", c.iterations);
  read_field(j, "seeds", c.seeds);
  read_field(j, "log_stride", c.log_stride);
  read_field(j, "out_dir", c.out_dir);
  read_field(j, "m_omega", c.m_omega);
  read_field(j, "m_policy", c.m_policy);
  read_field(j, "m_v", c.m_v);
  read_field(j, "m_rho", c.m_rho);
  read_field(j, "reward_noise", c.reward_noise);
  read_field(j, "membership_epsilon", c.membership_epsilon);
  read_field(j, "log_oracle_j", c.log_oracle_j);
  read_field(j, "query_budget", c.query_budget);
  read_field(j, "force_full_selection", c.force_full_selection);
  read_field(j, "mscore_sizes", c.mscore_sizes);
  read_field(j, "mscore_degree_low", c.mscore_degree_low);
  read_field(j, "mscore_degree_high", c.mscore_degree_high);
  read_field(j, "mscore_in_connectivity", c.mscore_in_connectivity);
  read_field(j, "mscore_out_connectivity", c.mscore_out_connectivity);
  read_field(j, "transfer_shift", c.transfer_shift);
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  return from_json(j);
}

ordered_json ExperimentConfig::to_json() const {
  ordered_json j;
  j["schema_version"] = schema_version;
  j["kind"] = harness::to_string(kind);
  j["algorithm"] = algorithm;
  j["num_agents"] = num_agents;
  j["num_states"] = num_states;
  j["actions_per_agent"] = actions_per_agent;
  j["num_communities"] = num_communities;
  j["dirichlet_alpha"] = dirichlet_alpha;
  j["critic_exponent"] = critic_exponent;
  j["actor_exponent"] = actor_exponent;
  j["iterations"] = iterations;
  j["seeds"] = seeds;
  j["log_stride"] = log_stride;
  j["out_dir"] = out_dir;
  j["m_omega"] = m_omega;
  j["m_policy"] = m_policy;
  j["m_v"] = m_v;
  j["m_rho"] = m_rho;
  j["reward_noise"] = reward_noise;
  j["membership_epsilon"] = membership_epsilon;
  j["log_oracle_j"] = log_oracle_j;
  j["query_budget"] = query_budget;
  j["force_full_selection"] = force_full_selection;
  j["mscore_sizes"] = mscore_sizes;
  j["mscore_degree_low"] = mscore_degree_low;
  j["mscore_degree_high"] = mscore_degree_high;
  j["mscore_in_connectivity"] = mscore_in_connectivity;
  j["mscore_out_connectivity"] = mscore_out_connectivity;
  j["transfer_shift"] = transfer_shift;
  return j;
}

std::string ExperimentConfig::serialize() const { return dump_json(to_json()); }

void ExperimentConfig::validate() const {
  if (num_agents < 1 || num_states < 1 || actions_per_agent < 1)
    throw ConfigError("MDP sizes must be positive");
  if (num_communities < 1) throw ConfigError("need at least one community");
  if (static_cast<int>(dirichlet_alpha.size()) != num_communities)
    throw ConfigError("dirichlet_alpha length must equal num_communities");
  for (double a : dirichlet_alpha)
    if (!(a > 0)) throw ConfigError("dirichlet_alpha entries must be > 0");
  StepSchedule sched(critic_exponent, actor_exponent);  // validates ranges
  (void)sched;
  if (iterations < 0) throw ConfigError("iterations must be >= 0");
  if (seeds.empty()) throw ConfigError("seed list must be nonempty");
  if (log_stride < 1) throw ConfigError("log stride must be >= 1");
  if (m_omega < 1 || m_policy < 1 || m_v < 1 || m_rho < 1)
    throw ConfigError("feature dimensions must be positive");
  if (reward_noise < 0) throw ConfigError("reward noise must be >= 0");
  if (algorithm != "q" && algorithm != "v" && algorithm != "baseline")
    throw ConfigError("algorithm must be one of q, v, baseline");
  if (kind == ExperimentKind::kFigure3) {
    if (num_communities != 4)
      throw ConfigError("figure3 requires exactly 4 communities");
    if (actions_per_agent != 2)
      throw ConfigError("figure3 requires binary actions");
  }
  if (kind == ExperimentKind::kActive &&
      (query_budget < 1 || query_budget >= num_communities))
    throw ConfigError("active runs need 1 <= query_budget < num_communities");
  if (query_budget < 0 || query_budget >= std::max(num_communities, 1))
    if (query_budget != 0)
      throw ConfigError("query budget out of range");
  if (kind == ExperimentKind::kMscoreSweep) {
    if (mscore_sizes.empty()) throw ConfigError("mscore_sizes must be nonempty");
    for (int n : mscore_sizes)
      if (n < num_communities)
        throw ConfigError("mscore sweep sizes must be >= num_communities");
    if (!(mscore_degree_low > 0) || mscore_degree_high < mscore_degree_low ||
        mscore_degree_high > 1)
      throw ConfigError("degree range must satisfy 0 < low <= high <= 1");
    if (mscore_in_connectivity < 0 || mscore_in_connectivity > 1 ||
        mscore_out_connectivity < 0 || mscore_out_connectivity > 1)
      throw ConfigError("connectivity entries must lie in [0,1]");
  }
  if (transfer_shift < 0) throw ConfigError("transfer shift must be >= 0");
}

TrainConfig ExperimentConfig::train_config(std::uint64_t seed) const {
  TrainConfig t;
  t.iterations = iterations;
  t.schedule = StepSchedule(critic_exponent, actor_exponent);
  t.seed = seed;
  t.log_stride = log_stride;
  t.m_omega = m_omega;
  t.m_policy = m_policy;
  t.membership_epsilon = membership_epsilon;
  t.log_oracle_j = log_oracle_j;
  t.query_budget = query_budget;
  t.force_full_selection = force_full_selection;
  return t;
}

TrainConfigV ExperimentConfig::train_config_v(std::uint64_t seed) const {
  TrainConfigV t;
  t.iterations = iterations;
  t.schedule = StepSchedule(critic_exponent, actor_exponent);
  t.seed = seed;
  t.log_stride = log_stride;
  t.m_v = m_v;
  t.m_rho = m_rho;
  t.m_policy = m_policy;
  t.membership_epsilon = membership_epsilon;
  return t;
}

std::string config_fingerprint(const ExperimentConfig& config,
                               std::uint64_t seed) {
  // FNV-1a over the canonical serialization, then the seed bytes.
  std::uint64_t h = 1469598103934665603ull;
  const auto mix = [&](unsigned char b) {
    h ^= b;
    h *= 1099511628211ull;
  };
  for (unsigned char b : config.serialize()) mix(b);
  for (int i = 0; i < 8; ++i)
    mix(static_cast<unsigned char>((seed >> (8 * i)) & 0xff));
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%016llx-v%s",
                static_cast<unsigned long long>(h), kLibraryVersion);
  return buf;
}

std::vector<Eigen::MatrixXd> community_aligned_rewards(
    int num_agents, int num_states, int actions_per_agent,
    const MembershipMatrix& gamma, std::uint64_t seed) {
  if (gamma.num_communities() != 4)
    throw ConfigError("community-aligned rewards require 4 communities");
  if (actions_per_agent != 2)
    throw ConfigError("community-aligned rewards require binary actions");
  if (gamma.num_agents() != num_agents)
    throw ConfigError("membership size mismatch");

  // Community tables over (state, own action): preferred cells in [3,4],
  // the rest in [1,2].
  rng::Counter gen(seed, rng::kRewards);
  std::vector<Eigen::MatrixXd> community(4);
  for (auto& table : community) table.resize(num_states, actions_per_agent);
  for (int s = 0; s < num_states; ++s) {
    for (int b = 0; b < actions_per_agent; ++b) {
      const bool even_state = (s % 2) == 0;
      const auto draw = [&](bool preferred) {
        return preferred ? gen.uniform(3.0, 4.0) : gen.uniform(1.0, 2.0);
      };
      community[0](s, b) = draw(b == 0);
      community[1](s, b) = draw(b == 1);
      community[2](s, b) = draw(even_state);
      community[3](s, b) = draw(!even_state);
    }
  }

  JointActionSpace actions(num_agents, actions_per_agent);
  if (actions.count() * static_cast<std::uint64_t>(num_states) >
      MultiAgentMDP::kExplicitCap)
    throw SizeError("community-aligned rewards need a desk-scale instance");

  std::vector<Eigen::MatrixXd> rewards(
      num_agents,
      Eigen::MatrixXd(num_states, static_cast<int>(actions.count())));
  for (int i = 0; i < num_agents; ++i) {
    const Eigen::VectorXd gi = gamma.row(i);
    for (int s = 0; s < num_states; ++s) {
      for (std::uint64_t a = 0; a < actions.count(); ++a) {
        const int own = actions.agent_action(a, i);
        double r = 0.0;
        for (int k = 0; k < 4; ++k) r += gi[k] * community[k](s, own);
        rewards[i](s, static_cast<int>(a)) = r;
      }
    }
  }
  return rewards;
}

nlohmann::ordered_json trace_summary(const TrainingTrace& trace) {
  ordered_json s;
  s["rows"] = trace.rows.size();
  s["columns"] = trace.columns.size();
  if (trace.rows.empty()) return s;
  const int t_idx = trace.column_index("t");
  const int j_idx = trace.column_index("J_hat");
  if (t_idx >= 0) s["final_t"] = trace.rows.back()[t_idx];
  if (j_idx >= 0) {
    s["final_J_hat"] = trace.rows.back()[j_idx];
    const std::size_t window = std::min<std::size_t>(100, trace.rows.size());
    double acc = 0.0;
    for (std::size_t r = trace.rows.size() - window; r < trace.rows.size();
         ++r)
      acc += trace.rows[r][j_idx];
    s["mean_J_hat_last_100_rows"] = acc / static_cast<double>(window);
  }
  double max_abs = 0.0;
  for (const auto& row : trace.rows)
    for (double v : row) max_abs = std::max(max_abs, std::abs(v));
  s["max_abs_value"] = max_abs;
  return s;
}

std::vector<std::string> emit_plots(const TrainingTrace& trace,
                                    const std::vector<std::string>& columns,
                                    const std::string& out_dir,
                                    const std::string& prefix) {
  std::vector<std::string> paths;
  if (columns.empty()) return paths;
  const std::vector<double> t = trace_column_values(trace, "t");
  for (const auto& name : columns) {
    const std::vector<double> y = trace_column_values(trace, name);
    PlotSeries s{name, "#1f77b4", &t, &y};
    const fs::path path = fs::path(out_dir) / (prefix + name + ".svg");
    write_text(path, render_plot({s}, name, false));
    paths.push_back(path.string());
  }
  return paths;
}

std::string emit_pair_plot(const TrainingTrace& a, const TrainingTrace& b,
                           const std::string& column,
                           const std::string& label_a,
                           const std::string& label_b,
                           const std::string& path) {
  const std::vector<double> ta = trace_column_values(a, "t");
  const std::vector<double> tb = trace_column_values(b, "t");
  const std::vector<double> ya = trace_column_values(a, column);
  const std::vector<double> yb = trace_column_values(b, column);
  const PlotSeries sa{label_a, "#1f77b4", &ta, &ya};
  const PlotSeries sb{label_b, "#d62728", &tb, &yb};
  write_text(path, render_plot({sa, sb}, column, true));
  return path;
}

ordered_json CompareReport::to_json() const {
  ordered_json j;
  j["final_diffs"] = final_diffs;
  j["wins_a"] = wins_a;
  j["wins_b"] = wins_b;
  j["ties"] = ties;
  j["win_rate_a"] = win_rate_a;
  j["mean_gap"] = mean_gap;
  return j;
}

CompareReport compare(const std::vector<TrainingTrace>& a,
                      const std::vector<TrainingTrace>& b) {
  if (a.size() != b.size() || a.empty())
    throw ConfigError("compare needs equally many nonempty trace lists");
  CompareReport report;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].rows.size() != b[i].rows.size())
      throw ConfigError("compare needs equal-length traces");
    const double diff = final_j(a[i]) - final_j(b[i]);
    report.final_diffs.push_back(diff);
    if (diff > 0)
      ++report.wins_a;
    else if (diff < 0)
      ++report.wins_b;
    else
      ++report.ties;
    report.mean_gap += diff;
  }
  const double n = static_cast<double>(a.size());
  report.mean_gap /= n;
  report.win_rate_a = (report.wins_a + 0.5 * report.ties) / n;
  return report;
}

namespace {

// Pure nodes planted round-robin in the first half keep the ratio simplex
// corners realized; the rest draw Dirichlet memberships.
MembershipMatrix sweep_membership(int n, int k,
                                  const std::vector<double>& alpha,
                                  std::uint64_t seed) {
  Eigen::VectorXd av(k);
  for (int c = 0; c < k; ++c)
    av[c] = alpha.size() == static_cast<std::size_t>(k) ? alpha[c] : 1.0;
  const MembershipMatrix soft = MembershipMatrix::dirichlet(n, av, seed);
  Eigen::MatrixXd g = soft.matrix();
  const int pure = n / 2;
  for (int i = 0; i < pure; ++i) {
    g.row(i).setZero();
    g(i, i % k) = 1.0;
  }
  return MembershipMatrix(g);
}

RunArtifact make_artifact(const ExperimentConfig& config, std::uint64_t seed) {
  RunArtifact artifact;
  artifact.config_snapshot = config.to_json();
  artifact.seed = seed;
  artifact.fingerprint = config_fingerprint(config, seed);
  return artifact;
}

MembershipMatrix run_gamma(const ExperimentConfig& config,
                           std::uint64_t seed) {
  Eigen::VectorXd alpha(config.num_communities);
  for (int c = 0; c < config.num_communities; ++c)
    alpha[c] = config.dirichlet_alpha[c];
  return MembershipMatrix::dirichlet(config.num_agents, alpha, seed);
}

RunArtifact run_single_train(const ExperimentConfig& config,
                             std::uint64_t seed, const fs::path& dir) {
  RunArtifact artifact = make_artifact(config, seed);
  const MembershipMatrix gamma = run_gamma(config, seed);
  TrainingTrace trace;
  if (config.algorithm == "v") {
    const MultiAgentMDP mdp = MultiAgentMDP::random(
        config.num_agents, config.num_states, config.actions_per_agent, seed,
        KernelMode::kAuto, config.reward_noise);
    trace = train_v(mdp, gamma, config.train_config_v(seed)).trace;
  } else if (config.algorithm == "baseline") {
    const MultiAgentMDP mdp = MultiAgentMDP::random(
        config.num_agents, config.num_states, config.actions_per_agent, seed,
        KernelMode::kAuto, config.reward_noise);
    const ConsensusGraph graph =
        ConsensusGraph::ring_with_chords(config.num_agents, seed);
    trace = train_baseline(mdp, graph, config.train_config(seed)).trace;
  } else {
    const MultiAgentMDP mdp = MultiAgentMDP::random(
        config.num_agents, config.num_states, config.actions_per_agent, seed,
        KernelMode::kAuto, config.reward_noise);
    TrainConfig tc = config.train_config(seed);
    if (config.kind == ExperimentKind::kActive)
      trace = train_active(mdp, gamma, tc).trace;
    else
      trace = train(mdp, gamma, tc).trace;
  }

  const fs::path trace_path = dir / "trace.csv";
  trace.write_csv_file(trace_path.string());
  artifact.trace_path = trace_path.string();
  artifact.summary = trace_summary(trace);

  if (config.kind == ExperimentKind::kFigure12) {
    std::vector<std::string> selection = {"J_hat"};
    const char* critic_prefix = config.algorithm == "v" ? "v_" : "omega_";
    for (int c = 0; c < config.num_communities; ++c) {
      const std::string name = critic_prefix + std::to_string(c + 1) + "_1";
      if (trace.column_index(name) >= 0) selection.push_back(name);
    }
    selection.push_back("theta_1_1");
    artifact.plot_paths = emit_plots(trace, selection, dir.string(), "plot_");
  }
  write_text(dir / "artifact.json", dump_json([&] {
               ordered_json j;
               j["config"] = artifact.config_snapshot;
               j["seed"] = artifact.seed;
               j["trace"] = artifact.trace_path;
               j["summary"] = artifact.summary;
               j["plots"] = artifact.plot_paths;
               j["fingerprint"] = artifact.fingerprint;
               return j;
             }()));
  return artifact;
}

std::vector<RunArtifact> run_figure3_seed(const ExperimentConfig& config,
                                          std::uint64_t seed,
                                          const fs::path& dir,
                                          TrainingTrace* community_trace,
                                          TrainingTrace* baseline_trace) {
  const MembershipMatrix gamma = run_gamma(config, seed);
  const std::vector<Eigen::MatrixXd> rewards = community_aligned_rewards(
      config.num_agents, config.num_states, config.actions_per_agent, gamma,
      seed);
  const MultiAgentMDP mdp = MultiAgentMDP::with_rewards(
      config.num_agents, config.num_states, config.actions_per_agent, seed,
      rewards, config.reward_noise);

  const TrainConfig tc = config.train_config(seed);
  const TrainResult community = train(mdp, gamma, tc);
  const ConsensusGraph graph =
      ConsensusGraph::ring_with_chords(config.num_agents, seed);
  const BaselineResult baseline = train_baseline(mdp, graph, tc);

  RunArtifact community_artifact = make_artifact(config, seed);
  const fs::path community_path = dir / "community_trace.csv";
  community.trace.write_csv_file(community_path.string());
  community_artifact.trace_path = community_path.string();
  community_artifact.summary = trace_summary(community.trace);
  community_artifact.summary["method"] = "community";

  RunArtifact baseline_artifact = make_artifact(config, seed);
  const fs::path baseline_path = dir / "baseline_trace.csv";
  baseline.trace.write_csv_file(baseline_path.string());
  baseline_artifact.trace_path = baseline_path.string();
  baseline_artifact.summary = trace_summary(baseline.trace);
  baseline_artifact.summary["method"] = "neighbor-baseline";

  const std::string pair_path = (dir / "j_pair.svg").string();
  emit_pair_plot(community.trace, baseline.trace, "J_hat", "community",
                 "neighbor-baseline", pair_path);
  community_artifact.plot_paths.push_back(pair_path);

  *community_trace = community.trace;
  *baseline_trace = baseline.trace;
  return {community_artifact, baseline_artifact};
}

RunArtifact run_desk_oracle(const ExperimentConfig& config, std::uint64_t seed,
                            const fs::path& dir) {
  RunArtifact artifact = make_artifact(config, seed);
  const MultiAgentMDP mdp = MultiAgentMDP::random(
      config.num_agents, config.num_states, config.actions_per_agent, seed,
      KernelMode::kExplicitTable, config.reward_noise);
  const MembershipMatrix gamma = run_gamma(config, seed);
  const std::vector<AgentPolicy> policies =
      make_policies(mdp, config.train_config(seed));
  const FeatureMap phi = FeatureMap::random(mdp, config.m_omega);
  const oracle::ExactSolution exact = oracle::solve(mdp, policies, gamma, phi);

  ordered_json s;
  s["average_return"] = exact.average_return;
  s["community_returns"] = std::vector<double>(
      exact.community_returns.data(),
      exact.community_returns.data() + exact.community_returns.size());
  s["stationary"] = std::vector<double>(
      exact.stationary.data(), exact.stationary.data() + exact.stationary.size());
  std::vector<std::vector<double>> critics;
  for (int k = 0; k < exact.community_critics.cols(); ++k) {
    const Eigen::VectorXd col = exact.community_critics.col(k);
    critics.emplace_back(col.data(), col.data() + col.size());
  }
  s["community_critics"] = critics;
  artifact.summary = s;
  write_text(dir / "oracle.json", dump_json(s));
  return artifact;
}

RunArtifact run_mscore_sweep(const ExperimentConfig& config,
                             std::uint64_t seed, const fs::path& dir) {
  RunArtifact artifact = make_artifact(config, seed);
  ordered_json per_size = ordered_json::array();
  for (int n : config.mscore_sizes) {
    const MembershipMatrix gamma =
        sweep_membership(n, config.num_communities, config.dirichlet_alpha,
                         seed);
    rng::Counter deg(rng::mix64(seed ^ static_cast<std::uint64_t>(n)),
                     rng::kInit);
    Eigen::VectorXd theta(n);
    for (int i = 0; i < n; ++i)
      theta[i] =
          deg.uniform(config.mscore_degree_low, config.mscore_degree_high);
    Eigen::MatrixXd p = Eigen::MatrixXd::Constant(
        config.num_communities, config.num_communities,
        config.mscore_out_connectivity);
    p.diagonal().setConstant(config.mscore_in_connectivity);
    const mscore::DcmmModel model(gamma, theta, p);
    const Eigen::MatrixXd adjacency = mscore::generate_dcmm(model, seed);
    const MembershipMatrix estimated =
        mscore::estimate(adjacency, config.num_communities, 0.0, seed);
    const mscore::Alignment alignment = mscore::align(estimated, gamma);
    ordered_json entry;
    entry["n"] = n;
    entry["mean_l1_error"] = alignment.mean_l1_error;
    per_size.push_back(entry);
  }
  ordered_json s;
  s["per_size"] = per_size;
  artifact.summary = s;
  write_text(dir / "mscore.json", dump_json(s));
  return artifact;
}

RunArtifact run_transfer(const ExperimentConfig& config, std::uint64_t seed,
                         const fs::path& dir) {
  RunArtifact artifact = make_artifact(config, seed);
  const MultiAgentMDP mdp1 = MultiAgentMDP::random(
      config.num_agents, config.num_states, config.actions_per_agent, seed,
      KernelMode::kExplicitTable, config.reward_noise);
  const MembershipMatrix gamma = run_gamma(config, seed);
  const std::vector<AgentPolicy> policies =
      make_policies(mdp1, config.train_config(seed));
  const FeatureMap phi1 = FeatureMap::random(mdp1, config.m_omega);

  CriticStateQ critic = CriticStateQ::zero(config.m_omega,
                                           config.num_communities);
  for (int k = 0; k < config.num_communities; ++k)
    critic.omega.col(k) =
        oracle::critic_fixed_point(mdp1, policies, gamma, phi1, k);
  const CommunityLibrary library = make_library(
      critic, mdp1.seed(), "task1", config_fingerprint(config, seed));

  // Target task: same kernel and features, rewards shifted per community.
  const std::uint64_t jitter = rng::mix64(seed ^ 0x7472616e73666572ull);
  rng::Counter shift_gen(jitter, rng::kRewards);
  std::vector<Eigen::MatrixXd> rewards2(
      config.num_agents,
      Eigen::MatrixXd(config.num_states,
                      static_cast<int>(mdp1.num_joint_actions())));
  Eigen::MatrixXd delta(config.num_states * mdp1.num_joint_actions(),
                        config.num_communities);
  for (int r = 0; r < delta.rows(); ++r)
    for (int k = 0; k < config.num_communities; ++k)
      delta(r, k) = config.transfer_shift * (2.0 * shift_gen.next_unit() - 1.0);
  for (int i = 0; i < config.num_agents; ++i) {
    const Eigen::VectorXd gi = gamma.row(i);
    for (int s = 0; s < config.num_states; ++s)
      for (std::uint64_t a = 0; a < mdp1.num_joint_actions(); ++a) {
        const int row = s * static_cast<int>(mdp1.num_joint_actions()) +
                        static_cast<int>(a);
        rewards2[i](s, static_cast<int>(a)) =
            mdp1.reward(i, s, a) + delta.row(row).dot(gi);
      }
  }
  const MultiAgentMDP mdp2 = MultiAgentMDP::with_rewards(
      config.num_agents, config.num_states, config.actions_per_agent, seed,
      rewards2, config.reward_noise);
  const FeatureMap phi2 = FeatureMap::random(mdp2, config.m_omega);

  // Estimated membership: small perturbation of the truth, renormalized.
  rng::Counter hat_gen(jitter, rng::kDirichlet);
  Eigen::MatrixXd ghat = gamma.matrix();
  for (int i = 0; i < ghat.rows(); ++i) {
    for (int k = 0; k < ghat.cols(); ++k)
      ghat(i, k) = std::max(
          1e-6, ghat(i, k) + 0.05 * (2.0 * hat_gen.next_unit() - 1.0));
    ghat.row(i) /= ghat.row(i).sum();
  }
  const MembershipMatrix gamma_hat(ghat);

  const TransferTaskReport report =
      transfer_task_eval(library, mdp2, gamma, gamma_hat, policies, phi2);
  ordered_json s;
  s["max_abs_error"] = report.max_abs_error;
  s["mean_abs_error"] = report.mean_abs_error;
  s["membership_l1_error"] = report.membership_l1_error;
  s["realized_shifts"] = std::vector<double>(
      report.realized_shifts.data(),
      report.realized_shifts.data() + report.realized_shifts.size());
  artifact.summary = s;
  write_text(dir / "transfer.json", dump_json(s));
  return artifact;
}

}  // namespace

std::vector<RunArtifact> run_experiment(const ExperimentConfig& config) {
  config.validate();
  const fs::path out(config.out_dir);
  fs::create_directories(out);

  // Unique directory per run even for repeated seeds, so concurrent workers
  // never share files.
  std::vector<fs::path> dirs;
  std::map<std::uint64_t, int> counts;
  for (std::uint64_t seed : config.seeds) {
    const int repeat = counts[seed]++;
    std::string name = "seed_" + std::to_string(seed);
    if (repeat > 0) name += "_" + std::to_string(repeat + 1);
    dirs.push_back(out / name);
  }

  std::vector<TrainingTrace> community_traces(config.seeds.size());
  std::vector<TrainingTrace> baseline_traces(config.seeds.size());

  const auto run_one = [&](std::size_t idx) -> std::vector<RunArtifact> {
    const std::uint64_t seed = config.seeds[idx];
    const fs::path& dir = dirs[idx];
    fs::create_directories(dir);
    switch (config.kind) {
      case ExperimentKind::kFigure12:
      case ExperimentKind::kActive:
        return {run_single_train(config, seed, dir)};
      case ExperimentKind::kFigure3:
        return run_figure3_seed(config, seed, dir, &community_traces[idx],
                                &baseline_traces[idx]);
      case ExperimentKind::kDeskOracle:
        return {run_desk_oracle(config, seed, dir)};
      case ExperimentKind::kMscoreSweep:
        return {run_mscore_sweep(config, seed, dir)};
      case ExperimentKind::kTransfer:
        return {run_transfer(config, seed, dir)};
    }
    throw ConfigError("unknown experiment kind");
  };

  std::vector<std::future<std::vector<RunArtifact>>> futures;
  futures.reserve(config.seeds.size());
  for (std::size_t i = 0; i < config.seeds.size(); ++i)
    futures.push_back(
        std::async(std::launch::async, [&, i] { return run_one(i); }));

  std::vector<RunArtifact> artifacts;
  for (auto& f : futures)
    for (auto& a : f.get()) artifacts.push_back(std::move(a));

  if (config.kind == ExperimentKind::kFigure3) {
    const CompareReport report = compare(community_traces, baseline_traces);
    write_text(out / "compare.json", dump_json(report.to_json()));
  }
  return artifacts;
}

}  // namespace marl::harness
