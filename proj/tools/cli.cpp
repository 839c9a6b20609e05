#include "cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "splatsched/error.hpp"
#include "splatsched/partition.hpp"
#include "splatsched/placement.hpp"
#include "splatsched/scene.hpp"
#include "splatsched/simulator.hpp"

namespace splatsched::cli {

namespace {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

Json coefficients_json(const CostCoefficients& c) {
  return {{"alpha", c.alpha}, {"beta", c.beta}, {"gamma", c.gamma}, {"delta", c.delta}, {"p", c.p}};
}

Json simulation_defaults() {
  const ClusterTopology t;
  const SimConfig s;
  return {{"dataset", nullptr},
          {"out", nullptr},
          {"seed", s.seed},
          {"strategy", to_string(s.strategy)},
          {"topology",
           {{"machines", t.machines},
            {"gpus_per_machine", t.gpus_per_machine},
            {"inter_bandwidth", t.inter_bandwidth},
            {"intra_bandwidth", t.intra_bandwidth},
            {"compute_cost_per_point", t.compute_cost_per_point}}},
          {"epochs", s.epochs},
          {"batch_size", s.batch_size},
          {"patches_per_side", s.patches_per_side},
          {"group_size", s.group_size},
          {"granularity", "exact"},
          {"point_radius", s.point_radius},
          {"epsilon", s.locality.epsilon},
          {"partition_runs", s.locality.partition_runs},
          {"image_weight_multiplier", s.locality.image_weight_multiplier},
          {"inter", coefficients_json(s.locality.inter)},
          {"intra", coefficients_json(s.locality.intra)},
          {"max_sweeps", s.locality.max_sweeps},
          {"auto_tune", s.locality.auto_tune},
          {"stale_from_epoch", nullptr},
          {"async_placement", s.async_placement}};
}

Json scene_defaults() {
  return {{"kind", nullptr},        {"out", nullptr},  {"seed", 1},
          {"n_points", nullptr},    {"n_views", nullptr}, {"background_fraction", 0.05},
          {"duration", 1.0},        {"base", "aerial"}};
}

Json place_defaults() {
  return {{"access", nullptr},
          {"out", nullptr},
          {"topology", {{"machines", 1}, {"gpus_per_machine", 0}}},
          {"inter", coefficients_json(CostCoefficients::inter_node())},
          {"intra", coefficients_json(CostCoefficients::intra_node())},
          {"max_sweeps", 1000}};
}

// Rejects keys that the command does not know, so typos do not silently fall
// back to defaults.
void check_keys(const Json& given, const Json& known, const std::string& prefix) {
  if (!given.is_object()) throw FormatError(0, "config" + prefix + " must be a JSON object");
  for (const auto& [key, value] : given.items()) {
    if (!known.contains(key)) throw ParameterError(prefix + "/" + key, "unknown config field");
    if (known[key].is_object() && value.is_object()) check_keys(value, known[key], prefix + "/" + key);
  }
}

Json load_config(const std::string& path, const Json& defaults) {
  Json cfg = defaults;
  if (path.empty()) return cfg;
  std::ifstream in(path);
  if (!in) throw FormatError(0, "cannot open config " + path);
  Json file;
  try {
    file = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(e.byte, "malformed config " + path + ": " + e.what());
  }
  check_keys(file, defaults, "");
  cfg.merge_patch(file);
  return cfg;
}

// Command-line flags that override entries of the JSON config.
class Overrides {
 public:
  template <class T>
  void add(CLI::App* app, const std::string& flag, const std::string& pointer,
           const std::string& help) {
    auto value = std::make_shared<std::optional<T>>();
    app->add_option(flag, *value, help);
    apply_.push_back([value, pointer](Json& cfg) {
      if (*value) cfg[Json::json_pointer(pointer)] = **value;
    });
  }

  void add_flag(CLI::App* app, const std::string& flag, const std::string& pointer,
                const std::string& help) {
    CLI::Option* opt = app->add_flag(flag, help);
    apply_.push_back([opt, pointer](Json& cfg) {
      if (opt->count() > 0) cfg[Json::json_pointer(pointer)] = true;
    });
  }

  /// Norm parameter: a number or "inf".
  void add_norm(CLI::App* app, const std::string& flag, const std::string& pointer,
                const std::string& help) {
    auto value = std::make_shared<std::optional<std::string>>();
    app->add_option(flag, *value, help);
    apply_.push_back([value, pointer, flag](Json& cfg) {
      if (!*value) return;
      if (**value == "inf") {
        cfg[Json::json_pointer(pointer)] = "inf";
        return;
      }
      try {
        cfg[Json::json_pointer(pointer)] = std::stod(**value);
      } catch (const std::exception&) {
        throw ParameterError(flag, "expected a number or 'inf'");
      }
    });
  }

  void apply(Json& cfg) const {
    for (const auto& f : apply_) f(cfg);
  }

 private:
  std::vector<std::function<void(Json&)>> apply_;
};

template <class T>
T get(const Json& cfg, const std::string& pointer) {
  const Json::json_pointer ptr(pointer);
  if (!cfg.contains(ptr) || cfg.at(ptr).is_null()) {
    throw ParameterError(pointer.substr(1), "required but not set");
  }
  try {
    return cfg.at(ptr).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(0, "config field " + pointer + " has the wrong type: " + e.what());
  }
}

template <class T>
std::optional<T> get_optional(const Json& cfg, const std::string& pointer) {
  const Json::json_pointer ptr(pointer);
  if (!cfg.contains(ptr) || cfg.at(ptr).is_null()) return std::nullopt;
  return get<T>(cfg, pointer);
}

template <class T>
T get_count(const Json& cfg, const std::string& pointer) {
  const auto v = get<double>(cfg, pointer);
  if (!(v >= 0.0) || v != std::floor(v) || v > 9.0e15) {
    throw ParameterError(pointer.substr(1), "must be a non-negative integer");
  }
  return static_cast<T>(v);
}

double get_norm(const Json& cfg, const std::string& pointer) {
  const Json::json_pointer ptr(pointer);
  if (cfg.contains(ptr) && cfg.at(ptr).is_string()) {
    if (cfg.at(ptr).get<std::string>() == "inf") return kInfiniteNorm;
    throw ParameterError(pointer.substr(1), "expected a number or 'inf'");
  }
  return get<double>(cfg, pointer);
}

CostCoefficients get_coefficients(const Json& cfg, const std::string& prefix) {
  CostCoefficients c;
  c.alpha = get<double>(cfg, prefix + "/alpha");
  c.beta = get<double>(cfg, prefix + "/beta");
  c.gamma = get<double>(cfg, prefix + "/gamma");
  c.delta = get<double>(cfg, prefix + "/delta");
  c.p = get_norm(cfg, prefix + "/p");
  c.validate();
  return c;
}

void add_coefficient_flags(Overrides& o, CLI::App* app, const std::string& level) {
  const std::string base = "/" + level;
  o.add<double>(app, "--" + level + "-alpha", base + "/alpha", level + " alpha");
  o.add<double>(app, "--" + level + "-beta", base + "/beta", level + " beta");
  o.add<double>(app, "--" + level + "-gamma", base + "/gamma", level + " gamma");
  o.add<double>(app, "--" + level + "-delta", base + "/delta", level + " delta");
  o.add_norm(app, "--" + level + "-p", base + "/p", level + " norm (number or inf)");
}

fs::path prepare_out(const Json& cfg) {
  const fs::path out = get<std::string>(cfg, "/out");
  fs::create_directories(out);
  return out;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path);
  if (!f) throw FormatError(0, "cannot write " + path.string());
  return f;
}

void echo_config(const Json& cfg, const fs::path& out) {
  open_out(out / "config.json") << cfg.dump(2) << '\n';
}

ClusterTopology get_topology(const Json& cfg) {
  ClusterTopology t;
  t.machines = get_count<std::uint32_t>(cfg, "/topology/machines");
  t.gpus_per_machine = get_count<std::uint32_t>(cfg, "/topology/gpus_per_machine");
  t.inter_bandwidth = get<double>(cfg, "/topology/inter_bandwidth");
  t.intra_bandwidth = get<double>(cfg, "/topology/intra_bandwidth");
  t.compute_cost_per_point = get<double>(cfg, "/topology/compute_cost_per_point");
  t.validate();
  return t;
}

SimConfig get_sim_config(const Json& cfg) {
  SimConfig s;
  s.strategy = strategy_from_string(get<std::string>(cfg, "/strategy"));
  s.seed = get<std::uint64_t>(cfg, "/seed");
  s.epochs = get_count<std::uint32_t>(cfg, "/epochs");
  s.batch_size = get_count<std::uint32_t>(cfg, "/batch_size");
  s.patches_per_side = get_count<std::uint32_t>(cfg, "/patches_per_side");
  s.group_size = get_count<std::size_t>(cfg, "/group_size");
  if (s.group_size < 1) throw ParameterError("group_size", "must be >= 1");
  const auto gran = get<std::string>(cfg, "/granularity");
  if (gran == "exact") {
    s.granularity = Granularity::kExact;
  } else if (gran == "group") {
    s.granularity = Granularity::kGroupApprox;
  } else {
    throw ParameterError("granularity", "expected 'exact' or 'group'");
  }
  s.point_radius = get<double>(cfg, "/point_radius");
  if (!(s.point_radius >= 0.0)) throw ParameterError("point_radius", "must be >= 0");
  s.locality.epsilon = get<double>(cfg, "/epsilon");
  if (!(s.locality.epsilon >= 0.0)) throw ParameterError("epsilon", "must be >= 0");
  s.locality.partition_runs = get_count<std::uint32_t>(cfg, "/partition_runs");
  if (s.locality.partition_runs < 1) throw ParameterError("partition_runs", "must be >= 1");
  s.locality.image_weight_multiplier = get<double>(cfg, "/image_weight_multiplier");
  s.locality.inter = get_coefficients(cfg, "/inter");
  s.locality.intra = get_coefficients(cfg, "/intra");
  s.locality.max_sweeps = get_count<std::size_t>(cfg, "/max_sweeps");
  s.locality.auto_tune = get<bool>(cfg, "/auto_tune");
  if (auto e = get_optional<std::int64_t>(cfg, "/stale_from_epoch")) {
    if (*e < 0) throw ParameterError("stale_from_epoch", "must be >= 0");
    s.staleness = {true, static_cast<std::uint32_t>(*e)};
  }
  s.async_placement = get<bool>(cfg, "/async_placement");
  return s;
}

void add_simulation_flags(Overrides& o, CLI::App* app) {
  o.add<std::string>(app, "--dataset", "/dataset", "dataset header (dataset.json)");
  o.add<std::string>(app, "--out", "/out", "output directory");
  o.add<std::uint64_t>(app, "--seed", "/seed", "random seed");
  o.add<std::string>(app, "--strategy", "/strategy", "random or locality");
  o.add<std::uint32_t>(app, "--machines", "/topology/machines", "machines M");
  o.add<std::uint32_t>(app, "--gpus-per-machine", "/topology/gpus_per_machine", "GPUs per machine");
  o.add<double>(app, "--inter-bandwidth", "/topology/inter_bandwidth", "bytes/s between machines");
  o.add<double>(app, "--intra-bandwidth", "/topology/intra_bandwidth", "bytes/s inside a machine");
  o.add<double>(app, "--compute-cost", "/topology/compute_cost_per_point", "seconds per point");
  o.add<std::uint32_t>(app, "--epochs", "/epochs", "training epochs");
  o.add<std::uint32_t>(app, "--batch-size", "/batch_size", "views per batch");
  o.add<std::uint32_t>(app, "-P,--patches-per-side", "/patches_per_side", "patches per image side");
  o.add<std::size_t>(app, "-G,--group-size", "/group_size", "points per Z-order group");
  o.add<std::string>(app, "--granularity", "/granularity", "exact or group");
  o.add<double>(app, "--point-radius", "/point_radius", "culling radius per point");
  o.add<double>(app, "--epsilon", "/epsilon", "partition balance tolerance");
  o.add<std::uint32_t>(app, "--partition-runs", "/partition_runs", "partitioner restarts");
  o.add<std::size_t>(app, "--max-sweeps", "/max_sweeps", "local search sweep limit");
  o.add<std::int64_t>(app, "--stale-from-epoch", "/stale_from_epoch",
                      "decide placement on matrices recorded in this epoch");
  o.add_flag(app, "--auto-tune", "/auto_tune", "derive machine-level coefficients each step");
  add_coefficient_flags(o, app, "inter");
  add_coefficient_flags(o, app, "intra");
}

void write_report(const EpochReport& r, const fs::path& dir) {
  fs::create_directories(dir);
  auto json = open_out(dir / "report.json");
  write_report_json(r, json);
  auto csv = open_out(dir / "iterations.csv");
  write_iterations_csv(r, csv);
}

void cmd_gen_scene(const Json& cfg) {
  const auto kind = get<std::string>(cfg, "/kind");
  const fs::path out = prepare_out(cfg);
  const auto seed = get<std::uint64_t>(cfg, "/seed");
  const auto n_points = get_optional<double>(cfg, "/n_points");
  const auto n_views = get_optional<double>(cfg, "/n_views");
  if (n_points && !(*n_points >= 1.0)) throw ParameterError("n_points", "must be >= 1");
  if (n_views && !(*n_views >= 1.0)) throw ParameterError("n_views", "must be >= 1");

  auto make = [&](const std::string& scene) {
    if (scene == "aerial") {
      AerialSceneParams p;
      p.seed = seed;
      if (n_points) p.n_points = get_count<std::size_t>(cfg, "/n_points");
      if (n_views) p.n_views = get_count<std::size_t>(cfg, "/n_views");
      return generate_aerial_scene(p);
    }
    if (scene == "street") {
      StreetSceneParams p;
      p.seed = seed;
      p.waypoints = default_street_waypoints();
      p.background_fraction = get<double>(cfg, "/background_fraction");
      if (n_points) p.n_points = get_count<std::size_t>(cfg, "/n_points");
      if (n_views) p.n_views = get_count<std::size_t>(cfg, "/n_views");
      return generate_street_scene(p);
    }
    throw ParameterError("kind", "unknown scene '" + scene + "' (aerial, street, temporal)");
  };

  SceneDataset ds;
  if (kind == "temporal") {
    const auto base = get<std::string>(cfg, "/base");
    if (base == "temporal") throw ParameterError("base", "must be aerial or street");
    ds = make_temporal(make(base), seed, get<double>(cfg, "/duration"));
  } else {
    ds = make(kind);
  }
  save_dataset(ds, out / "dataset.json");
  echo_config(cfg, out);
  std::cout << "wrote " << (out / "dataset.json").string() << " (" << ds.cloud.size()
            << " points, " << ds.views.size() << " views)\n";
}

void cmd_partition(const Json& cfg) {
  const SceneDataset ds = load_dataset(get<std::string>(cfg, "/dataset"));
  const ClusterTopology topo = get_topology(cfg);
  const SimConfig sim = get_sim_config(cfg);
  const fs::path out = prepare_out(cfg);

  const GroupedCloud grouped = zorder_group(ds.cloud, sim.group_size);
  const BipartiteGraph graph = build_bipartite_graph(grouped, ds, sim.point_radius);
  HierarchicalOptions opt;
  opt.machines = topo.machines;
  opt.gpus_per_machine = topo.gpus_per_machine;
  opt.epsilon = sim.locality.epsilon;
  opt.seed = sim.seed;
  opt.runs = sim.locality.partition_runs;
  opt.image_weight_multiplier = sim.locality.image_weight_multiplier;
  const HierarchicalResult result = hierarchical_partition(graph, opt);

  auto csv = open_out(out / "partition.csv");
  write_partition_csv(result.assignment, csv);
  auto quality = open_out(out / "quality.json");
  write_quality_json(result, quality);
  echo_config(cfg, out);
  std::cout << "cut " << result.gpu_quality.edge_cut << ", balance " << result.gpu_quality.balance
            << '\n';
}

void cmd_place(const Json& cfg) {
  const std::string path = get<std::string>(cfg, "/access");
  std::ifstream in(path);
  if (!in) throw FormatError(0, "cannot open " + path);
  const AccessMatrix access = read_access_csv(in);
  const auto machines = get_count<std::uint32_t>(cfg, "/topology/machines");
  auto gpm = get_count<std::uint32_t>(cfg, "/topology/gpus_per_machine");
  if (machines < 1) throw ParameterError("topology/machines", "must be >= 1");
  if (gpm == 0) {
    if (access.cols() % machines != 0) {
      throw ConstraintError(std::to_string(access.cols()) + " GPU columns do not split over " +
                            std::to_string(machines) + " machines");
    }
    gpm = static_cast<std::uint32_t>(access.cols() / machines);
  }
  const CostCoefficients inter = get_coefficients(cfg, "/inter");
  const CostCoefficients intra = get_coefficients(cfg, "/intra");
  SearchBudget budget;
  budget.max_sweeps = get_count<std::size_t>(cfg, "/max_sweeps");
  const fs::path out = prepare_out(cfg);

  const auto placed = hierarchical_place(access, machines, gpm, inter, intra, budget);
  const ObjectiveBreakdown b = objective(access, placed.solution, inter);
  auto csv = open_out(out / "solution.csv");
  write_solution_csv(placed.solution, csv);
  auto json = open_out(out / "objective.json");
  write_breakdown_json(b, inter, json);
  echo_config(cfg, out);
  std::cout << "total_local " << b.total_local << ", max_send " << b.max_send << ", max_recv "
            << b.max_recv << ", max_comp " << b.max_comp << '\n';
}

void cmd_simulate(const Json& cfg) {
  const SceneDataset ds = load_dataset(get<std::string>(cfg, "/dataset"));
  const ClusterTopology topo = get_topology(cfg);
  const SimConfig sim = get_sim_config(cfg);
  const fs::path out = prepare_out(cfg);
  const EpochReport r = run_training_sim(ds, topo, sim);
  write_report(r, out);
  echo_config(cfg, out);
  std::cout << to_string(r.strategy) << ": " << r.totals.total_inter_forward
            << " inter-machine points over " << r.iterations.size() << " iterations\n";
}

void cmd_compare(const Json& cfg) {
  const SceneDataset ds = load_dataset(get<std::string>(cfg, "/dataset"));
  const ClusterTopology topo = get_topology(cfg);
  SimConfig sim = get_sim_config(cfg);
  const fs::path out = prepare_out(cfg);

  sim.strategy = StrategyKind::kRandom;
  const EpochReport baseline = run_training_sim(ds, topo, sim);
  sim.strategy = StrategyKind::kLocalityAware;
  const EpochReport ours = run_training_sim(ds, topo, sim);
  write_report(baseline, out / "random");
  write_report(ours, out / "locality");
  auto json = open_out(out / "reduction.json");
  write_reduction_json(baseline, ours, json);
  echo_config(cfg, out);
  std::cout << "reduction " << comm_reduction(baseline, ours) << "%\n";
}

int exit_code(Error::Category c) {
  switch (c) {
    case Error::Category::kUsage:
      return kExitUsage;
    case Error::Category::kData:
      return kExitData;
    case Error::Category::kConstraint:
      return kExitConstraint;
  }
  return 1;
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"Locality-aware placement and communication simulator for distributed splat training"};
  app.require_subcommand(1);

  struct Command {
    CLI::App* app;
    std::string config_path;
    Overrides overrides;
    Json (*defaults)();
    void (*action)(const Json&);
  };
  std::vector<std::unique_ptr<Command>> commands;
  auto add_command = [&](const std::string& name, const std::string& help, Json (*defaults)(),
                         void (*action)(const Json&)) -> Command& {
    auto cmd = std::make_unique<Command>();
    cmd->app = app.add_subcommand(name, help);
    cmd->app->add_option("--config", cmd->config_path, "JSON config; flags override its values");
    cmd->defaults = defaults;
    cmd->action = action;
    commands.push_back(std::move(cmd));
    return *commands.back();
  };

  {
    Command& c = add_command("gen-scene", "generate a synthetic dataset", scene_defaults, cmd_gen_scene);
    c.overrides.add<std::string>(c.app, "kind,--kind", "/kind", "aerial, street or temporal");
    c.overrides.add<std::string>(c.app, "--out", "/out", "output directory");
    c.overrides.add<std::uint64_t>(c.app, "--seed", "/seed", "random seed");
    c.overrides.add<std::size_t>(c.app, "--points", "/n_points", "number of points");
    c.overrides.add<std::size_t>(c.app, "--views", "/n_views", "number of camera views");
    c.overrides.add<double>(c.app, "--background", "/background_fraction",
                            "street background point fraction");
    c.overrides.add<double>(c.app, "--duration", "/duration", "temporal scene duration");
    c.overrides.add<std::string>(c.app, "--base", "/base", "base scene for temporal: aerial or street");
  }
  {
    Command& c = add_command("partition", "offline point partitioning", simulation_defaults,
                             cmd_partition);
    add_simulation_flags(c.overrides, c.app);
  }
  {
    Command& c = add_command("place", "place patches from an access-matrix CSV", place_defaults,
                             cmd_place);
    c.overrides.add<std::string>(c.app, "--access", "/access", "access matrix CSV");
    c.overrides.add<std::string>(c.app, "--out", "/out", "output directory");
    c.overrides.add<std::uint32_t>(c.app, "--machines", "/topology/machines", "machines M");
    c.overrides.add<std::uint32_t>(c.app, "--gpus-per-machine", "/topology/gpus_per_machine",
                                   "GPUs per machine (0: all columns / M)");
    c.overrides.add<std::size_t>(c.app, "--max-sweeps", "/max_sweeps", "local search sweep limit");
    add_coefficient_flags(c.overrides, c.app, "inter");
    add_coefficient_flags(c.overrides, c.app, "intra");
  }
  {
    Command& c = add_command("simulate", "simulate training with one strategy",
                             simulation_defaults, cmd_simulate);
    add_simulation_flags(c.overrides, c.app);
  }
  {
    Command& c = add_command("compare", "simulate both strategies and report the reduction",
                             simulation_defaults, cmd_compare);
    add_simulation_flags(c.overrides, c.app);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    for (const auto& cmd : commands) {
      if (!cmd->app->parsed()) continue;
      Json cfg = load_config(cmd->config_path, cmd->defaults());
      cmd->overrides.apply(cfg);
      cmd->action(cfg);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.category());
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitOk;
}

}  // namespace splatsched::cli
