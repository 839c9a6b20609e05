#include "splatsched/simulator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>

#include "json.hpp"
#include "splatsched/error.hpp"
#include "splatsched/random.hpp"

namespace splatsched {

namespace {

constexpr std::uint64_t kScheduleStream = 11;
constexpr std::uint64_t kPointShuffleStream = 12;
constexpr std::uint64_t kViewOwnerStream = 13;
constexpr std::uint64_t kPatchShuffleStream = 14;
constexpr std::uint64_t kPartitionStream = 15;

std::int64_t sum_of(const std::vector<std::int64_t>& v) {
  std::int64_t s = 0;
  for (auto x : v) s += x;
  return s;
}

nlohmann::ordered_json coefficients_json(const CostCoefficients& c) {
  nlohmann::ordered_json j = {
      {"alpha", c.alpha}, {"beta", c.beta}, {"gamma", c.gamma}, {"delta", c.delta}};
  if (std::isinf(c.p)) {
    j["p"] = "inf";
  } else {
    j["p"] = c.p;
  }
  return j;
}

}  // namespace

void ClusterTopology::validate() const {
  if (machines < 1) throw ParameterError("machines", "must be >= 1");
  if (gpus_per_machine < 1) throw ParameterError("gpus_per_machine", "must be >= 1");
  if (!(inter_bandwidth > 0.0) || !std::isfinite(inter_bandwidth)) {
    throw ParameterError("inter_bandwidth", "must be positive");
  }
  if (!(intra_bandwidth > 0.0) || !std::isfinite(intra_bandwidth)) {
    throw ParameterError("intra_bandwidth", "must be positive");
  }
  if (intra_bandwidth < inter_bandwidth) {
    throw ParameterError("intra_bandwidth", "must be >= inter_bandwidth");
  }
  if (!(compute_cost_per_point >= 0.0) || !std::isfinite(compute_cost_per_point)) {
    throw ParameterError("compute_cost_per_point", "must be non-negative");
  }
}

std::string to_string(StrategyKind kind) {
  return kind == StrategyKind::kRandom ? "random" : "locality";
}

StrategyKind strategy_from_string(const std::string& name) {
  if (name == "random") return StrategyKind::kRandom;
  if (name == "locality" || name == "locality_aware") return StrategyKind::kLocalityAware;
  throw ParameterError("strategy", "unknown strategy '" + name + "' (random, locality)");
}

OfflinePlacement prepare_offline(const SceneDataset& dataset, const ClusterTopology& topology,
                                 const SimConfig& config) {
  topology.validate();
  OfflinePlacement out;
  out.grouped = zorder_group(dataset.cloud, config.group_size);
  const std::size_t n = dataset.cloud.size();
  const std::uint32_t gpus = topology.n_gpus();

  if (config.strategy == StrategyKind::kRandom) {
    std::vector<std::uint32_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<std::uint32_t>(i);
    Rng rng(derive_seed(config.seed, kPointShuffleStream));
    rng.shuffle(order);
    std::vector<std::uint32_t> owner_of_input(n);
    for (std::size_t pos = 0; pos < n; ++pos) {
      owner_of_input[order[pos]] = static_cast<std::uint32_t>(pos * gpus / n);
    }
    out.owner.resize(n);
    for (std::size_t s = 0; s < n; ++s) out.owner[s] = owner_of_input[out.grouped.original_index[s]];

    Rng view_rng(derive_seed(config.seed, kViewOwnerStream));
    out.view_machine.resize(dataset.views.size());
    for (auto& m : out.view_machine) m = static_cast<std::uint32_t>(view_rng.below(topology.machines));
    return out;
  }

  const BipartiteGraph graph = build_bipartite_graph(out.grouped, dataset, config.point_radius);
  HierarchicalOptions opt;
  opt.machines = topology.machines;
  opt.gpus_per_machine = topology.gpus_per_machine;
  opt.epsilon = config.locality.epsilon;
  opt.seed = derive_seed(config.seed, kPartitionStream);
  opt.runs = config.locality.partition_runs;
  opt.image_weight_multiplier = config.locality.image_weight_multiplier;
  out.partition = hierarchical_partition(graph, opt);
  out.owner = point_owners(out.grouped, out.partition->assignment);
  out.view_machine = image_ownership(out.partition->assignment, graph);
  return out;
}

LegLoads IterationTrace::backward() const {
  return {forward.recv_intra, forward.recv_inter, forward.send_intra, forward.send_inter};
}

AccessMatrix IterationTrace::backward_transfers() const {
  AccessMatrix t(transfers.cols(), transfers.rows());
  for (std::size_t a = 0; a < transfers.rows(); ++a) {
    for (std::size_t b = 0; b < transfers.cols(); ++b) t(b, a) = transfers(a, b);
  }
  return t;
}

std::int64_t IterationTrace::transferred() const {
  return sum_of(forward.send_intra) + sum_of(forward.send_inter);
}

std::int64_t IterationTrace::inter_points() const { return sum_of(forward.send_inter); }

std::vector<double> estimate_gpu_times(const IterationTrace& trace,
                                       const ClusterTopology& topology) {
  const double bpp = static_cast<double>(trace.bytes_per_point);
  const std::size_t n = trace.comp.size();
  std::vector<double> times(n, 0.0);
  for (const LegLoads& leg : {trace.forward, trace.backward()}) {
    for (std::size_t k = 0; k < n; ++k) {
      const double inter = static_cast<double>(leg.send_inter[k] + leg.recv_inter[k]) * bpp;
      const double intra = static_cast<double>(leg.send_intra[k] + leg.recv_intra[k]) * bpp;
      times[k] += static_cast<double>(trace.comp[k]) * topology.compute_cost_per_point +
                  inter / topology.inter_bandwidth + intra / topology.intra_bandwidth;
    }
  }
  return times;
}

double estimate_step_time(const IterationTrace& trace, const ClusterTopology& topology) {
  const double bpp = static_cast<double>(trace.bytes_per_point);
  double total = trace.placement_seconds;
  for (const LegLoads& leg : {trace.forward, trace.backward()}) {
    double leg_max = 0.0;
    for (std::size_t k = 0; k < trace.comp.size(); ++k) {
      const double inter = static_cast<double>(leg.send_inter[k] + leg.recv_inter[k]) * bpp;
      const double intra = static_cast<double>(leg.send_intra[k] + leg.recv_intra[k]) * bpp;
      leg_max = std::max(leg_max, static_cast<double>(trace.comp[k]) * topology.compute_cost_per_point +
                                      inter / topology.inter_bandwidth +
                                      intra / topology.intra_bandwidth);
    }
    total += leg_max;
  }
  return total;
}

ReportAggregates aggregate(std::span<const IterationTrace> iterations) {
  ReportAggregates a;
  double comp_sum = 0.0;
  std::size_t comp_samples = 0;
  double imbalance_sum = 0.0;
  std::size_t hits = 0, patches = 0;
  for (const auto& t : iterations) {
    a.total_inter_forward += sum_of(t.forward.send_inter);
    a.total_intra_forward += sum_of(t.forward.send_intra);
    a.total_access += t.total_access;
    std::int64_t it_max = 0, it_sum = 0;
    for (auto c : t.comp) {
      it_max = std::max(it_max, c);
      it_sum += c;
    }
    a.max_comp = std::max(a.max_comp, it_max);
    comp_sum += static_cast<double>(it_sum);
    comp_samples += t.comp.size();
    const double mean = t.comp.empty() ? 0.0 : static_cast<double>(it_sum) / t.comp.size();
    imbalance_sum += mean > 0.0 ? static_cast<double>(it_max) / mean : 1.0;
    hits += t.ownership_hits;
    patches += t.patches;
    a.total_est_time += t.est_time;
  }
  a.total_inter_both = 2 * a.total_inter_forward;
  a.mean_comp = comp_samples ? comp_sum / static_cast<double>(comp_samples) : 0.0;
  a.mean_comp_imbalance = iterations.empty() ? 1.0 : imbalance_sum / iterations.size();
  a.ownership_hit_rate = patches ? static_cast<double>(hits) / static_cast<double>(patches) : 0.0;
  return a;
}

std::uint32_t suggest_patches_per_side(std::uint32_t batch, std::uint32_t n_gpus) {
  for (std::uint32_t p = 1; p <= 64; ++p) {
    if ((std::uint64_t{batch} * p * p) % n_gpus == 0) return p;
  }
  return 0;
}

Simulator::Simulator(const SceneDataset& dataset, const ClusterTopology& topology,
                     const SimConfig& config)
    : dataset_(dataset), topology_(topology), config_(config) {
  topology_.validate();
  if (config_.epochs < 1) throw ParameterError("epochs", "must be >= 1");
  if (config_.batch_size < 1) throw ParameterError("batch_size", "must be >= 1");
  if (config_.batch_size > dataset_.views.size()) {
    throw ParameterError("batch_size", "exceeds the number of views (" +
                                           std::to_string(dataset_.views.size()) + ")");
  }
  if (config_.patches_per_side < 1) throw ParameterError("P", "must be >= 1");
  if (config_.staleness.enabled && config_.staleness.from_epoch >= config_.epochs) {
    throw ParameterError("stale_from_epoch", "must be below the number of epochs");
  }
  if (config_.strategy == StrategyKind::kLocalityAware) {
    config_.locality.inter.validate();
    config_.locality.intra.validate();
  }
  offline_ = prepare_offline(dataset_, topology_, config_);
}

std::vector<std::vector<std::uint32_t>> Simulator::schedule() const {
  std::vector<std::vector<std::uint32_t>> out;
  const std::size_t n_views = dataset_.views.size();
  for (std::uint32_t e = 0; e < config_.epochs; ++e) {
    std::vector<std::uint32_t> order(n_views);
    for (std::size_t i = 0; i < n_views; ++i) order[i] = static_cast<std::uint32_t>(i);
    Rng rng(derive_seed(derive_seed(config_.seed, kScheduleStream), e));
    rng.shuffle(order);
    for (std::size_t b = 0; b + config_.batch_size <= n_views; b += config_.batch_size) {
      out.emplace_back(order.begin() + b, order.begin() + b + config_.batch_size);
    }
  }
  return out;
}

AccessMatrix Simulator::placement_matrix(std::span<const std::uint32_t> batch,
                                         const AccessMatrix& fresh, std::uint32_t epoch) {
  const std::size_t per_view = std::size_t{config_.patches_per_side} * config_.patches_per_side;
  const std::size_t cols = fresh.cols();
  const Staleness& s = config_.staleness;
  if (!s.enabled) return fresh;
  if (epoch == s.from_epoch) {
    for (std::size_t v = 0; v < batch.size(); ++v) {
      std::vector<std::int64_t> rows(per_view * cols);
      for (std::size_t j = 0; j < per_view; ++j) {
        for (std::size_t k = 0; k < cols; ++k) rows[j * cols + k] = fresh(v * per_view + j, k);
      }
      recorded_rows_[batch[v]] = std::move(rows);
    }
    return fresh;
  }
  if (epoch < s.from_epoch) return fresh;
  AccessMatrix stale = fresh;
  for (std::size_t v = 0; v < batch.size(); ++v) {
    auto it = recorded_rows_.find(batch[v]);
    if (it == recorded_rows_.end()) continue;  // not seen in the recording epoch
    for (std::size_t j = 0; j < per_view; ++j) {
      for (std::size_t k = 0; k < cols; ++k) stale(v * per_view + j, k) = it->second[j * cols + k];
    }
  }
  return stale;
}

PlacementSolution Simulator::place(const AccessMatrix& access, std::uint64_t iteration) {
  const std::uint32_t gpus = topology_.n_gpus();
  if (config_.strategy == StrategyKind::kRandom) {
    std::vector<std::uint32_t> order(access.rows());
    for (std::size_t j = 0; j < order.size(); ++j) order[j] = static_cast<std::uint32_t>(j);
    Rng rng(derive_seed(derive_seed(config_.seed, kPatchShuffleStream), iteration));
    rng.shuffle(order);
    PlacementSolution w{std::vector<std::uint32_t>(access.rows()), gpus};
    for (std::size_t i = 0; i < order.size(); ++i) w.gpu_of_patch[order[i]] = static_cast<std::uint32_t>(i % gpus);
    return w;
  }
  const LocalityConfig& lc = config_.locality;
  CostCoefficients inter = lc.inter;
  if (lc.auto_tune && last_stats_ && last_stats_->t_comm + last_stats_->t_comp > 0.0) {
    inter = auto_coefficients(*last_stats_, lc.inter.p);
  }
  SearchBudget budget;
  budget.max_sweeps = lc.max_sweeps;
  return hierarchical_place(access, topology_.machines, topology_.gpus_per_machine, inter,
                            lc.intra, budget)
      .solution;
}

IterationTrace Simulator::run_iteration(std::span<const std::uint32_t> batch,
                                        std::uint64_t iteration, std::uint32_t epoch) {
  if (batch.empty()) throw ParameterError("batch", "must not be empty");
  const std::uint32_t gpus = topology_.n_gpus();
  const std::uint32_t p = config_.patches_per_side;
  const std::size_t per_view = std::size_t{p} * p;
  const std::uint64_t n_patches = batch.size() * per_view;
  if (n_patches % gpus != 0) {
    const std::uint32_t hint = suggest_patches_per_side(static_cast<std::uint32_t>(batch.size()), gpus);
    throw ConstraintError(std::to_string(n_patches) + " patches per batch are not divisible by " +
                          std::to_string(gpus) + " GPUs" +
                          (hint ? "; try P = " + std::to_string(hint) : std::string()));
  }

  std::vector<CameraView> views;
  views.reserve(batch.size());
  for (auto v : batch) {
    if (v >= dataset_.views.size()) throw ParameterError("batch", "view index out of range");
    views.push_back(dataset_.views[v]);
  }
  AccessOptions opt;
  opt.granularity = config_.granularity;
  opt.mode = dataset_.profile.culling_mode;
  opt.point_radius = config_.point_radius;
  const AccessMatrix fresh = build_access_matrix(offline_.grouped, offline_.owner, gpus, views, p, opt);
  const AccessMatrix decide = placement_matrix(batch, fresh, epoch);

  IterationTrace t;
  t.iteration = iteration;
  t.epoch = epoch;
  t.views.assign(batch.begin(), batch.end());
  t.bytes_per_point = dataset_.profile.bytes_per_point();
  const auto start = std::chrono::steady_clock::now();
  t.placement = place(decide, iteration);
  if (!config_.async_placement) {
    t.placement_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
  check_cardinality(t.placement, fresh.rows());

  // Accounting against the fresh matrix.
  t.forward = {std::vector<std::int64_t>(gpus, 0), std::vector<std::int64_t>(gpus, 0),
               std::vector<std::int64_t>(gpus, 0), std::vector<std::int64_t>(gpus, 0)};
  t.comp.assign(gpus, 0);
  t.transfers = AccessMatrix(gpus, gpus);
  t.patches = fresh.rows();
  for (std::size_t j = 0; j < fresh.rows(); ++j) {
    const std::uint32_t dst = t.placement.gpu_of_patch[j];
    const std::uint32_t dst_machine = topology_.machine_of(dst);
    for (std::uint32_t k = 0; k < gpus; ++k) {
      const std::int64_t a = fresh(j, k);
      t.total_access += a;
      t.comp[dst] += a;
      if (k == dst) {
        t.total_local += a;
        continue;
      }
      t.transfers(k, dst) += a;
      if (topology_.machine_of(k) == dst_machine) {
        t.forward.send_intra[k] += a;
        t.forward.recv_intra[dst] += a;
      } else {
        t.forward.send_inter[k] += a;
        t.forward.recv_inter[dst] += a;
      }
    }
    if (offline_.view_machine[batch[j / per_view]] == dst_machine) ++t.ownership_hits;
  }
  t.gpu_time = estimate_gpu_times(t, topology_);
  t.est_time = estimate_step_time(t, topology_);

  // Profiler view for auto-tuning: machine-level loads of the forward leg.
  ProfilerStats stats;
  std::vector<std::int64_t> m_send(topology_.machines, 0), m_recv(topology_.machines, 0);
  const double bpp = static_cast<double>(t.bytes_per_point);
  for (std::uint32_t k = 0; k < gpus; ++k) {
    m_send[topology_.machine_of(k)] += t.forward.send_inter[k];
    m_recv[topology_.machine_of(k)] += t.forward.recv_inter[k];
    stats.t_comp = std::max(stats.t_comp,
                            static_cast<double>(t.comp[k]) * topology_.compute_cost_per_point);
    stats.t_comm = std::max(
        stats.t_comm,
        static_cast<double>(t.forward.send_inter[k] + t.forward.recv_inter[k]) * bpp /
                topology_.inter_bandwidth +
            static_cast<double>(t.forward.send_intra[k] + t.forward.recv_intra[k]) * bpp /
                topology_.intra_bandwidth);
  }
  stats.max_send = *std::max_element(m_send.begin(), m_send.end());
  stats.max_recv = *std::max_element(m_recv.begin(), m_recv.end());
  last_stats_ = stats;
  return t;
}

EpochReport Simulator::run() {
  EpochReport r;
  r.strategy = config_.strategy;
  r.config = config_;
  r.topology = topology_;
  r.schedule = schedule();
  const std::size_t per_epoch = dataset_.views.size() / config_.batch_size;
  r.iterations.reserve(r.schedule.size());
  for (std::size_t i = 0; i < r.schedule.size(); ++i) {
    r.iterations.push_back(
        run_iteration(r.schedule[i], i, static_cast<std::uint32_t>(i / per_epoch)));
  }
  r.totals = aggregate(r.iterations);
  return r;
}

EpochReport run_training_sim(const SceneDataset& dataset, const ClusterTopology& topology,
                             const SimConfig& config) {
  Simulator sim(dataset, topology, config);
  return sim.run();
}

double comm_reduction(const EpochReport& baseline, const EpochReport& ours) {
  if (baseline.schedule != ours.schedule) {
    throw ComparisonError("reports were produced with different batch schedules");
  }
  if (baseline.totals.total_inter_forward == 0) return 0.0;
  return 100.0 * (1.0 - static_cast<double>(ours.totals.total_inter_forward) /
                            static_cast<double>(baseline.totals.total_inter_forward));
}

void write_report_json(const EpochReport& report, std::ostream& out) {
  const SimConfig& c = report.config;
  nlohmann::ordered_json j;
  j["strategy"] = to_string(report.strategy);
  j["config"] = {{"seed", c.seed},
                 {"epochs", c.epochs},
                 {"batch_size", c.batch_size},
                 {"patches_per_side", c.patches_per_side},
                 {"group_size", c.group_size},
                 {"granularity", c.granularity == Granularity::kExact ? "exact" : "group"},
                 {"point_radius", c.point_radius},
                 {"stale", c.staleness.enabled},
                 {"stale_from_epoch", c.staleness.from_epoch},
                 {"async_placement", c.async_placement}};
  if (report.strategy == StrategyKind::kLocalityAware) {
    j["config"]["epsilon"] = c.locality.epsilon;
    j["config"]["partition_runs"] = c.locality.partition_runs;
    j["config"]["inter"] = coefficients_json(c.locality.inter);
    j["config"]["intra"] = coefficients_json(c.locality.intra);
    j["config"]["max_sweeps"] = c.locality.max_sweeps;
    j["config"]["auto_tune"] = c.locality.auto_tune;
  }
  const ClusterTopology& t = report.topology;
  j["topology"] = {{"machines", t.machines},
                   {"gpus_per_machine", t.gpus_per_machine},
                   {"inter_bandwidth", t.inter_bandwidth},
                   {"intra_bandwidth", t.intra_bandwidth},
                   {"compute_cost_per_point", t.compute_cost_per_point}};
  const ReportAggregates& a = report.totals;
  j["totals"] = {{"iterations", report.iterations.size()},
                 {"total_inter_points_forward", a.total_inter_forward},
                 {"total_inter_points_both", a.total_inter_both},
                 {"total_intra_points_forward", a.total_intra_forward},
                 {"total_access", a.total_access},
                 {"mean_comp", a.mean_comp},
                 {"max_comp", a.max_comp},
                 {"mean_comp_imbalance", a.mean_comp_imbalance},
                 {"ownership_hit_rate", a.ownership_hit_rate},
                 {"total_est_time", a.total_est_time}};
  nlohmann::ordered_json iters = nlohmann::ordered_json::array();
  for (const auto& it : report.iterations) {
    nlohmann::ordered_json e = {{"iter", it.iteration},
                                {"epoch", it.epoch},
                                {"views", it.views},
                                {"inter_points", it.inter_points()},
                                {"intra_points", it.transferred() - it.inter_points()},
                                {"local_points", it.total_local},
                                {"total_access", it.total_access},
                                {"max_comp", *std::max_element(it.comp.begin(), it.comp.end())},
                                {"est_time", it.est_time}};
    if (it.placement_seconds > 0.0) e["placement_seconds"] = it.placement_seconds;
    iters.push_back(std::move(e));
  }
  j["iterations"] = std::move(iters);
  out << j.dump(2) << '\n';
}

void write_iterations_csv(const EpochReport& report, std::ostream& out) {
  out << "iter,gpu,send_intra,send_inter,recv_intra,recv_inter,comp,est_time\n";
  for (const auto& it : report.iterations) {
    for (std::size_t k = 0; k < it.comp.size(); ++k) {
      out << it.iteration << ',' << k << ',' << it.forward.send_intra[k] << ','
          << it.forward.send_inter[k] << ',' << it.forward.recv_intra[k] << ','
          << it.forward.recv_inter[k] << ',' << it.comp[k] << ','
          << nlohmann::json(it.gpu_time[k]).dump() << '\n';
    }
  }
}

void write_reduction_json(const EpochReport& baseline, const EpochReport& ours, std::ostream& out) {
  const double reduction = comm_reduction(baseline, ours);
  nlohmann::ordered_json j;
  j["reduction_percent"] = reduction;
  j["baseline_inter_points_forward"] = baseline.totals.total_inter_forward;
  j["locality_inter_points_forward"] = ours.totals.total_inter_forward;
  j["baseline_inter_points_both"] = baseline.totals.total_inter_both;
  j["locality_inter_points_both"] = ours.totals.total_inter_both;
  j["baseline_mean_comp_imbalance"] = baseline.totals.mean_comp_imbalance;
  j["locality_mean_comp_imbalance"] = ours.totals.mean_comp_imbalance;
  j["baseline_ownership_hit_rate"] = baseline.totals.ownership_hit_rate;
  j["locality_ownership_hit_rate"] = ours.totals.ownership_hit_rate;
  j["baseline_total_est_time"] = baseline.totals.total_est_time;
  j["locality_total_est_time"] = ours.totals.total_est_time;
  j["iterations"] = ours.iterations.size();
  out << j.dump(2) << '\n';
}

}  // namespace splatsched
