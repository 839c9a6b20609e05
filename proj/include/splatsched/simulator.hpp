#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "splatsched/access_matrix.hpp"
#include "splatsched/partition.hpp"
#include "splatsched/placement.hpp"
#include "splatsched/scene.hpp"
#include "splatsched/visibility.hpp"

namespace splatsched {

/// Machines of identical GPUs. Bandwidths in bytes/s; compute cost in
/// seconds per processed point.
struct ClusterTopology {
  std::uint32_t machines = 1;
  std::uint32_t gpus_per_machine = 1;
  double inter_bandwidth = 12.5e9;   // 100 Gb/s Ethernet
  double intra_bandwidth = 300e9;    // NVLink class
  double compute_cost_per_point = 1e-8;

  std::uint32_t n_gpus() const { return machines * gpus_per_machine; }
  std::uint32_t machine_of(std::uint32_t gpu) const { return gpu / gpus_per_machine; }
  void validate() const;
};

enum class StrategyKind { kRandom, kLocalityAware };

std::string to_string(StrategyKind kind);
StrategyKind strategy_from_string(const std::string& name);

struct LocalityConfig {
  double epsilon = 0.05;
  std::uint32_t partition_runs = 4;
  double image_weight_multiplier = 0.0;
  CostCoefficients inter = CostCoefficients::inter_node();
  CostCoefficients intra = CostCoefficients::intra_node();
  std::size_t max_sweeps = 1000;
  /// Re-derive the machine-level coefficients each iteration from the
  /// previous iteration's simulated timings.
  bool auto_tune = false;
};

/// Placement may be decided on access matrices recorded in an earlier epoch.
/// Costs are always charged against the fresh matrix.
struct Staleness {
  bool enabled = false;
  std::uint32_t from_epoch = 0;
};

struct SimConfig {
  StrategyKind strategy = StrategyKind::kLocalityAware;
  std::uint64_t seed = 0;
  std::uint32_t epochs = 1;
  std::uint32_t batch_size = 16;
  std::uint32_t patches_per_side = 1;
  std::size_t group_size = kDefaultGroupSize;
  Granularity granularity = Granularity::kExact;
  double point_radius = 0.0;
  Staleness staleness;
  LocalityConfig locality;
  /// When off, the measured placement time is added to each step estimate
  /// (which makes reports timing dependent).
  bool async_placement = true;
};

/// Offline products shared by every iteration of one run.
struct OfflinePlacement {
  GroupedCloud grouped;
  std::vector<std::uint32_t> owner;         // global GPU per sorted point
  std::vector<std::uint32_t> view_machine;  // owning machine per view
  std::optional<HierarchicalResult> partition;
};

/// Random: seeded shuffle of the unsorted cloud cut into equal contiguous
/// chunks, random view owners. LocalityAware: bipartite graph partitioning.
OfflinePlacement prepare_offline(const SceneDataset& dataset, const ClusterTopology& topology,
                                 const SimConfig& config);

struct LegLoads {
  std::vector<std::int64_t> send_intra, send_inter, recv_intra, recv_inter;
};

struct IterationTrace {
  std::uint64_t iteration = 0;
  std::uint32_t epoch = 0;
  std::vector<std::uint32_t> views;
  PlacementSolution placement;
  /// Forward leg. Backward is the same traffic in reverse.
  LegLoads forward;
  std::vector<std::int64_t> comp;
  /// transfers(src, dst): points sent from src to dst in the forward leg.
  AccessMatrix transfers;
  std::int64_t total_access = 0;
  std::int64_t total_local = 0;
  std::size_t patches = 0;
  std::size_t ownership_hits = 0;
  std::uint64_t bytes_per_point = 0;
  double placement_seconds = 0.0;  // only when placement is synchronous
  std::vector<double> gpu_time;    // per-GPU step estimate, both legs
  double est_time = 0.0;

  LegLoads backward() const;
  AccessMatrix backward_transfers() const;
  std::int64_t transferred() const;
  std::int64_t inter_points() const;  // forward leg
};

/// max_k [comp_k * cost + inter_bytes_k / inter_bw + intra_bytes_k / intra_bw]
/// per leg, both legs summed. A proxy, not a wall-clock prediction.
double estimate_step_time(const IterationTrace& trace, const ClusterTopology& topology);
std::vector<double> estimate_gpu_times(const IterationTrace& trace,
                                       const ClusterTopology& topology);

struct ReportAggregates {
  std::int64_t total_inter_forward = 0;
  std::int64_t total_inter_both = 0;
  std::int64_t total_intra_forward = 0;
  std::int64_t total_access = 0;
  double mean_comp = 0.0;
  std::int64_t max_comp = 0;
  double mean_comp_imbalance = 1.0;  // mean over iterations of max_k comp / mean_k comp
  double ownership_hit_rate = 0.0;
  double total_est_time = 0.0;

  friend bool operator==(const ReportAggregates&, const ReportAggregates&) = default;
};

ReportAggregates aggregate(std::span<const IterationTrace> iterations);

struct EpochReport {
  StrategyKind strategy = StrategyKind::kRandom;
  SimConfig config;
  ClusterTopology topology;
  std::vector<std::vector<std::uint32_t>> schedule;  // view ids per iteration
  std::vector<IterationTrace> iterations;
  ReportAggregates totals;
};

class Simulator {
 public:
  Simulator(const SceneDataset& dataset, const ClusterTopology& topology, const SimConfig& config);

  const OfflinePlacement& offline() const { return offline_; }

  /// View order for every iteration of every epoch; incomplete last batches
  /// are dropped. Depends only on the seed, view count and batch size.
  std::vector<std::vector<std::uint32_t>> schedule() const;

  IterationTrace run_iteration(std::span<const std::uint32_t> batch, std::uint64_t iteration,
                               std::uint32_t epoch);

  EpochReport run();

 private:
  AccessMatrix placement_matrix(std::span<const std::uint32_t> batch, const AccessMatrix& fresh,
                                std::uint32_t epoch);
  PlacementSolution place(const AccessMatrix& access, std::uint64_t iteration);

  const SceneDataset& dataset_;
  ClusterTopology topology_;
  SimConfig config_;
  OfflinePlacement offline_;
  std::unordered_map<std::uint32_t, std::vector<std::int64_t>> recorded_rows_;
  std::optional<ProfilerStats> last_stats_;
};

EpochReport run_training_sim(const SceneDataset& dataset, const ClusterTopology& topology,
                             const SimConfig& config);

/// 100 * (1 - ours / baseline) over forward inter-machine points; 0 when the
/// baseline moves nothing. Throws ComparisonError on differing schedules.
double comm_reduction(const EpochReport& baseline, const EpochReport& ours);

/// Smallest P (up to 64) with batch * P^2 divisible by n_gpus, or 0.
std::uint32_t suggest_patches_per_side(std::uint32_t batch, std::uint32_t n_gpus);

void write_report_json(const EpochReport& report, std::ostream& out);
/// "iter,gpu,send_intra,send_inter,recv_intra,recv_inter,comp,est_time"
void write_iterations_csv(const EpochReport& report, std::ostream& out);
void write_reduction_json(const EpochReport& baseline, const EpochReport& ours, std::ostream& out);

}  // namespace splatsched
