#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <tuple>
#include <vector>

#include "splatsched/partition_assignment.hpp"
#include "splatsched/scene.hpp"
#include "splatsched/visibility.hpp"

namespace splatsched {

/// Group/image visibility graph. Edge (g, v) carries the number of g's points
/// visible in view v; pairs with no visible points have no edge.
struct BipartiteGraph {
  struct Edge {
    std::uint32_t to = 0;
    std::int64_t weight = 0;
  };

  std::vector<std::int64_t> group_weight;  // points in the group
  std::vector<std::int64_t> image_weight;  // sum of incident edge weights
  std::vector<std::vector<Edge>> group_edges;  // group -> images, by image id
  std::vector<std::vector<Edge>> image_edges;  // image -> groups, by group id

  std::size_t n_groups() const { return group_weight.size(); }
  std::size_t n_images() const { return image_weight.size(); }
  std::size_t n_edges() const;
  std::int64_t total_edge_weight() const;
};

BipartiteGraph build_bipartite_graph(const GroupedCloud& grouped, const SceneDataset& dataset,
                                     double point_radius = 0.0);

/// Undirected graph in CSR form with integer vertex (balance) and edge weights.
struct WeightedGraph {
  std::vector<std::int64_t> vertex_weight;
  std::vector<std::size_t> offsets{0};
  std::vector<std::uint32_t> adjacency;
  std::vector<std::int64_t> edge_weight;

  std::size_t n() const { return vertex_weight.size(); }
  std::int64_t total_vertex_weight() const;
  /// Each undirected edge counted once.
  std::int64_t total_edge_weight() const;

  static WeightedGraph from_edges(std::vector<std::int64_t> vertex_weight,
                                  std::span<const std::tuple<std::uint32_t, std::uint32_t,
                                                             std::int64_t>> edges);
};

/// Groups become vertices [0, n_groups), images [n_groups, n_groups+n_images).
/// Image balance weight = round(multiplier * image weight).
WeightedGraph to_weighted_graph(const BipartiteGraph& graph, double image_weight_multiplier = 0.0);

struct PartitionQuality {
  std::int64_t edge_cut = 0;
  double balance = 1.0;  // max part weight / mean part weight
  std::vector<std::int64_t> part_weights;
};

struct GraphPartition {
  std::vector<std::uint32_t> part;
  PartitionQuality quality;
};

struct PartitionOptions {
  std::uint32_t parts = 2;
  double epsilon = 0.05;
  std::uint64_t seed = 0;
  std::uint32_t runs = 4;
  /// Coarsening stops at this many vertices per part.
  std::size_t coarsest_per_part = 30;
  std::uint32_t initial_tries = 8;
};

PartitionQuality evaluate_partition(const WeightedGraph& graph, std::span<const std::uint32_t> part,
                                    std::uint32_t parts);

/// Largest admissible part weight, (1 + eps) * total / parts.
double max_part_weight(std::int64_t total_weight, std::uint32_t parts, double epsilon);

/// Multilevel partitioner: heavy-edge matching, recursive greedy-growing
/// bisection, boundary FM refinement on every level. Best of `runs`
/// independent seeds by (balance feasibility, cut, balance).
/// Throws InfeasibleError if one vertex alone exceeds max_part_weight().
GraphPartition partition_graph(const WeightedGraph& graph, const PartitionOptions& options);

struct HierarchicalOptions {
  std::uint32_t machines = 1;
  std::uint32_t gpus_per_machine = 1;
  double epsilon = 0.05;
  std::uint64_t seed = 0;
  std::uint32_t runs = 4;
  double image_weight_multiplier = 0.0;
};

struct HierarchicalResult {
  PartitionAssignment assignment;
  PartitionQuality machine_quality;  // machine-level graph partition
  PartitionQuality gpu_quality;      // final (machine, gpu) parts, images included
};

/// Machines first, then each machine's groups (plus the images whose heaviest
/// incident machine it is) among its GPUs.
HierarchicalResult hierarchical_partition(const BipartiteGraph& graph,
                                          const HierarchicalOptions& options);

/// Owning machine of every view: the machine-level part of its image vertex,
/// or (for imported assignments) the machine with the most incident edge
/// weight, lowest index on ties.
std::vector<std::uint32_t> image_ownership(const PartitionAssignment& assignment,
                                           const BipartiteGraph& graph);

/// Machine maximizing the incident edge weight of each image (lowest index on
/// ties, machine 0 for isolated images).
std::vector<std::uint32_t> heaviest_machine(const PartitionAssignment& assignment,
                                            const BipartiteGraph& graph);

/// Quality report JSON: cut, balance, per-part weights.
void write_quality_json(const HierarchicalResult& result, std::ostream& out);

}  // namespace splatsched
