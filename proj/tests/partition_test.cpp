#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "oracles.hpp"
#include "splatsched/error.hpp"
#include "splatsched/partition.hpp"

using namespace splatsched;

namespace {

// Three groups of two points in front of two cameras looking down +z.
SceneDataset three_group_scene() {
  SceneDataset ds;
  ds.profile = WorkloadProfile::gaussian_3d();
  ds.cloud = PointCloud({{-9, 0, 10}, {-8, 0, 10},    // left
                         {0, 0, 10}, {0.5, 0, 10},     // centre
                         {8.5, 0, 10}, {8, 0, 10}});   // right
  const double fov = 2.0 * std::atan(0.5);  // half-width 5 at depth 10
  ds.views.push_back(oracle::make_camera({-6, 0, 0}, {0, 0, 1}, {0, -1, 0}, fov, 100, 100, 1, 50));
  ds.views.push_back(oracle::make_camera({4, 0, 0}, {0, 0, 1}, {0, -1, 0}, fov, 100, 100, 1, 50));
  ds.views[1].id = 1;
  return ds;
}

std::int64_t weight_between(const BipartiteGraph& g, std::uint32_t group, std::uint32_t image) {
  for (const auto& e : g.group_edges[group]) {
    if (e.to == image) return e.weight;
  }
  return 0;
}

}  // namespace

TEST_CASE("bipartite graph of a hand-built scene") {
  const SceneDataset ds = three_group_scene();
  const GroupedCloud grouped = zorder_group(ds.cloud, 2);
  const BipartiteGraph g = build_bipartite_graph(grouped, ds);
  REQUIRE(g.n_groups() == 3);
  REQUIRE(g.n_images() == 2);

  // Left camera spans x in [-11, -1]; right camera x in [-1, 9].
  std::vector<std::int64_t> want_left(3), want_right(3);
  for (std::size_t i = 0; i < 6; ++i) {
    const auto grp = grouped.group_of(i);
    want_left[grp] += oracle::visible(ds.views[0], Vec3(grouped.sorted.points()[i]));
    want_right[grp] += oracle::visible(ds.views[1], Vec3(grouped.sorted.points()[i]));
  }
  std::int64_t total = 0;
  for (std::uint32_t grp = 0; grp < 3; ++grp) {
    CHECK(weight_between(g, grp, 0) == want_left[grp]);
    CHECK(weight_between(g, grp, 1) == want_right[grp]);
    CHECK(g.group_weight[grp] == 2);
    total += want_left[grp] + want_right[grp];
  }
  CHECK(g.total_edge_weight() == total);
  CHECK(g.image_weight[0] == want_left[0] + want_left[1] + want_left[2]);
  CHECK(g.total_edge_weight() == 6);  // left sees 2, right sees 2 + 2
}

TEST_CASE("bipartite graph matches per-point projection on a random scene") {
  Rng rng(4);
  AerialSceneParams p;
  p.seed = 4;
  p.n_points = 4000;
  p.n_views = 8;
  p.ground_size = 200;
  for (bool temporal : {false, true}) {
    SceneDataset ds = generate_aerial_scene(p);
    if (temporal) ds = make_temporal(ds, 2, 1.0);
    const GroupedCloud grouped = zorder_group(ds.cloud, 64);
    const BipartiteGraph g = build_bipartite_graph(grouped, ds);
    for (std::uint32_t v = 0; v < ds.views.size(); ++v) {
      std::vector<std::int64_t> want(g.n_groups(), 0);
      for (std::size_t i = 0; i < grouped.sorted.size(); ++i) {
        if (temporal && !grouped.sorted.presence()[i].contains(*ds.views[v].timestamp)) continue;
        want[grouped.group_of(i)] += oracle::visible(ds.views[v], Vec3(grouped.sorted.points()[i]));
      }
      for (std::uint32_t grp = 0; grp < g.n_groups(); ++grp) CHECK(weight_between(g, grp, v) == want[grp]);
    }
  }
}

TEST_CASE("weighted graph merges parallel edges") {
  const std::vector<std::tuple<std::uint32_t, std::uint32_t, std::int64_t>> edges{
      {0, 1, 3}, {1, 0, 2}, {1, 2, 4}};
  const WeightedGraph g = WeightedGraph::from_edges({1, 1, 1}, edges);
  CHECK(g.n() == 3);
  CHECK(g.total_edge_weight() == 9);
  CHECK(g.offsets[1] - g.offsets[0] == 1);
  CHECK(g.edge_weight[g.offsets[0]] == 5);

  const std::vector<std::uint32_t> part{0, 0, 1};
  const PartitionQuality q = evaluate_partition(g, part, 2);
  CHECK(q.edge_cut == 4);
  CHECK(q.part_weights == std::vector<std::int64_t>{2, 1});
  CHECK(q.balance == doctest::Approx(2.0 / 1.5));
}

TEST_CASE("to_weighted_graph scales image balance weights") {
  const BipartiteGraph b = oracle::make_bipartite({10, 20}, 1, {{0, 0, 4}, {1, 0, 6}});
  const WeightedGraph w0 = to_weighted_graph(b);
  CHECK(w0.vertex_weight == std::vector<std::int64_t>{10, 20, 0});
  const WeightedGraph w1 = to_weighted_graph(b, 0.5);
  CHECK(w1.vertex_weight == std::vector<std::int64_t>{10, 20, 5});
  CHECK(w1.total_edge_weight() == 10);
}

TEST_CASE("disconnected equal clusters are split with zero cut") {
  Rng rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 4 + 2 * rng.below(7);
    const BipartiteGraph b = oracle::random_two_cluster_graph(rng, n, 2 + rng.below(10), 0.0);
    const WeightedGraph w = to_weighted_graph(b);
    PartitionOptions opt;
    opt.parts = 2;
    opt.seed = static_cast<std::uint64_t>(trial);
    const GraphPartition part = partition_graph(w, opt);
    CHECK(part.quality.edge_cut == 0);
    CHECK(part.quality.part_weights[0] == part.quality.part_weights[1]);
  }
}

TEST_CASE("bisection stays close to the exhaustive optimum") {
  Rng rng(12345);
  int within = 0;
  const int trials = 100;
  for (int trial = 0; trial < trials; ++trial) {
    const std::size_t n = 8 + 2 * rng.below(5);
    const BipartiteGraph b = oracle::random_two_cluster_graph(rng, n, 4 + rng.below(9), 0.15);
    const WeightedGraph w = to_weighted_graph(b);
    PartitionOptions opt;
    opt.parts = 2;
    opt.seed = static_cast<std::uint64_t>(trial);
    const GraphPartition part = partition_graph(w, opt);
    const double cap = max_part_weight(w.total_vertex_weight(), 2, opt.epsilon);
    const auto best = oracle::min_bisection_cut(b, cap);
    REQUIRE(best.has_value());
    CHECK(part.quality.edge_cut >= *best);
    for (auto pw : part.quality.part_weights) CHECK(static_cast<double>(pw) <= cap);
    within += static_cast<double>(part.quality.edge_cut) <= 1.5 * static_cast<double>(*best);
  }
  CHECK(within >= 95);
}

TEST_CASE("partitioner is deterministic and respects part count") {
  Rng rng(3);
  const BipartiteGraph b = oracle::random_two_cluster_graph(rng, 40, 30, 0.3);
  const WeightedGraph w = to_weighted_graph(b);
  for (std::uint32_t parts : {1u, 3u, 4u, 8u}) {
    PartitionOptions opt;
    opt.parts = parts;
    opt.seed = 9;
    const GraphPartition a = partition_graph(w, opt);
    const GraphPartition c = partition_graph(w, opt);
    CHECK(a.part == c.part);
    CHECK(a.part.size() == w.n());
    for (auto x : a.part) CHECK(x < parts);
    const PartitionQuality q = evaluate_partition(w, a.part, parts);
    CHECK(q.edge_cut == a.quality.edge_cut);
    CHECK(q.balance <= 1.0 + opt.epsilon + 1e-12);
    if (parts == 1) CHECK(q.edge_cut == 0);
  }
}

TEST_CASE("a vertex heavier than the cap is infeasible") {
  const std::vector<std::tuple<std::uint32_t, std::uint32_t, std::int64_t>> edges{{0, 1, 1}};
  const WeightedGraph w = WeightedGraph::from_edges({100, 1, 1}, edges);
  PartitionOptions opt;
  opt.parts = 2;
  try {
    partition_graph(w, opt);
    FAIL("expected InfeasibleError");
  } catch (const InfeasibleError& e) {
    CHECK(e.vertex() == 0);
  }
  opt.parts = 0;
  CHECK_THROWS_AS(partition_graph(w, opt), ParameterError);
}

TEST_CASE("hierarchical partition on a single GPU") {
  Rng rng(5);
  const BipartiteGraph b = oracle::random_two_cluster_graph(rng, 12, 6, 0.2);
  HierarchicalOptions opt;
  const HierarchicalResult r = hierarchical_partition(b, opt);
  CHECK(r.gpu_quality.edge_cut == 0);
  for (const auto& s : r.assignment.group_slots) CHECK(s == GpuSlot{0, 0});
}

TEST_CASE("one machine reduces to a flat partition over its GPUs") {
  Rng rng(6);
  const BipartiteGraph b = oracle::random_two_cluster_graph(rng, 30, 20, 0.2);
  HierarchicalOptions h;
  h.machines = 1;
  h.gpus_per_machine = 4;
  h.seed = 21;
  const HierarchicalResult r = hierarchical_partition(b, h);
  PartitionOptions flat;
  flat.parts = 4;
  flat.seed = 21;
  const GraphPartition f = partition_graph(to_weighted_graph(b), flat);
  for (std::size_t g = 0; g < b.n_groups(); ++g) CHECK(r.assignment.group_slots[g].gpu == f.part[g]);
  CHECK(r.gpu_quality.edge_cut == f.quality.edge_cut);
}

TEST_CASE("block-structured graph separates machines and GPUs") {
  // Four disconnected clusters of 4 groups, each seen by its own 3 images.
  std::vector<std::tuple<std::uint32_t, std::uint32_t, std::int64_t>> edges;
  for (std::uint32_t c = 0; c < 4; ++c) {
    for (std::uint32_t g = 0; g < 4; ++g) {
      for (std::uint32_t i = 0; i < 3; ++i) edges.emplace_back(4 * c + g, 3 * c + i, 5 + g + i);
    }
  }
  const BipartiteGraph b = oracle::make_bipartite(std::vector<std::int64_t>(16, 10), 12, edges);
  HierarchicalOptions opt;
  opt.machines = 2;
  opt.gpus_per_machine = 2;
  const HierarchicalResult r = hierarchical_partition(b, opt);
  CHECK(r.machine_quality.edge_cut == 0);
  CHECK(r.gpu_quality.edge_cut == 0);
  const auto owners = image_ownership(r.assignment, b);
  for (std::uint32_t i = 0; i < 12; ++i) {
    CHECK(owners[i] == r.assignment.group_slots[4 * (i / 3)].machine);
  }
  CHECK(heaviest_machine(r.assignment, b) == owners);

  std::stringstream csv;
  write_partition_csv(r.assignment, csv);
  const PartitionAssignment back = read_partition_csv(csv, 2, 2);
  CHECK(back.group_slots == r.assignment.group_slots);

  std::stringstream js;
  write_quality_json(r, js);
  const auto j = nlohmann::json::parse(js.str());
  CHECK(j["edge_cut"] == 0);
  CHECK(j["machines"] == 2);
}

TEST_CASE("partition CSV errors") {
  std::stringstream bad("group_id,machine,gpu\n0,5,0\n");
  CHECK_THROWS_AS(read_partition_csv(bad, 2, 2), FormatError);
  std::stringstream header("nope\n");
  CHECK_THROWS_AS(read_partition_csv(header, 2, 2), FormatError);
}
