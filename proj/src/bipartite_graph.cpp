#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>

#include "splatsched/error.hpp"
#include "splatsched/partition.hpp"

namespace splatsched {

std::size_t BipartiteGraph::n_edges() const {
  std::size_t n = 0;
  for (const auto& e : group_edges) n += e.size();
  return n;
}

std::int64_t BipartiteGraph::total_edge_weight() const {
  return std::accumulate(image_weight.begin(), image_weight.end(), std::int64_t{0});
}

BipartiteGraph build_bipartite_graph(const GroupedCloud& grouped, const SceneDataset& dataset,
                                     double point_radius) {
  if (grouped.sorted.size() != dataset.cloud.size()) {
    throw ConsistencyError("grouped cloud does not match the dataset cloud");
  }
  const bool temporal = dataset.profile.culling_mode == CullingMode::kSpatioTemporal;
  if (temporal && !grouped.sorted.has_presence()) {
    throw ConsistencyError("spatio-temporal profile requires presence intervals");
  }

  BipartiteGraph g;
  const std::size_t n_groups = grouped.groups.size();
  const std::size_t n_views = dataset.views.size();
  g.group_weight.resize(n_groups);
  for (const auto& group : grouped.groups) {
    g.group_weight[group.id] = static_cast<std::int64_t>(group.size());
  }
  g.image_weight.assign(n_views, 0);
  g.group_edges.resize(n_groups);
  g.image_edges.resize(n_views);

  const auto pts = grouped.sorted.points();
  const auto presence = grouped.sorted.presence();
  for (std::size_t v = 0; v < n_views; ++v) {
    const CameraView& view = dataset.views[v];
    if (temporal && !view.timestamp) {
      throw ConsistencyError("view " + std::to_string(v) + " lacks a timestamp");
    }
    const Frustum fr = frustum_from_view(view);
    for (const auto& group : grouped.groups) {
      if (cull_group(fr, group.aabb, point_radius) == GroupVisibility::kOutside) continue;
      std::int64_t count = 0;
      for (std::size_t i = group.begin; i < group.end; ++i) {
        if (temporal && !presence[i].contains(*view.timestamp)) continue;
        if (fr.contains(Vec3(pts[i]), point_radius)) ++count;
      }
      if (count == 0) continue;
      g.image_edges[v].push_back({group.id, count});
      g.group_edges[group.id].push_back({static_cast<std::uint32_t>(v), count});
      g.image_weight[v] += count;
    }
  }
  return g;
}

std::int64_t WeightedGraph::total_vertex_weight() const {
  return std::accumulate(vertex_weight.begin(), vertex_weight.end(), std::int64_t{0});
}

std::int64_t WeightedGraph::total_edge_weight() const {
  return std::accumulate(edge_weight.begin(), edge_weight.end(), std::int64_t{0}) / 2;
}

WeightedGraph WeightedGraph::from_edges(
    std::vector<std::int64_t> vertex_weight,
    std::span<const std::tuple<std::uint32_t, std::uint32_t, std::int64_t>> edges) {
  WeightedGraph g;
  const std::size_t n = vertex_weight.size();
  g.vertex_weight = std::move(vertex_weight);
  std::vector<std::vector<std::pair<std::uint32_t, std::int64_t>>> adj(n);
  for (const auto& [a, b, w] : edges) {
    if (a >= n || b >= n) throw ParameterError("edges", "endpoint out of range");
    if (a == b) continue;
    adj[a].emplace_back(b, w);
    adj[b].emplace_back(a, w);
  }
  g.offsets.assign(1, 0);
  for (auto& list : adj) {
    // Merge parallel edges.
    std::sort(list.begin(), list.end());
    for (std::size_t i = 0; i < list.size(); ++i) {
      if (!g.adjacency.empty() && g.offsets.back() < g.adjacency.size() &&
          g.adjacency.back() == list[i].first) {
        g.edge_weight.back() += list[i].second;
      } else {
        g.adjacency.push_back(list[i].first);
        g.edge_weight.push_back(list[i].second);
      }
    }
    g.offsets.push_back(g.adjacency.size());
  }
  return g;
}

WeightedGraph to_weighted_graph(const BipartiteGraph& graph, double image_weight_multiplier) {
  WeightedGraph g;
  const std::size_t ng = graph.n_groups();
  const std::size_t ni = graph.n_images();
  g.vertex_weight.reserve(ng + ni);
  for (auto w : graph.group_weight) g.vertex_weight.push_back(w);
  for (auto w : graph.image_weight) {
    g.vertex_weight.push_back(
        static_cast<std::int64_t>(std::llround(image_weight_multiplier * static_cast<double>(w))));
  }
  g.offsets.assign(1, 0);
  for (std::size_t v = 0; v < ng; ++v) {
    for (const auto& e : graph.group_edges[v]) {
      g.adjacency.push_back(static_cast<std::uint32_t>(ng + e.to));
      g.edge_weight.push_back(e.weight);
    }
    g.offsets.push_back(g.adjacency.size());
  }
  for (std::size_t v = 0; v < ni; ++v) {
    for (const auto& e : graph.image_edges[v]) {
      g.adjacency.push_back(e.to);
      g.edge_weight.push_back(e.weight);
    }
    g.offsets.push_back(g.adjacency.size());
  }
  return g;
}

}  // namespace splatsched
