#include "splatsched/partition.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <queue>
#include <tuple>

#include "json.hpp"
#include "splatsched/error.hpp"
#include "splatsched/random.hpp"

namespace splatsched {

namespace {

constexpr double kWeightTol = 1e-9;
constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();
constexpr std::size_t kSmallGraphTries = 32;

bool fits(std::int64_t weight, double cap) {
  return static_cast<double>(weight) <= cap + kWeightTol * std::max(1.0, std::abs(cap));
}

// ---------------------------------------------------------------------------
// Coarsening

std::vector<std::uint32_t> heavy_edge_matching(const WeightedGraph& g, std::int64_t max_cluster,
                                               Rng& rng, std::size_t& n_coarse) {
  const std::size_t n = g.n();
  std::vector<std::uint64_t> key(n);
  for (auto& k : key) k = rng.next();
  std::vector<std::uint32_t> mate(n, kNone);
  for (std::uint32_t v = 0; v < n; ++v) {
    if (mate[v] != kNone) continue;
    std::uint32_t best = kNone;
    std::int64_t best_w = 0;
    for (std::size_t e = g.offsets[v]; e < g.offsets[v + 1]; ++e) {
      const std::uint32_t u = g.adjacency[e];
      if (u == v || mate[u] != kNone) continue;
      if (g.vertex_weight[v] + g.vertex_weight[u] > max_cluster) continue;
      const std::int64_t w = g.edge_weight[e];
      if (best == kNone || w > best_w || (w == best_w && key[u] < key[best]) ||
          (w == best_w && key[u] == key[best] && u < best)) {
        best = u;
        best_w = w;
      }
    }
    mate[v] = best == kNone ? v : best;
    if (best != kNone) mate[best] = v;
  }
  std::vector<std::uint32_t> map(n, kNone);
  n_coarse = 0;
  for (std::uint32_t v = 0; v < n; ++v) {
    if (map[v] != kNone) continue;
    map[v] = static_cast<std::uint32_t>(n_coarse);
    map[mate[v]] = static_cast<std::uint32_t>(n_coarse);
    ++n_coarse;
  }
  return map;
}

WeightedGraph contract(const WeightedGraph& g, const std::vector<std::uint32_t>& map,
                       std::size_t n_coarse) {
  const std::size_t n = g.n();
  std::vector<std::vector<std::uint32_t>> members(n_coarse);
  for (std::uint32_t v = 0; v < n; ++v) members[map[v]].push_back(v);

  WeightedGraph c;
  c.vertex_weight.assign(n_coarse, 0);
  c.offsets.assign(1, 0);
  std::vector<std::size_t> slot(n_coarse, std::numeric_limits<std::size_t>::max());
  for (std::uint32_t cv = 0; cv < n_coarse; ++cv) {
    const std::size_t start = c.adjacency.size();
    for (auto v : members[cv]) {
      c.vertex_weight[cv] += g.vertex_weight[v];
      for (std::size_t e = g.offsets[v]; e < g.offsets[v + 1]; ++e) {
        const std::uint32_t cu = map[g.adjacency[e]];
        if (cu == cv) continue;
        if (slot[cu] == std::numeric_limits<std::size_t>::max() || slot[cu] < start) {
          slot[cu] = c.adjacency.size();
          c.adjacency.push_back(cu);
          c.edge_weight.push_back(g.edge_weight[e]);
        } else {
          c.edge_weight[slot[cu]] += g.edge_weight[e];
        }
      }
    }
    c.offsets.push_back(c.adjacency.size());
  }
  return c;
}

// ---------------------------------------------------------------------------
// Refinement

/// Boundary FM with rollback plus a greedy rebalancer, for per-part caps.
class Refiner {
 public:
  Refiner(const WeightedGraph& g, std::vector<std::uint32_t>& part, std::uint32_t k,
          std::vector<double> caps)
      : g_(g), part_(part), k_(k), caps_(std::move(caps)), weight_(k, 0), conn_(k, 0) {
    for (std::size_t v = 0; v < g_.n(); ++v) {
      weight_[part_[v]] += g_.vertex_weight[v];
      slack_ = std::max(slack_, g_.vertex_weight[v]);
    }
    cut_ = compute_cut();
  }

  std::int64_t cut() const { return cut_; }

  bool feasible() const {
    for (std::uint32_t p = 0; p < k_; ++p) {
      if (!fits(weight_[p], caps_[p])) return false;
    }
    return true;
  }

  /// Moves weighted vertices out of overloaded parts. Prefers destinations
  /// that stay within their cap; otherwise any move that lowers the larger of
  /// the two weights involved.
  void rebalance() {
    for (std::size_t iter = 0; iter < g_.n() && !feasible(); ++iter) {
      std::uint32_t best_v = kNone, best_t = kNone;
      std::int64_t best_gain = 0;
      bool best_fits = false;
      for (std::uint32_t v = 0; v < g_.n(); ++v) {
        const std::uint32_t p = part_[v];
        const std::int64_t w = g_.vertex_weight[v];
        if (w <= 0 || fits(weight_[p], caps_[p])) continue;
        fill_conn(v);
        for (std::uint32_t t = 0; t < k_; ++t) {
          if (t == p) continue;
          const bool ok = fits(weight_[t] + w, caps_[t]);
          if (!ok && weight_[t] + w >= weight_[p]) continue;
          const std::int64_t gain = conn_[t] - conn_[p];
          if (best_v == kNone || (ok && !best_fits) ||
              (ok == best_fits && gain > best_gain)) {
            best_v = v;
            best_t = t;
            best_gain = gain;
            best_fits = ok;
          }
        }
        clear_conn(v);
      }
      if (best_v == kNone) break;
      apply(best_v, best_t, best_gain);
    }
  }

  /// Runs FM passes until one fails to improve (cut, sum of squared part
  /// weights). Within a pass a part may exceed its cap by up to one vertex
  /// weight, so that two vertices can trade sides under a tight cap; only
  /// prefixes ending in a feasible state are committed.
  /// Returns the number of committed passes.
  int refine(int max_passes = 10) {
    int committed = 0;
    for (int pass = 0; pass < max_passes; ++pass) {
      if (!fm_pass()) break;
      ++committed;
    }
    return committed;
  }

 private:
  struct Move {
    std::int64_t gain = 0;
    std::uint32_t to = kNone;
  };

  std::int64_t compute_cut() const {
    std::int64_t cut = 0;
    for (std::uint32_t v = 0; v < g_.n(); ++v) {
      for (std::size_t e = g_.offsets[v]; e < g_.offsets[v + 1]; ++e) {
        if (part_[g_.adjacency[e]] != part_[v]) cut += g_.edge_weight[e];
      }
    }
    return cut / 2;
  }

  double square_sum() const {
    double s = 0.0;
    for (auto w : weight_) s += static_cast<double>(w) * static_cast<double>(w);
    return s;
  }

  void fill_conn(std::uint32_t v) {
    for (std::size_t e = g_.offsets[v]; e < g_.offsets[v + 1]; ++e) {
      conn_[part_[g_.adjacency[e]]] += g_.edge_weight[e];
    }
  }
  void clear_conn(std::uint32_t v) {
    for (std::size_t e = g_.offsets[v]; e < g_.offsets[v + 1]; ++e) {
      conn_[part_[g_.adjacency[e]]] = 0;
    }
  }

  Move best_move(std::uint32_t v) {
    Move best;
    const std::uint32_t p = part_[v];
    const std::int64_t w = g_.vertex_weight[v];
    fill_conn(v);
    for (std::size_t e = g_.offsets[v]; e < g_.offsets[v + 1]; ++e) {
      const std::uint32_t t = part_[g_.adjacency[e]];
      if (t == p || t == best.to) continue;
      if (!fits(weight_[t] + w, caps_[t] + static_cast<double>(slack_))) continue;
      const std::int64_t gain = conn_[t] - conn_[p];
      if (best.to == kNone || gain > best.gain ||
          (gain == best.gain && (weight_[t] < weight_[best.to] ||
                                 (weight_[t] == weight_[best.to] && t < best.to)))) {
        best = {gain, t};
      }
    }
    clear_conn(v);
    return best;
  }

  void apply(std::uint32_t v, std::uint32_t to, std::int64_t gain) {
    const std::int64_t w = g_.vertex_weight[v];
    weight_[part_[v]] -= w;
    weight_[to] += w;
    part_[v] = to;
    cut_ -= gain;
  }

  bool fm_pass() {
    using Entry = std::tuple<std::int64_t, std::int64_t, std::uint32_t>;  // gain, -v, to
    std::priority_queue<Entry> heap;
    std::vector<char> locked(g_.n(), 0);
    auto push = [&](std::uint32_t v) {
      const Move m = best_move(v);
      if (m.to != kNone) heap.emplace(m.gain, -static_cast<std::int64_t>(v), m.to);
    };
    for (std::uint32_t v = 0; v < g_.n(); ++v) push(v);

    struct Logged {
      std::uint32_t v, from;
      std::int64_t gain;
    };
    std::vector<Logged> log;
    const bool start_feasible = feasible();
    std::int64_t best_cut = cut_;
    double best_sq = square_sum();
    std::size_t best_len = 0;
    const std::size_t patience = std::max<std::size_t>(50, g_.n() / 10);
    std::size_t since_best = 0;

    while (!heap.empty() && since_best < patience) {
      const auto [gain, neg_v, to] = heap.top();
      heap.pop();
      const auto v = static_cast<std::uint32_t>(-neg_v);
      if (locked[v]) continue;
      const Move m = best_move(v);
      if (m.to == kNone) continue;
      if (m.gain != gain || m.to != to) {
        heap.emplace(m.gain, neg_v, m.to);
        continue;
      }
      log.push_back({v, part_[v], gain});
      apply(v, to, gain);
      locked[v] = 1;
      const double sq = square_sum();
      const bool ok = feasible() || (!start_feasible && sq < best_sq);
      if (ok && (cut_ < best_cut || (cut_ == best_cut && sq < best_sq))) {
        best_cut = cut_;
        best_sq = sq;
        best_len = log.size();
        since_best = 0;
      } else {
        ++since_best;
      }
      for (std::size_t e = g_.offsets[v]; e < g_.offsets[v + 1]; ++e) {
        const std::uint32_t u = g_.adjacency[e];
        if (!locked[u]) push(u);
      }
    }
    while (log.size() > best_len) {
      const Logged l = log.back();
      log.pop_back();
      apply(l.v, l.from, -l.gain);
    }
    return best_len > 0;
  }

  const WeightedGraph& g_;
  std::vector<std::uint32_t>& part_;
  std::uint32_t k_;
  std::vector<double> caps_;
  std::vector<std::int64_t> weight_;
  std::vector<std::int64_t> conn_;
  std::int64_t cut_ = 0;
  std::int64_t slack_ = 0;
};

// ---------------------------------------------------------------------------
// Initial partitioning

struct Subgraph {
  WeightedGraph graph;
  std::vector<std::uint32_t> to_parent;
};

Subgraph induced_subgraph(const WeightedGraph& g, std::span<const std::uint32_t> vertices) {
  Subgraph s;
  s.to_parent.assign(vertices.begin(), vertices.end());
  std::vector<std::uint32_t> local(g.n(), kNone);
  for (std::uint32_t i = 0; i < vertices.size(); ++i) local[vertices[i]] = i;
  s.graph.offsets.assign(1, 0);
  for (auto v : vertices) {
    s.graph.vertex_weight.push_back(g.vertex_weight[v]);
    for (std::size_t e = g.offsets[v]; e < g.offsets[v + 1]; ++e) {
      const std::uint32_t u = local[g.adjacency[e]];
      if (u == kNone) continue;
      s.graph.adjacency.push_back(u);
      s.graph.edge_weight.push_back(g.edge_weight[e]);
    }
    s.graph.offsets.push_back(s.graph.adjacency.size());
  }
  return s;
}

// Connected component label of every vertex.
std::vector<std::uint32_t> components(const WeightedGraph& g, std::uint32_t& count) {
  std::vector<std::uint32_t> comp(g.n(), kNone);
  std::vector<std::uint32_t> stack;
  count = 0;
  for (std::uint32_t s = 0; s < g.n(); ++s) {
    if (comp[s] != kNone) continue;
    comp[s] = count;
    stack.push_back(s);
    while (!stack.empty()) {
      const std::uint32_t v = stack.back();
      stack.pop_back();
      for (std::size_t e = g.offsets[v]; e < g.offsets[v + 1]; ++e) {
        const std::uint32_t u = g.adjacency[e];
        if (comp[u] == kNone) {
          comp[u] = count;
          stack.push_back(u);
        }
      }
    }
    ++count;
  }
  return comp;
}

// Grows side 0 from `start` by best cut gain until it reaches `target0`.
// When the frontier runs dry, growth continues in the heaviest untouched
// component that still fits under `cap0`, else at the lowest free vertex.
std::vector<std::uint32_t> grow_bisection(const WeightedGraph& g, std::uint32_t start,
                                          double target0, double cap0) {
  const std::size_t n = g.n();
  std::vector<std::uint32_t> side(n, 1);
  std::vector<std::int64_t> gain(n, 0);
  for (std::uint32_t v = 0; v < n; ++v) {
    for (std::size_t e = g.offsets[v]; e < g.offsets[v + 1]; ++e) gain[v] -= g.edge_weight[e];
  }
  std::uint32_t n_comp = 0;
  const std::vector<std::uint32_t> comp = components(g, n_comp);
  std::vector<std::int64_t> comp_weight(n_comp, 0);
  std::vector<std::uint32_t> comp_first(n_comp, kNone);
  for (std::uint32_t v = 0; v < n; ++v) {
    comp_weight[comp[v]] += g.vertex_weight[v];
    if (comp_first[comp[v]] == kNone) comp_first[comp[v]] = v;
  }
  std::vector<char> touched(n_comp, 0);

  std::vector<char> rejected(n, 0);
  using Entry = std::pair<std::int64_t, std::int64_t>;  // gain, -v
  std::priority_queue<Entry> heap;
  heap.emplace(gain[start], -static_cast<std::int64_t>(start));
  touched[comp[start]] = 1;
  std::int64_t weight0 = 0;
  std::uint32_t next_unvisited = 0;
  while (static_cast<double>(weight0) < target0) {
    if (heap.empty()) {
      std::uint32_t pick = kNone;
      for (std::uint32_t c = 0; c < n_comp; ++c) {
        if (touched[c] || !fits(weight0 + comp_weight[c], cap0)) continue;
        if (pick == kNone || comp_weight[c] > comp_weight[pick]) pick = c;
      }
      std::uint32_t v0;
      if (pick != kNone) {
        v0 = comp_first[pick];
      } else {
        while (next_unvisited < n && (side[next_unvisited] == 0 || rejected[next_unvisited])) {
          ++next_unvisited;
        }
        if (next_unvisited >= n) break;
        v0 = next_unvisited;
      }
      touched[comp[v0]] = 1;
      heap.emplace(gain[v0], -static_cast<std::int64_t>(v0));
    }
    const auto [gv, neg_v] = heap.top();
    heap.pop();
    const auto v = static_cast<std::uint32_t>(-neg_v);
    if (side[v] == 0 || rejected[v] || gv != gain[v]) continue;
    if (!fits(weight0 + g.vertex_weight[v], cap0)) {
      rejected[v] = 1;
      continue;
    }
    side[v] = 0;
    weight0 += g.vertex_weight[v];
    for (std::size_t e = g.offsets[v]; e < g.offsets[v + 1]; ++e) {
      const std::uint32_t u = g.adjacency[e];
      if (side[u] == 0) continue;
      gain[u] += 2 * g.edge_weight[e];
      if (!rejected[u]) heap.emplace(gain[u], -static_cast<std::int64_t>(u));
    }
  }
  return side;
}

void recursive_bisection(const WeightedGraph& g, std::span<const std::uint32_t> vertices,
                         std::uint32_t first_part, std::uint32_t k, double epsilon,
                         std::uint32_t tries, Rng& rng, std::vector<std::uint32_t>& part) {
  if (k == 1 || vertices.empty()) {
    for (auto v : vertices) part[v] = first_part;
    return;
  }
  const Subgraph sub = induced_subgraph(g, vertices);
  const std::uint32_t k0 = k / 2;
  const std::uint32_t k1 = k - k0;
  const double total = static_cast<double>(sub.graph.total_vertex_weight());
  const double target0 = total * k0 / k;
  const std::vector<double> caps{(1.0 + epsilon) * target0, (1.0 + epsilon) * (total - target0)};

  std::vector<std::uint32_t> best;
  std::tuple<bool, std::int64_t, std::int64_t> best_key{};
  const std::size_t n = sub.graph.n();
  // Small coarse graphs are cheap to grow from many starts.
  const auto rounds = std::max<std::size_t>(tries, std::min<std::size_t>(n, kSmallGraphTries));
  for (std::size_t t = 0; t < rounds; ++t) {
    const auto start = static_cast<std::uint32_t>(rng.below(n));
    auto side = grow_bisection(sub.graph, start, target0, caps[0]);
    Refiner refiner(sub.graph, side, 2, caps);
    refiner.rebalance();
    refiner.refine();
    std::int64_t w0 = 0;
    for (std::uint32_t v = 0; v < n; ++v) {
      if (side[v] == 0) w0 += sub.graph.vertex_weight[v];
    }
    const auto dev = static_cast<std::int64_t>(std::llround(std::abs(static_cast<double>(w0) - target0)));
    const std::tuple<bool, std::int64_t, std::int64_t> key{!refiner.feasible(), refiner.cut(), dev};
    if (best.empty() || key < best_key) {
      best = std::move(side);
      best_key = key;
    }
  }

  std::vector<std::uint32_t> left, right;
  for (std::uint32_t v = 0; v < n; ++v) {
    (best[v] == 0 ? left : right).push_back(sub.to_parent[v]);
  }
  recursive_bisection(g, left, first_part, k0, epsilon, tries, rng, part);
  recursive_bisection(g, right, first_part + k0, k1, epsilon, tries, rng, part);
}

GraphPartition single_run(const WeightedGraph& graph, const PartitionOptions& opt, double cap,
                          std::uint64_t run_seed) {
  Rng rng(run_seed);
  const std::uint32_t k = opt.parts;
  std::int64_t max_vertex = 0;
  for (auto w : graph.vertex_weight) max_vertex = std::max(max_vertex, w);
  const auto max_cluster = std::max<std::int64_t>(
      {max_vertex, static_cast<std::int64_t>(cap / 4.0), 1});

  std::vector<WeightedGraph> levels;
  std::vector<std::vector<std::uint32_t>> maps;
  const WeightedGraph* current = &graph;
  const std::size_t stop = opt.coarsest_per_part * k;
  while (current->n() > stop) {
    std::size_t n_coarse = 0;
    auto map = heavy_edge_matching(*current, max_cluster, rng, n_coarse);
    if (static_cast<double>(n_coarse) > 0.95 * static_cast<double>(current->n())) break;
    levels.push_back(contract(*current, map, n_coarse));
    maps.push_back(std::move(map));
    current = &levels.back();
  }

  const std::vector<double> caps(k, cap);
  std::vector<std::uint32_t> part(current->n(), 0);
  std::vector<std::uint32_t> all(current->n());
  for (std::uint32_t v = 0; v < all.size(); ++v) all[v] = v;
  recursive_bisection(*current, all, 0, k, opt.epsilon, opt.initial_tries, rng, part);
  {
    Refiner r(*current, part, k, caps);
    r.rebalance();
    r.refine();
  }
  for (std::size_t level = levels.size(); level-- > 0;) {
    const WeightedGraph& fine = level == 0 ? graph : levels[level - 1];
    std::vector<std::uint32_t> fine_part(fine.n());
    for (std::size_t v = 0; v < fine.n(); ++v) fine_part[v] = part[maps[level][v]];
    part = std::move(fine_part);
    Refiner r(fine, part, k, caps);
    r.rebalance();
    r.refine();
  }

  GraphPartition result;
  result.quality = evaluate_partition(graph, part, k);
  result.part = std::move(part);
  return result;
}

}  // namespace

double max_part_weight(std::int64_t total_weight, std::uint32_t parts, double epsilon) {
  return (1.0 + epsilon) * static_cast<double>(total_weight) / static_cast<double>(parts);
}

PartitionQuality evaluate_partition(const WeightedGraph& graph, std::span<const std::uint32_t> part,
                                    std::uint32_t parts) {
  if (part.size() != graph.n()) throw ConsistencyError("partition size does not match graph");
  PartitionQuality q;
  q.part_weights.assign(parts, 0);
  for (std::size_t v = 0; v < graph.n(); ++v) {
    if (part[v] >= parts) throw ConsistencyError("part index out of range");
    q.part_weights[part[v]] += graph.vertex_weight[v];
    for (std::size_t e = graph.offsets[v]; e < graph.offsets[v + 1]; ++e) {
      if (part[graph.adjacency[e]] != part[v]) q.edge_cut += graph.edge_weight[e];
    }
  }
  q.edge_cut /= 2;
  const std::int64_t total = graph.total_vertex_weight();
  const std::int64_t max_w = *std::max_element(q.part_weights.begin(), q.part_weights.end());
  q.balance = total > 0 ? static_cast<double>(max_w) * parts / static_cast<double>(total) : 1.0;
  return q;
}

GraphPartition partition_graph(const WeightedGraph& graph, const PartitionOptions& opt) {
  if (opt.parts < 1) throw ParameterError("parts", "must be >= 1");
  if (!(opt.epsilon >= 0.0)) throw ParameterError("epsilon", "must be >= 0");
  if (opt.runs < 1) throw ParameterError("runs", "must be >= 1");

  if (opt.parts == 1 || graph.n() == 0) {
    GraphPartition r;
    r.part.assign(graph.n(), 0);
    r.quality = evaluate_partition(graph, r.part, opt.parts);
    return r;
  }
  const double cap = max_part_weight(graph.total_vertex_weight(), opt.parts, opt.epsilon);
  for (std::size_t v = 0; v < graph.n(); ++v) {
    if (!fits(graph.vertex_weight[v], cap)) {
      throw InfeasibleError(v, "vertex " + std::to_string(v) + " has weight " +
                                   std::to_string(graph.vertex_weight[v]) +
                                   " above the part cap " + std::to_string(cap));
    }
  }

  GraphPartition best;
  std::tuple<bool, std::int64_t, double> best_key{};
  for (std::uint32_t run = 0; run < opt.runs; ++run) {
    GraphPartition r = single_run(graph, opt, cap, derive_seed(opt.seed, run));
    const std::int64_t max_w =
        *std::max_element(r.quality.part_weights.begin(), r.quality.part_weights.end());
    const std::tuple<bool, std::int64_t, double> key{!fits(max_w, cap), r.quality.edge_cut,
                                                     r.quality.balance};
    if (run == 0 || key < best_key) {
      best = std::move(r);
      best_key = key;
    }
  }
  return best;
}

std::vector<std::uint32_t> heaviest_machine(const PartitionAssignment& assignment,
                                            const BipartiteGraph& graph) {
  if (assignment.group_slots.size() != graph.n_groups()) {
    throw ConsistencyError("assignment does not cover the graph's groups");
  }
  std::vector<std::uint32_t> owner(graph.n_images(), 0);
  std::vector<std::int64_t> incident(assignment.machines);
  for (std::size_t i = 0; i < graph.n_images(); ++i) {
    std::fill(incident.begin(), incident.end(), 0);
    for (const auto& e : graph.image_edges[i]) {
      incident[assignment.group_slots[e.to].machine] += e.weight;
    }
    owner[i] = static_cast<std::uint32_t>(
        std::max_element(incident.begin(), incident.end()) - incident.begin());
  }
  return owner;
}

std::vector<std::uint32_t> image_ownership(const PartitionAssignment& assignment,
                                           const BipartiteGraph& graph) {
  if (!assignment.image_machine.empty()) {
    if (assignment.image_machine.size() != graph.n_images()) {
      throw ConsistencyError("assignment image parts do not match the graph");
    }
    return assignment.image_machine;
  }
  return heaviest_machine(assignment, graph);
}

HierarchicalResult hierarchical_partition(const BipartiteGraph& graph,
                                          const HierarchicalOptions& opt) {
  if (opt.machines < 1) throw ParameterError("machines", "must be >= 1");
  if (opt.gpus_per_machine < 1) throw ParameterError("gpus_per_machine", "must be >= 1");
  const std::size_t ng = graph.n_groups();
  const std::size_t ni = graph.n_images();
  const WeightedGraph full = to_weighted_graph(graph, opt.image_weight_multiplier);

  PartitionOptions level1;
  level1.parts = opt.machines;
  level1.epsilon = opt.epsilon;
  level1.seed = opt.seed;
  level1.runs = opt.runs;
  const GraphPartition machines = partition_graph(full, level1);

  HierarchicalResult result;
  PartitionAssignment& a = result.assignment;
  a.machines = opt.machines;
  a.gpus_per_machine = opt.gpus_per_machine;
  a.group_slots.resize(ng);
  a.image_machine.resize(ni);
  for (std::size_t g = 0; g < ng; ++g) a.group_slots[g].machine = machines.part[g];
  for (std::size_t i = 0; i < ni; ++i) a.image_machine[i] = machines.part[ng + i];
  result.machine_quality = machines.quality;

  const auto home = heaviest_machine(a, graph);
  std::vector<std::uint32_t> final_part(ng + ni, 0);
  for (std::uint32_t m = 0; m < opt.machines; ++m) {
    std::vector<std::uint32_t> members;
    for (std::uint32_t g = 0; g < ng; ++g) {
      if (machines.part[g] == m) members.push_back(g);
    }
    for (std::uint32_t i = 0; i < ni; ++i) {
      if (home[i] == m) members.push_back(static_cast<std::uint32_t>(ng + i));
    }
    const Subgraph sub = induced_subgraph(full, members);
    PartitionOptions level2;
    level2.parts = opt.gpus_per_machine;
    level2.epsilon = opt.epsilon;
    level2.seed = opt.machines == 1 ? opt.seed : derive_seed(opt.seed, m + 1);
    level2.runs = opt.runs;
    const GraphPartition gpus = partition_graph(sub.graph, level2);
    for (std::size_t v = 0; v < members.size(); ++v) {
      const std::uint32_t vertex = sub.to_parent[v];
      final_part[vertex] = m * opt.gpus_per_machine + gpus.part[v];
      if (vertex < ng) a.group_slots[vertex].gpu = gpus.part[v];
    }
  }
  result.gpu_quality = evaluate_partition(full, final_part, a.n_gpus());
  return result;
}

void write_quality_json(const HierarchicalResult& result, std::ostream& out) {
  auto to_json = [](const PartitionQuality& q) {
    return nlohmann::json{{"edge_cut", q.edge_cut},
                          {"balance", q.balance},
                          {"part_weights", q.part_weights}};
  };
  nlohmann::json j = to_json(result.gpu_quality);
  j["machines"] = result.assignment.machines;
  j["gpus_per_machine"] = result.assignment.gpus_per_machine;
  j["machine_level"] = to_json(result.machine_quality);
  out << j.dump(2) << '\n';
}

}  // namespace splatsched
