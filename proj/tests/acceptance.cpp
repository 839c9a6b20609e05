// Acceptance checks, one line per criterion. Exit status is non-zero when any
// criterion fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>

#include "oracles.hpp"
#include "splatsched/placement.hpp"
#include "splatsched/simulator.hpp"

using namespace splatsched;

namespace {

constexpr double kAerialReductionFloor = 50.0;  // percent
constexpr double kStreetReductionFloor = 30.0;  // percent
constexpr double kRuntimeLimit = 300.0;         // seconds per comparison
constexpr double kLocalSearchShare = 0.90;
constexpr double kBisectionSlack = 1.5;
constexpr int kBisectionWithin = 95;            // of 100
constexpr double kImbalanceSlack = 1.1;

struct Outcome {
  bool pass = false;
  std::string detail;
};

template <class... Args>
std::string format(const char* fmt, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return buf;
}

ClusterTopology topo(std::uint32_t m, std::uint32_t g) {
  ClusterTopology t;
  t.machines = m;
  t.gpus_per_machine = g;
  return t;
}

struct Comparison {
  SceneDataset dataset;
  ClusterTopology topology;
  SimConfig config;
  EpochReport random, locality;
  double seconds = 0.0;
};

Comparison compare(SceneDataset ds, const ClusterTopology& t, SimConfig c) {
  Comparison out{std::move(ds), t, c, {}, {}, 0.0};
  const auto start = std::chrono::steady_clock::now();
  c.strategy = StrategyKind::kRandom;
  out.random = run_training_sim(out.dataset, t, c);
  c.strategy = StrategyKind::kLocalityAware;
  out.locality = run_training_sim(out.dataset, t, c);
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

Comparison aerial_run() {
  AerialSceneParams p;
  p.seed = 7;
  p.n_points = 200000;
  p.n_views = 512;
  SimConfig c;
  c.seed = 7;
  c.epochs = 1;
  c.batch_size = 16;
  c.patches_per_side = 2;
  c.group_size = 2048;
  return compare(generate_aerial_scene(p), topo(4, 4), c);
}

Comparison street_run() {
  StreetSceneParams p;
  p.seed = 7;
  p.n_points = 100000;
  p.n_views = 256;
  p.background_fraction = 0.05;
  p.waypoints = default_street_waypoints();
  SimConfig c;
  c.seed = 7;
  c.epochs = 1;
  c.batch_size = 16;
  c.patches_per_side = 4;
  c.group_size = 2048;
  c.locality.inter.p = 4.0;  // irregular topology
  return compare(generate_street_scene(p), topo(4, 4), c);
}

Outcome reduction(const Comparison& r, double floor) {
  const double red = comm_reduction(r.random, r.locality);
  return {red >= floor && r.seconds <= kRuntimeLimit,
          format("reduction %.2f%% (floor %.0f%%), %lld vs %lld inter-machine points, %.2f s", red,
                 floor, static_cast<long long>(r.locality.totals.total_inter_forward),
                 static_cast<long long>(r.random.totals.total_inter_forward), r.seconds)};
}

Outcome lsa_oracle() {
  Rng rng(3001);
  int agree = 0;
  const int trials = 200;
  for (int trial = 0; trial < trials; ++trial) {
    const std::uint32_t gpus = 1 + static_cast<std::uint32_t>(rng.below(4));
    const std::size_t n = gpus * (1 + rng.below(8 / gpus));
    const AccessMatrix a = oracle::random_access(rng, n, gpus, 1000);
    const auto brute = brute_force_optimal(a, {1.0, 0.0, 0.0, 0.0, 2.0});
    const auto lsa = objective(a, lsa_assign(a), CostCoefficients{});
    agree += lsa.total_local == brute.breakdown.total_local;
  }
  return {agree == trials, format("%d/%d instances equal", agree, trials)};
}

// Patches see their home GPU heavily and the rest lightly.
AccessMatrix local_instance(Rng& rng, std::size_t n, std::uint32_t gpus) {
  AccessMatrix a(n, gpus);
  for (std::size_t j = 0; j < n; ++j) {
    const auto home = rng.below(gpus);
    for (std::uint32_t k = 0; k < gpus; ++k) {
      a(j, k) = static_cast<std::int64_t>(k == home ? 200 + rng.below(801) : rng.below(301));
    }
  }
  return a;
}

Outcome local_search_properties() {
  Rng rng(3002);
  const CostCoefficients c = CostCoefficients::inter_node();
  int monotone = 0, improved = 0;
  const int trials = 100;
  for (int trial = 0; trial < trials; ++trial) {
    const AccessMatrix a = local_instance(rng, 16, 4);
    const PlacementSolution init = lsa_assign(a);
    const auto r = local_search(a, init, c);
    std::vector<std::uint32_t> w = init.gpu_of_patch;
    double prev = objective(a, {w, 4}, c).relaxed;
    bool ok = true;
    for (auto [x, y] : r.swaps) {
      std::swap(w[x], w[y]);
      const double now = objective(a, {w, 4}, c).relaxed;
      ok = ok && now <= prev;
      prev = now;
    }
    ok = ok && w == r.solution.gpu_of_patch;
    monotone += ok;
    const auto before = objective(a, init, c);
    const auto after = objective(a, r.solution, c);
    improved += after.max_send + after.max_recv <= before.max_send + before.max_recv;
  }
  return {monotone == trials && improved >= kLocalSearchShare * trials,
          format("monotone %d/%d, send+recv not worse %d/%d (need %.0f%%)", monotone, trials,
                 improved, trials, 100 * kLocalSearchShare)};
}

Outcome partitioner_quality() {
  Rng rng(3003);
  int within = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 8 + 2 * rng.below(5);
    const BipartiteGraph b = oracle::random_two_cluster_graph(rng, n, 4 + rng.below(9), 0.15);
    const WeightedGraph w = to_weighted_graph(b);
    PartitionOptions opt;
    opt.parts = 2;
    opt.seed = static_cast<std::uint64_t>(trial);
    const GraphPartition part = partition_graph(w, opt);
    const auto best = oracle::min_bisection_cut(b, max_part_weight(w.total_vertex_weight(), 2, opt.epsilon));
    within += best && static_cast<double>(part.quality.edge_cut) <= kBisectionSlack * static_cast<double>(*best);
  }
  int zero = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 4 + 2 * rng.below(7);
    const BipartiteGraph b = oracle::random_two_cluster_graph(rng, n, 2 + rng.below(10), 0.0);
    PartitionOptions opt;
    opt.parts = 2;
    opt.seed = static_cast<std::uint64_t>(trial);
    zero += partition_graph(to_weighted_graph(b), opt).quality.edge_cut == 0;
  }
  return {within >= kBisectionWithin && zero == 100,
          format("within %.1fx of optimum %d/100 (need %d), disconnected cut 0 in %d/100",
                 kBisectionSlack, within, kBisectionWithin, zero)};
}

std::int64_t sum(const std::vector<std::int64_t>& v) {
  std::int64_t s = 0;
  for (auto x : v) s += x;
  return s;
}

// Conservation per iteration; the accessed total is rebuilt from the views.
Outcome conservation(const std::vector<const Comparison*>& runs) {
  std::size_t checked = 0, bad = 0;
  for (const Comparison* run : runs) {
    for (const EpochReport* r : {&run->random, &run->locality}) {
      Simulator sim(run->dataset, run->topology, r->config);
      AccessOptions opt;
      opt.mode = run->dataset.profile.culling_mode;
      for (const auto& t : r->iterations) {
        std::vector<CameraView> views;
        for (auto v : t.views) views.push_back(run->dataset.views[v]);
        const std::int64_t accessed =
            build_access_matrix(sim.offline().grouped, sim.offline().owner, run->topology.n_gpus(),
                                views, r->config.patches_per_side, opt)
                .total();
        const LegLoads f = t.forward, b = t.backward();
        bool ok = sum(f.send_intra) == sum(f.recv_intra) && sum(f.send_inter) == sum(f.recv_inter) &&
                  sum(b.send_intra) == sum(b.recv_intra) && sum(b.send_inter) == sum(b.recv_inter) &&
                  t.transferred() + t.total_local == accessed;
        ++checked;
        bad += !ok;
      }
    }
  }
  return {bad == 0 && checked > 0, format("%zu iterations, %zu violations", checked, bad)};
}

Outcome culling_soundness() {
  Rng rng(3004);
  std::size_t unsound = 0, outside = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const CameraView v = oracle::random_camera(rng);
    const Frustum f = frustum_from_view(v);
    const Vec3 center = oracle::point_near_camera(rng, v);
    const Vec3 half{rng.uniform(0.01, 3.0), rng.uniform(0.01, 3.0), rng.uniform(0.01, 3.0)};
    std::vector<Point3> members;
    Aabb box;
    for (int i = 0; i < 50; ++i) {
      members.push_back({static_cast<float>(center.x + rng.uniform(-half.x, half.x)),
                         static_cast<float>(center.y + rng.uniform(-half.y, half.y)),
                         static_cast<float>(center.z + rng.uniform(-half.z, half.z))});
      box.extend(members.back());
    }
    if (cull_group(f, box) != GroupVisibility::kOutside) continue;
    ++outside;
    for (const auto& m : members) unsound += cull_point(f, m);
  }
  std::size_t agree = 0;
  const std::size_t points = 10000;
  for (std::size_t i = 0; i < points; ++i) {
    const CameraView v = oracle::random_camera(rng);
    const Vec3 q = oracle::point_near_camera(rng, v);
    const Point3 p{static_cast<float>(q.x), static_cast<float>(q.y), static_cast<float>(q.z)};
    agree += cull_point(frustum_from_view(v), p) == oracle::visible(v, Vec3(p));
  }
  return {unsound == 0 && agree == points,
          format("%zu outside groups, %zu visible members dropped; point oracle %zu/%zu", outside,
                 unsound, agree, points)};
}

Outcome load_balance(const Comparison& r) {
  const double ours = r.locality.totals.mean_comp_imbalance;
  const double base = r.random.totals.mean_comp_imbalance;
  return {ours <= kImbalanceSlack * base,
          format("locality %.4f vs random %.4f (limit x%.1f)", ours, base, kImbalanceSlack)};
}

// Half the points live in [0, 1], the other half in [2, 3]; every view is
// taken in [0, 1].
Outcome temporal_culling() {
  Rng rng(3005);
  std::vector<Point3> pts;
  std::vector<PresenceInterval> presence;
  for (int i = 0; i < 1000; ++i) {
    pts.push_back({static_cast<float>(rng.uniform(-20, 20)), static_cast<float>(rng.uniform(-20, 20)),
                   static_cast<float>(rng.uniform(-20, 20))});
    presence.push_back(i % 2 ? PresenceInterval{2.f, 3.f} : PresenceInterval{0.f, 1.f});
  }
  SceneDataset ds;
  ds.profile = WorkloadProfile::gaussian_4d();
  ds.cloud = PointCloud(pts, presence);
  for (std::uint32_t v = 0; v < 8; ++v) {
    CameraView cam = oracle::random_camera(rng);
    cam.id = v;
    cam.timestamp = rng.uniform(0.0, 1.0);
    ds.views.push_back(cam);
  }
  ds.validate();

  const GroupedCloud grouped = zorder_group(ds.cloud, 32);
  const std::vector<std::uint32_t> owner(grouped.sorted.size(), 0);
  AccessOptions opt;
  opt.mode = CullingMode::kSpatioTemporal;
  const std::uint32_t p = 2;
  const AccessMatrix got = build_access_matrix(grouped, owner, 1, ds.views, p, opt);
  std::size_t mismatches = 0;
  std::int64_t counted = 0;
  for (std::size_t v = 0; v < ds.views.size(); ++v) {
    std::int64_t want = 0, have = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (presence[i].start != 0.f) continue;  // the absent half
      want += oracle::visible(ds.views[v], Vec3(pts[i]));
    }
    for (std::size_t j = 0; j < p * p; ++j) have += got.row_sum(v * p * p + j);
    mismatches += want != have;
    counted += want;
  }
  return {mismatches == 0 && counted > 0,
          format("%zu views, %lld visible present points, %zu mismatching views", ds.views.size(),
                 static_cast<long long>(counted), mismatches)};
}

std::string report_bytes(const EpochReport& r) {
  std::stringstream s;
  write_report_json(r, s);
  write_iterations_csv(r, s);
  return s.str();
}

Outcome determinism(const Comparison& aerial, const Comparison& street) {
  int same = 0;
  for (const Comparison* first : {&aerial, &street}) {
    const Comparison again = compare(first->dataset, first->topology, first->config);
    same += report_bytes(first->random) == report_bytes(again.random);
    same += report_bytes(first->locality) == report_bytes(again.locality);
  }
  return {same == 4, format("%d/4 reports byte-identical on rerun", same)};
}

}  // namespace

int main() {
  int failed = 0;
  auto line = [&](int id, const char* name, const Outcome& o) {
    std::printf("criterion %2d %-28s %s  %s\n", id, name, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  };

  const Comparison aerial = aerial_run();
  line(1, "aerial reduction", reduction(aerial, kAerialReductionFloor));
  const Comparison street = street_run();
  line(2, "street reduction", reduction(street, kStreetReductionFloor));
  line(3, "LSA optimality", lsa_oracle());
  line(4, "local search", local_search_properties());
  line(5, "partitioner quality", partitioner_quality());
  line(6, "conservation", conservation({&aerial, &street}));
  line(7, "culling soundness", culling_soundness());
  line(8, "load balance", load_balance(aerial));
  line(9, "temporal culling", temporal_culling());
  line(10, "determinism", determinism(aerial, street));
  std::printf("%d of 10 criteria failed\n", failed);
  return failed == 0 ? 0 : 1;
}
