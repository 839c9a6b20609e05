#include <numbers>
#include <sstream>

#include "doctest.h"
#include "oracles.hpp"
#include "splatsched/error.hpp"
#include "splatsched/visibility.hpp"

using namespace splatsched;

namespace {

// Oracle interleave: bit i of q goes to bit 3i + axis.
std::uint64_t interleave(std::uint64_t qx, std::uint64_t qy, std::uint64_t qz, unsigned bits) {
  std::uint64_t code = 0;
  for (unsigned i = 0; i < bits; ++i) {
    code |= ((qx >> i) & 1u) << (3 * i);
    code |= ((qy >> i) & 1u) << (3 * i + 1);
    code |= ((qz >> i) & 1u) << (3 * i + 2);
  }
  return code;
}

}  // namespace

TEST_CASE("frustum of a 90 degree camera at the origin") {
  const CameraView v = oracle::make_camera({0, 0, 0}, {0, 0, 1}, {0, -1, 0},
                                           std::numbers::pi / 2, 100, 100, 1.0, 100.0);
  const Frustum f = frustum_from_view(v);
  for (const auto& plane : f.planes) CHECK(norm(plane.normal) == doctest::Approx(1.0));

  CHECK(f.contains({0, 0, 50}));
  CHECK(f.contains({0, 0, 1}));     // on the near plane
  CHECK(f.contains({0, 0, 100}));   // on the far plane
  CHECK_FALSE(f.contains({0, 0, 0.5}));
  CHECK_FALSE(f.contains({0, 0, 100.5}));
  CHECK(f.contains({49, 0, 50}));
  CHECK_FALSE(f.contains({51, 0, 50}));
  CHECK(f.contains({0, -49, 50}));
  CHECK_FALSE(f.contains({0, 51, 50}));
  CHECK_FALSE(f.contains({0, 0, -50}));
  CHECK(f.contains({0.5, 0.5, 50}, 0.0));
  CHECK(f.contains({51, 0, 50}, 1.0));  // radius inflates the test

  CHECK(f.planes[Frustum::kNear].signed_distance({0, 0, 3}) == doctest::Approx(2.0));
  CHECK(f.planes[Frustum::kFar].signed_distance({0, 0, 90}) == doctest::Approx(10.0));
}

TEST_CASE("patch rectangles tile the image") {
  CameraView v;
  v.width = 1601;
  v.height = 900;
  for (std::uint32_t p : {1u, 2u, 3u, 7u}) {
    std::uint64_t area = 0;
    for (std::uint32_t r = 0; r < p; ++r) {
      for (std::uint32_t c = 0; c < p; ++c) {
        const PixelRect rect = patch_rect(v, p, r, c);
        CHECK(rect.x0 == oracle::grid_edge(c, v.width, p));
        CHECK(rect.y1 == oracle::grid_edge(r + 1, v.height, p));
        area += std::uint64_t{rect.x1 - rect.x0} * (rect.y1 - rect.y0);
      }
    }
    CHECK(area == std::uint64_t{v.width} * v.height);
  }
  CHECK_THROWS_AS(patch_rect(v, 0, 0, 0), ParameterError);
  CHECK_THROWS_AS(patch_rect(v, 2, 2, 0), ParameterError);
}

TEST_CASE("cull_point agrees with the projection oracle") {
  Rng rng(101);
  std::size_t visible = 0;
  for (int cam = 0; cam < 100; ++cam) {
    const CameraView v = oracle::random_camera(rng);
    const Frustum f = frustum_from_view(v);
    for (int i = 0; i < 100; ++i) {
      const Vec3 q = oracle::point_near_camera(rng, v);
      const Point3 p{static_cast<float>(q.x), static_cast<float>(q.y), static_cast<float>(q.z)};
      const bool expect = oracle::visible(v, Vec3(p));
      CHECK(cull_point(f, p) == expect);
      visible += expect;
    }
  }
  CHECK(visible > 1000);
  CHECK(visible < 9000);
}

TEST_CASE("patches of a view partition its visible points") {
  Rng rng(7);
  for (int cam = 0; cam < 20; ++cam) {
    const CameraView v = oracle::random_camera(rng);
    const std::uint32_t p = 1 + static_cast<std::uint32_t>(rng.below(4));
    const Frustum full = frustum_from_view(v);
    std::vector<Frustum> patches;
    for (std::uint32_t r = 0; r < p; ++r) {
      for (std::uint32_t c = 0; c < p; ++c) patches.push_back(frustum_from_view(v, patch_rect(v, p, r, c)));
    }
    for (int i = 0; i < 200; ++i) {
      const Vec3 q = oracle::point_near_camera(rng, v);
      int hits = 0;
      for (const auto& f : patches) hits += f.contains(q);
      CHECK(hits == (full.contains(q) ? 1 : 0));
    }
  }
}

TEST_CASE("group culling never drops a visible member") {
  Rng rng(2024);
  std::size_t outside = 0, intersecting = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const CameraView v = oracle::random_camera(rng);
    const std::uint32_t p = 1 + static_cast<std::uint32_t>(rng.below(3));
    const Frustum f = frustum_from_view(
        v, patch_rect(v, p, static_cast<std::uint32_t>(rng.below(p)),
                      static_cast<std::uint32_t>(rng.below(p))));
    const Vec3 center = oracle::point_near_camera(rng, v);
    const Vec3 half{rng.uniform(0.01, 3.0), rng.uniform(0.01, 3.0), rng.uniform(0.01, 3.0)};
    std::vector<Point3> members;
    Aabb box;
    for (int i = 0; i < 50; ++i) {
      const Vec3 q{center.x + rng.uniform(-half.x, half.x), center.y + rng.uniform(-half.y, half.y),
                   center.z + rng.uniform(-half.z, half.z)};
      members.push_back({static_cast<float>(q.x), static_cast<float>(q.y), static_cast<float>(q.z)});
      box.extend(members.back());
    }
    if (cull_group(f, box) == GroupVisibility::kOutside) {
      ++outside;
      for (const auto& m : members) CHECK_FALSE(cull_point(f, m));
    } else {
      ++intersecting;
    }
  }
  CHECK(outside > 100);
  CHECK(intersecting > 100);
}

TEST_CASE("temporal culling needs both time and presence") {
  const CameraView v = oracle::make_camera({0, 0, 0}, {0, 0, 1}, {0, -1, 0}, 1.0, 10, 10, 0.1, 10);
  const Frustum f = frustum_from_view(v);
  const Point3 p{0, 0, 5};
  CHECK(cull_point(f, p, CullingMode::kSpatioTemporal, 0.5, PresenceInterval{0.f, 1.f}));
  CHECK_FALSE(cull_point(f, p, CullingMode::kSpatioTemporal, 1.5, PresenceInterval{0.f, 1.f}));
  CHECK_THROWS_AS(cull_point(f, p, CullingMode::kSpatioTemporal), ConsistencyError);
  CHECK(cull_point(f, p, CullingMode::kSpatial, std::nullopt, std::nullopt));
}

TEST_CASE("morton codes interleave x, y, z from the low bit") {
  Aabb box;
  box.extend(Vec3{0, 0, 0});
  box.extend(Vec3{3, 3, 3});
  // 2 bits: quantized coordinates equal the integer inputs.
  CHECK(morton_code({1, 0, 0}, box, 2) == 0b000001);
  CHECK(morton_code({0, 1, 0}, box, 2) == 0b000010);
  CHECK(morton_code({0, 0, 1}, box, 2) == 0b000100);
  CHECK(morton_code({1, 2, 3}, box, 2) == 0b110101);
  CHECK(morton_code({3, 3, 3}, box, 2) == 0b111111);
  CHECK_THROWS_AS(morton_code({0, 0, 0}, box, 0), ParameterError);
  CHECK_THROWS_AS(morton_code({0, 0, 0}, box, 22), ParameterError);

  Aabb unit;
  unit.extend(Vec3{0, 0, 0});
  unit.extend(Vec3{1, 1, 1});
  Rng rng(5);
  for (int i = 0; i < 1000; ++i) {
    const std::uint64_t max_q = (1u << 21) - 1;
    const std::uint64_t qx = rng.below(max_q + 1), qy = rng.below(max_q + 1), qz = rng.below(max_q + 1);
    // Centre of each quantization cell, so rounding cannot move it.
    auto coord = [&](std::uint64_t q) { return static_cast<float>((q + 0.5) / double(max_q)); };
    const Point3 p{coord(qx), coord(qy), coord(qz)};
    auto quant = [&](float c) {
      return std::min<std::uint64_t>(max_q, static_cast<std::uint64_t>(std::floor(c * double(max_q))));
    };
    CHECK(morton_code(p, unit, 21) == interleave(quant(p.x), quant(p.y), quant(p.z), 21));
  }
}

TEST_CASE("zorder grouping sorts and blocks the cloud") {
  Rng rng(11);
  std::vector<Point3> pts;
  for (int i = 0; i < 1000; ++i) {
    pts.push_back({static_cast<float>(rng.uniform(0, 100)), static_cast<float>(rng.uniform(0, 10)),
                   static_cast<float>(rng.uniform(0, 1))});
  }
  const PointCloud cloud(pts);
  const GroupedCloud g = zorder_group(cloud, 128);
  REQUIRE(g.groups.size() == 8);
  CHECK(g.groups.back().size() == 1000 - 7 * 128);

  std::vector<int> seen(pts.size(), 0);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    ++seen[g.original_index[i]];
    CHECK(g.sorted.points()[i] == pts[g.original_index[i]]);
  }
  for (int s : seen) CHECK(s == 1);

  // Codes over the bounding cube must be non-decreasing along the order.
  Aabb cube;
  cube.min = cloud.bounds().min;
  const double side = std::max({cloud.bounds().max.x - cube.min.x, cloud.bounds().max.y - cube.min.y,
                                cloud.bounds().max.z - cube.min.z});
  cube.max = cube.min + Vec3{side, side, side};
  for (std::size_t i = 1; i < pts.size(); ++i) {
    CHECK(morton_code(g.sorted.points()[i - 1], cube) <= morton_code(g.sorted.points()[i], cube));
  }
  for (const auto& grp : g.groups) {
    for (std::size_t i = grp.begin; i < grp.end; ++i) {
      CHECK(grp.aabb.contains(g.sorted.points()[i]));
      CHECK(g.group_of(i) == grp.id);
    }
  }
  CHECK_THROWS_AS(zorder_group(cloud, 0), ParameterError);
}

TEST_CASE("access matrix matches brute-force projection") {
  Rng rng(33);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<CameraView> views;
    for (std::uint32_t i = 0; i < 3; ++i) {
      views.push_back(oracle::make_camera({rng.uniform(-2, 2), rng.uniform(-2, 2), -20},
                                          normalized(Vec3{rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), 1}),
                                          {0, -1, 0}, 1.2, 640, 480, 0.5, 60));
      views.back().id = i;
    }
    std::vector<Point3> pts;
    for (int i = 0; i < 20; ++i) {
      pts.push_back({static_cast<float>(rng.uniform(-12, 12)), static_cast<float>(rng.uniform(-9, 9)),
                     static_cast<float>(rng.uniform(-5, 5))});
    }
    const GroupedCloud g = zorder_group(PointCloud(pts), 4);
    std::vector<std::uint32_t> owner(pts.size());
    for (auto& o : owner) o = static_cast<std::uint32_t>(rng.below(3));

    for (std::uint32_t p : {1u, 2u, 3u}) {
      const AccessMatrix got = build_access_matrix(g, owner, 3, views, p);
      const AccessMatrix want =
          oracle::access_matrix(g.sorted.points(), {}, owner, 3, views, p, false);
      CHECK(got == want);

      AccessOptions approx;
      approx.granularity = Granularity::kGroupApprox;
      const AccessMatrix upper = build_access_matrix(g, owner, 3, views, p, approx);
      for (std::size_t r = 0; r < got.rows(); ++r) {
        for (std::size_t c = 0; c < got.cols(); ++c) CHECK(upper(r, c) >= got(r, c));
      }
    }
  }
}

TEST_CASE("access matrix rejects inconsistent inputs") {
  const GroupedCloud g = zorder_group(PointCloud({{0, 0, 1}, {0, 0, 2}}), 1);
  std::vector<CameraView> views{oracle::make_camera({0, 0, 0}, {0, 0, 1}, {0, -1, 0}, 1.0, 8, 8, 0.1, 5)};
  const std::vector<std::uint32_t> short_owner{0};
  CHECK_THROWS_AS(build_access_matrix(g, short_owner, 1, views, 1), ConsistencyError);
  const std::vector<std::uint32_t> bad_owner{0, 5};
  CHECK_THROWS_AS(build_access_matrix(g, bad_owner, 2, views, 1), ConsistencyError);
  const std::vector<std::uint32_t> owner{0, 1};
  AccessOptions temporal;
  temporal.mode = CullingMode::kSpatioTemporal;
  CHECK_THROWS_AS(build_access_matrix(g, owner, 2, views, 1, temporal), ConsistencyError);
  const AccessMatrix m = build_access_matrix(g, owner, 2, views, 1);
  CHECK(m(0, 0) == 1);
  CHECK(m(0, 1) == 1);
}

TEST_CASE("access CSV round-trips") {
  AccessMatrix m(3, 2);
  m(0, 0) = 5;
  m(1, 1) = 7;
  m(2, 0) = 1;
  std::stringstream s;
  write_access_csv(m, s);
  CHECK(s.str().rfind("patch_id,gpu_0,gpu_1\n", 0) == 0);
  CHECK(read_access_csv(s) == m);

  std::stringstream bad("patch_id,gpu_0\n0,abc\n");
  CHECK_THROWS_AS(read_access_csv(bad), FormatError);
  CHECK(m.merge_columns(2)(0, 0) == 5);
  CHECK(m.merge_columns(2)(1, 0) == 7);
}
