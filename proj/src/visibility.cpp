#include "splatsched/visibility.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "splatsched/error.hpp"

namespace splatsched {

namespace {

// Plane through the camera centre containing `along` and the ray
// forward + t * across; admits directions with larger t.
Plane boundary_plane(const CameraView& view, Vec3 across, double t) {
  const Vec3 n = (1.0 / std::sqrt(1.0 + t * t)) * (across - t * view.forward());
  return {n, -dot(n, view.position), false};
}

double pixel_tangent(std::uint32_t pixel, std::uint32_t extent, double fov) {
  return (2.0 * static_cast<double>(pixel) / static_cast<double>(extent) - 1.0) *
         std::tan(0.5 * fov);
}

// Spreads the low 21 bits of v so bit i lands at bit 3i.
std::uint64_t spread_bits(std::uint64_t v) {
  v &= 0x1FFFFFull;
  v = (v | (v << 32)) & 0x1F00000000FFFFull;
  v = (v | (v << 16)) & 0x1F0000FF0000FFull;
  v = (v | (v << 8)) & 0x100F00F00F00F00Full;
  v = (v | (v << 4)) & 0x10C30C30C30C30C3ull;
  v = (v | (v << 2)) & 0x1249249249249249ull;
  return v;
}

std::uint64_t quantize(double c, double lo, double hi, std::uint64_t max_q) {
  const double extent = hi - lo;
  if (!(extent > 0.0)) return 0;
  const double q = std::floor((c - lo) / extent * static_cast<double>(max_q));
  if (!(q > 0.0)) return 0;
  if (q >= static_cast<double>(max_q)) return max_q;
  return static_cast<std::uint64_t>(q);
}

void require_temporal(const GroupedCloud& grouped, std::span<const CameraView> batch) {
  if (!grouped.sorted.has_presence()) {
    throw ConsistencyError("spatio-temporal culling requires per-point presence intervals");
  }
  for (const auto& v : batch) {
    if (!v.timestamp) {
      throw ConsistencyError("spatio-temporal culling requires a timestamp on view " +
                             std::to_string(v.id));
    }
  }
}

}  // namespace

Frustum frustum_from_view(const CameraView& view, std::optional<PixelRect> patch) {
  const PixelRect rect = patch.value_or(PixelRect{0, 0, view.width, view.height});
  if (rect.empty()) throw ParameterError("patch", "empty patch rectangle");
  if (rect.x1 > view.width || rect.y1 > view.height) {
    throw ParameterError("patch", "patch rectangle exceeds the image");
  }

  const Vec3 f = view.forward();
  Frustum fr;
  fr.planes[Frustum::kLeft] =
      boundary_plane(view, view.right(), pixel_tangent(rect.x0, view.width, view.fov_x));
  fr.planes[Frustum::kRight] =
      boundary_plane(view, view.right(), pixel_tangent(rect.x1, view.width, view.fov_x))
          .flipped(rect.x1 != view.width);
  fr.planes[Frustum::kTop] =
      boundary_plane(view, view.down(), pixel_tangent(rect.y0, view.height, view.fov_y));
  fr.planes[Frustum::kBottom] =
      boundary_plane(view, view.down(), pixel_tangent(rect.y1, view.height, view.fov_y))
          .flipped(rect.y1 != view.height);
  fr.planes[Frustum::kNear] = {f, -(dot(f, view.position) + view.near), false};
  fr.planes[Frustum::kFar] = {-f, dot(f, view.position) + view.far, false};
  return fr;
}

PixelRect patch_rect(const CameraView& view, std::uint32_t p, std::uint32_t row,
                     std::uint32_t col) {
  if (p == 0) throw ParameterError("P", "must be >= 1");
  if (row >= p || col >= p) throw ParameterError("patch", "patch index out of range");
  auto edge = [p](std::uint32_t i, std::uint32_t extent) {
    return static_cast<std::uint32_t>(std::uint64_t{i} * extent / p);
  };
  return {edge(col, view.width), edge(row, view.height), edge(col + 1, view.width),
          edge(row + 1, view.height)};
}

bool cull_point(const Frustum& frustum, const Point3& point, CullingMode mode,
                std::optional<double> view_time, std::optional<PresenceInterval> presence,
                double radius) {
  if (mode == CullingMode::kSpatioTemporal && (!view_time || !presence)) {
    throw ConsistencyError("spatio-temporal culling needs both view time and presence interval");
  }
  if (!frustum.contains(Vec3(point), radius)) return false;
  if (mode == CullingMode::kSpatioTemporal) return presence->contains(*view_time);
  return true;
}

GroupVisibility cull_group(const Frustum& frustum, const Aabb& box, double radius) {
  for (const auto& plane : frustum.planes) {
    // The corner farthest along the normal maximizes the signed distance, so
    // it is the only one that can pass if any does. A small relative slack
    // keeps the test sound against rounding in the per-point evaluation.
    const Vec3 far_corner{plane.normal.x >= 0 ? box.max.x : box.min.x,
                          plane.normal.y >= 0 ? box.max.y : box.min.y,
                          plane.normal.z >= 0 ? box.max.z : box.min.z};
    const double d = plane.signed_distance(far_corner);
    const double slack = 1e-9 * (1.0 + std::abs(plane.offset) + std::abs(far_corner.x) +
                                 std::abs(far_corner.y) + std::abs(far_corner.z));
    if (d + radius + slack < 0.0) return GroupVisibility::kOutside;
  }
  return GroupVisibility::kIntersecting;
}

std::uint64_t morton_code(const Point3& point, const Aabb& bbox, unsigned bits) {
  if (bits < 1 || bits > kMaxMortonBits) {
    throw ParameterError("bits_per_axis", "must be in [1, 21]");
  }
  const std::uint64_t max_q = (std::uint64_t{1} << bits) - 1;
  const std::uint64_t qx = quantize(point.x, bbox.min.x, bbox.max.x, max_q);
  const std::uint64_t qy = quantize(point.y, bbox.min.y, bbox.max.y, max_q);
  const std::uint64_t qz = quantize(point.z, bbox.min.z, bbox.max.z, max_q);
  return spread_bits(qx) | (spread_bits(qy) << 1) | (spread_bits(qz) << 2);
}

GroupedCloud zorder_group(const PointCloud& cloud, std::size_t group_size, unsigned bits) {
  if (group_size < 1) throw ParameterError("G", "group size must be >= 1");
  if (cloud.size() == 0) throw ParameterError("points", "point cloud must be non-empty");

  // Quantize over the bounding cube so every axis shares one scale; a
  // per-axis box would let a thin axis dominate the leading bits.
  const Aabb& b = cloud.bounds();
  const double side =
      std::max({b.max.x - b.min.x, b.max.y - b.min.y, b.max.z - b.min.z});
  Aabb cube;
  cube.min = b.min;
  cube.max = b.min + Vec3{side, side, side};

  const auto pts = cloud.points();
  std::vector<std::uint64_t> codes(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) codes[i] = morton_code(pts[i], cube, bits);

  GroupedCloud g;
  g.group_size = group_size;
  g.original_index.resize(pts.size());
  std::iota(g.original_index.begin(), g.original_index.end(), 0u);
  std::stable_sort(g.original_index.begin(), g.original_index.end(),
                   [&](std::uint32_t a, std::uint32_t c) { return codes[a] < codes[c]; });

  std::vector<Point3> sorted(pts.size());
  std::vector<PresenceInterval> presence;
  if (cloud.has_presence()) presence.resize(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    sorted[i] = pts[g.original_index[i]];
    if (cloud.has_presence()) presence[i] = cloud.presence()[g.original_index[i]];
  }

  for (std::size_t begin = 0; begin < sorted.size(); begin += group_size) {
    PointGroup group;
    group.id = static_cast<std::uint32_t>(g.groups.size());
    group.begin = begin;
    group.end = std::min(sorted.size(), begin + group_size);
    for (std::size_t i = group.begin; i < group.end; ++i) group.aabb.extend(sorted[i]);
    g.groups.push_back(group);
  }
  g.sorted = PointCloud(std::move(sorted), std::move(presence));
  return g;
}

std::vector<std::uint32_t> point_owners(const GroupedCloud& grouped,
                                        const PartitionAssignment& partition) {
  if (partition.group_slots.size() != grouped.groups.size()) {
    throw ConsistencyError("partition covers " + std::to_string(partition.group_slots.size()) +
                           " groups but the cloud has " + std::to_string(grouped.groups.size()));
  }
  std::vector<std::uint32_t> owner(grouped.sorted.size());
  for (const auto& group : grouped.groups) {
    const auto& slot = partition.group_slots[group.id];
    if (slot.machine >= partition.machines || slot.gpu >= partition.gpus_per_machine) {
      throw ConsistencyError("group " + std::to_string(group.id) + " assigned outside topology");
    }
    std::fill(owner.begin() + static_cast<std::ptrdiff_t>(group.begin),
              owner.begin() + static_cast<std::ptrdiff_t>(group.end),
              partition.global_gpu(group.id));
  }
  return owner;
}

AccessMatrix build_access_matrix(const GroupedCloud& grouped, std::span<const std::uint32_t> owner,
                                 std::uint32_t n_gpus, std::span<const CameraView> batch,
                                 std::uint32_t p, const AccessOptions& options) {
  if (p < 1) throw ParameterError("P", "must be >= 1");
  if (n_gpus < 1) throw ParameterError("n_gpus", "must be >= 1");
  if (owner.size() != grouped.sorted.size()) {
    throw ConsistencyError("ownership covers " + std::to_string(owner.size()) +
                           " points but the cloud has " + std::to_string(grouped.sorted.size()));
  }
  for (auto k : owner) {
    if (k >= n_gpus) throw ConsistencyError("point owner outside GPU range");
  }
  const bool temporal = options.mode == CullingMode::kSpatioTemporal;
  if (temporal) require_temporal(grouped, batch);

  const std::size_t per_view = std::size_t{p} * p;
  AccessMatrix m(batch.size() * per_view, n_gpus);
  const auto pts = grouped.sorted.points();
  const auto presence = grouped.sorted.presence();
  const double r = options.point_radius;
  // With inflated points, patches overlap and a point may count in several.
  const bool unique_patch = r <= 0.0;

  std::vector<Frustum> patches(per_view);
  std::vector<std::uint32_t> candidates;
  candidates.reserve(per_view);
  for (std::size_t v = 0; v < batch.size(); ++v) {
    const CameraView& view = batch[v];
    const Frustum full = frustum_from_view(view);
    for (std::uint32_t row = 0; row < p; ++row) {
      for (std::uint32_t col = 0; col < p; ++col) {
        patches[row * p + col] = frustum_from_view(view, patch_rect(view, p, row, col));
      }
    }
    const double t = temporal ? *view.timestamp : 0.0;
    const std::size_t row0 = v * per_view;

    for (const auto& group : grouped.groups) {
      if (cull_group(full, group.aabb, r) == GroupVisibility::kOutside) continue;
      candidates.clear();
      for (std::uint32_t j = 0; j < per_view; ++j) {
        if (cull_group(patches[j], group.aabb, r) == GroupVisibility::kIntersecting) {
          candidates.push_back(j);
        }
      }
      if (candidates.empty()) continue;

      if (options.granularity == Granularity::kGroupApprox) {
        for (std::size_t i = group.begin; i < group.end; ++i) {
          for (auto j : candidates) ++m(row0 + j, owner[i]);
        }
        continue;
      }
      for (std::size_t i = group.begin; i < group.end; ++i) {
        if (temporal && !presence[i].contains(t)) continue;
        const Vec3 q(pts[i]);
        for (auto j : candidates) {
          if (patches[j].contains(q, r)) {
            ++m(row0 + j, owner[i]);
            if (unique_patch) break;
          }
        }
      }
    }
  }
  return m;
}

AccessMatrix build_access_matrix(const GroupedCloud& grouped, const PartitionAssignment& partition,
                                 std::span<const CameraView> batch, std::uint32_t p,
                                 const AccessOptions& options) {
  return build_access_matrix(grouped, point_owners(grouped, partition), partition.n_gpus(), batch,
                             p, options);
}

}  // namespace splatsched
