#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "splatsched/access_matrix.hpp"
#include "splatsched/geometry.hpp"
#include "splatsched/partition_assignment.hpp"
#include "splatsched/scene.hpp"

namespace splatsched {

/// Half-space { p : dot(normal, p) + offset >= 0 }, or > 0 when `strict`.
struct Plane {
  Vec3 normal;
  double offset = 0.0;
  bool strict = false;

  double signed_distance(Vec3 p) const { return dot(normal, p) + offset; }

  /// `radius` inflates the half-space (points treated as spheres).
  bool admits(Vec3 p, double radius = 0.0) const {
    const double d = signed_distance(p) + radius;
    return strict ? d > 0.0 : d >= 0.0;
  }

  Plane flipped(bool strict_side) const { return {-normal, -offset, strict_side}; }
};

/// Half-open pixel rectangle [x0, x1) x [y0, y1).
struct PixelRect {
  std::uint32_t x0 = 0;
  std::uint32_t y0 = 0;
  std::uint32_t x1 = 0;
  std::uint32_t y1 = 0;

  bool empty() const { return x1 <= x0 || y1 <= y0; }
};

struct Frustum {
  enum Side { kLeft = 0, kRight, kTop, kBottom, kNear, kFar };
  std::array<Plane, 6> planes;

  bool contains(Vec3 p, double radius = 0.0) const {
    for (const auto& plane : planes) {
      if (!plane.admits(p, radius)) return false;
    }
    return true;
  }
};

/// Side planes follow the patch's angular extent. Interior patch edges on
/// the right/bottom are strict so the patches of a view partition its points.
Frustum frustum_from_view(const CameraView& view, std::optional<PixelRect> patch = std::nullopt);

/// Rectangle of patch (row, col) in a P x P split of the view's image.
PixelRect patch_rect(const CameraView& view, std::uint32_t patches_per_side, std::uint32_t row,
                     std::uint32_t col);

/// True iff the point is kept: inside all six planes and, for spatio-temporal
/// culling, `view_time` lies in `presence`. Throws ConsistencyError when the
/// temporal inputs are missing under kSpatioTemporal.
bool cull_point(const Frustum& frustum, const Point3& point,
                CullingMode mode = CullingMode::kSpatial,
                std::optional<double> view_time = std::nullopt,
                std::optional<PresenceInterval> presence = std::nullopt, double radius = 0.0);

enum class GroupVisibility { kOutside, kIntersecting };

/// Conservative box test: Outside only if, for some plane, every corner of
/// the box fails that plane.
GroupVisibility cull_group(const Frustum& frustum, const Aabb& box, double radius = 0.0);

inline constexpr unsigned kMaxMortonBits = 21;

/// Quantizes each axis over `bbox` to `bits_per_axis` bits and interleaves
/// them x, y, z from the least significant bit.
std::uint64_t morton_code(const Point3& point, const Aabb& bbox,
                          unsigned bits_per_axis = kMaxMortonBits);

struct PointGroup {
  std::uint32_t id = 0;
  std::size_t begin = 0;
  std::size_t end = 0;
  Aabb aabb;

  std::size_t size() const { return end - begin; }
};

struct GroupedCloud {
  PointCloud sorted;
  std::vector<std::uint32_t> original_index;  // sorted position -> input index
  std::vector<PointGroup> groups;
  std::size_t group_size = 0;

  /// Group containing sorted position `i`.
  std::size_t group_of(std::size_t i) const { return i / group_size; }
};

inline constexpr std::size_t kDefaultGroupSize = 2048;

/// Stable Morton sort over the cloud's bounding cube, then blocks of G.
GroupedCloud zorder_group(const PointCloud& cloud, std::size_t group_size = kDefaultGroupSize,
                          unsigned bits_per_axis = kMaxMortonBits);

enum class Granularity { kExact, kGroupApprox };

struct AccessOptions {
  Granularity granularity = Granularity::kExact;
  CullingMode mode = CullingMode::kSpatial;
  double point_radius = 0.0;
};

/// Rows: view_index * P^2 + patch_row * P + patch_col. Columns: GPUs.
/// `owner` gives the GPU of each point in sorted order.
AccessMatrix build_access_matrix(const GroupedCloud& grouped, std::span<const std::uint32_t> owner,
                                 std::uint32_t n_gpus, std::span<const CameraView> batch,
                                 std::uint32_t patches_per_side, const AccessOptions& options = {});

AccessMatrix build_access_matrix(const GroupedCloud& grouped, const PartitionAssignment& partition,
                                 std::span<const CameraView> batch,
                                 std::uint32_t patches_per_side, const AccessOptions& options = {});

/// Per-point GPU (sorted order) implied by a group partition.
std::vector<std::uint32_t> point_owners(const GroupedCloud& grouped,
                                        const PartitionAssignment& partition);

}  // namespace splatsched
