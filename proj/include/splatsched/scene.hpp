#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "splatsched/geometry.hpp"

namespace splatsched {

enum class CullingMode { kSpatial, kSpatioTemporal };

/// Per-point cost of the view-dependent state that crosses GPUs.
struct WorkloadProfile {
  std::string name;
  std::uint32_t splat_state_elements = 11;
  std::uint32_t bytes_per_element = 4;
  CullingMode culling_mode = CullingMode::kSpatial;

  static WorkloadProfile gaussian_3d();  // 11 elements
  static WorkloadProfile gaussian_2d();  // 20 elements
  static WorkloadProfile convex_3d();    // 29 elements
  /// Spatio-temporal culling with the 3D Gaussian splat state.
  static WorkloadProfile gaussian_4d();
  static WorkloadProfile by_name(const std::string& name);

  std::uint64_t bytes_per_point() const {
    return std::uint64_t{splat_state_elements} * bytes_per_element;
  }

  void validate() const;

  friend bool operator==(const WorkloadProfile&, const WorkloadProfile&) = default;
};

/// Closed time interval [start, end] during which a point exists.
struct PresenceInterval {
  float start = 0.f;
  float end = 0.f;

  bool contains(double t) const { return t >= start && t <= end; }

  friend bool operator==(const PresenceInterval&, const PresenceInterval&) = default;
};

class PointCloud {
 public:
  PointCloud() = default;
  /// Validates: non-empty, finite coordinates, presence empty or one per point
  /// with start <= end.
  explicit PointCloud(std::vector<Point3> points, std::vector<PresenceInterval> presence = {});

  std::span<const Point3> points() const { return points_; }
  std::span<const PresenceInterval> presence() const { return presence_; }
  bool has_presence() const { return !presence_.empty(); }
  std::size_t size() const { return points_.size(); }
  const Aabb& bounds() const { return bounds_; }

  friend bool operator==(const PointCloud& a, const PointCloud& b) {
    return a.points_ == b.points_ && a.presence_ == b.presence_;
  }

 private:
  std::vector<Point3> points_;
  std::vector<PresenceInterval> presence_;
  Aabb bounds_;
};

/// Pinhole camera. Camera frame: +x right, +y down, +z forward.
/// `rotation` maps camera-frame directions to world (its columns are the
/// camera axes in world coordinates).
struct CameraView {
  std::uint32_t id = 0;
  Vec3 position;
  Mat3 rotation;
  double fov_x = 1.0;  // radians
  double fov_y = 1.0;
  double near = 0.1;
  double far = 100.0;
  std::uint32_t width = 1;
  std::uint32_t height = 1;
  std::optional<double> timestamp;

  Vec3 right() const { return rotation.column(0); }
  Vec3 down() const { return rotation.column(1); }
  Vec3 forward() const { return rotation.column(2); }

  void validate() const;

  friend bool operator==(const CameraView&, const CameraView&) = default;
};

/// Rotation for a camera at `eye` looking along `forward` with `up_hint`
/// roughly pointing up in the image.
Mat3 look_rotation(Vec3 forward, Vec3 up_hint);

struct SceneDataset {
  PointCloud cloud;
  std::vector<CameraView> views;
  WorkloadProfile profile;

  /// Checks view ids are 0..n-1 in order, every view is valid and temporal
  /// data is present iff the profile is spatio-temporal.
  void validate() const;

  friend bool operator==(const SceneDataset&, const SceneDataset&) = default;
};

struct AerialSceneParams {
  std::uint64_t seed = 1;
  std::size_t n_points = 100000;
  std::size_t grid_rows = 8;  // density-noise cells
  std::size_t grid_cols = 8;
  std::size_t n_views = 64;
  double altitude = 50.0;
  double ground_size = 1000.0;  // square ground [0, size]^2
  double max_height = 20.0;     // point heights uniform in [0, max_height]
  double density_sigma = 0.75;  // log-normal per-cell density noise
  double fov_x = 1.0471975511965976;  // 60 degrees
  std::uint32_t width = 1600;
  std::uint32_t height = 1200;
};

/// Points over a ground plane with per-cell density noise; downward-looking
/// cameras on a serpentine raster at a fixed altitude.
SceneDataset generate_aerial_scene(const AerialSceneParams& params);

struct StreetSceneParams {
  std::uint64_t seed = 1;
  std::size_t n_points = 100000;
  std::vector<Vec3> waypoints;
  std::size_t n_views = 64;
  double corridor_radius = 15.0;
  double background_fraction = 0.05;
  /// Background points lie at least this many corridor radii away from the
  /// polyline, inside the corridor bounds grown by `background_spread` times
  /// the polyline length.
  double background_min_distance = 3.0;
  double background_spread = 0.5;
  double fov_x = 1.5707963267948966;  // 90 degrees
  std::uint32_t width = 1600;
  std::uint32_t height = 900;
  double near = 0.5;
  /// Far plane; <= 0 means the polyline length.
  double far = 0.0;
};

/// Points concentrated in a half-tube corridor around a polyline plus sparse
/// distant background points; cameras along the polyline facing travel
/// direction.
SceneDataset generate_street_scene(const StreetSceneParams& params);

/// A 1.5 km route with four right-angle turns on the z = 0 plane.
std::vector<Vec3> default_street_waypoints();

/// Distance from `p` to the polyline through `waypoints`.
double distance_to_polyline(Vec3 p, std::span<const Vec3> waypoints);

/// Converts a static dataset into a spatio-temporal one: each point gets a
/// presence interval inside [0, duration] (mean length 20% of the duration),
/// views get timestamps evenly spread over [0, duration].
SceneDataset make_temporal(SceneDataset dataset, std::uint64_t seed, double duration);

/// Writes `json_path` and the sibling binary points file named
/// `points_filename` (in the same directory).
void save_dataset(const SceneDataset& dataset, const std::filesystem::path& json_path,
                  const std::string& points_filename = "points.bin");

SceneDataset load_dataset(const std::filesystem::path& json_path);

inline constexpr const char* kDatasetVersion = "splatsched-v1";

}  // namespace splatsched
