#include "splatsched/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "splatsched/error.hpp"
#include "splatsched/random.hpp"

namespace splatsched {

namespace {

constexpr std::uint64_t kPointStream = 1;
constexpr std::uint64_t kViewStream = 2;
constexpr std::uint64_t kTemporalStream = 3;

Point3 to_point(Vec3 v) {
  return {static_cast<float>(v.x), static_cast<float>(v.y), static_cast<float>(v.z)};
}

double fov_y_for(double fov_x, std::uint32_t width, std::uint32_t height) {
  return 2.0 * std::atan(std::tan(0.5 * fov_x) * static_cast<double>(height) /
                         static_cast<double>(width));
}

}  // namespace

WorkloadProfile WorkloadProfile::gaussian_3d() { return {"3dgs", 11, 4, CullingMode::kSpatial}; }
WorkloadProfile WorkloadProfile::gaussian_2d() { return {"2dgs", 20, 4, CullingMode::kSpatial}; }
WorkloadProfile WorkloadProfile::convex_3d() { return {"3dcx", 29, 4, CullingMode::kSpatial}; }
WorkloadProfile WorkloadProfile::gaussian_4d() {
  return {"4dgs", 11, 4, CullingMode::kSpatioTemporal};
}

WorkloadProfile WorkloadProfile::by_name(const std::string& name) {
  if (name == "3dgs") return gaussian_3d();
  if (name == "2dgs") return gaussian_2d();
  if (name == "3dcx") return convex_3d();
  if (name == "4dgs") return gaussian_4d();
  throw ParameterError("profile", "unknown workload profile '" + name + "'");
}

void WorkloadProfile::validate() const {
  if (splat_state_elements == 0) {
    throw ParameterError("splat_state_elements", "must be positive");
  }
  if (bytes_per_element == 0) throw ParameterError("bytes_per_element", "must be positive");
}

PointCloud::PointCloud(std::vector<Point3> points, std::vector<PresenceInterval> presence)
    : points_(std::move(points)), presence_(std::move(presence)) {
  if (points_.empty()) throw ParameterError("points", "point cloud must be non-empty");
  if (!presence_.empty() && presence_.size() != points_.size()) {
    throw ConsistencyError("presence intervals: expected " + std::to_string(points_.size()) +
                           ", got " + std::to_string(presence_.size()));
  }
  for (std::size_t i = 0; i < points_.size(); ++i) {
    if (!is_finite(points_[i])) {
      throw ParameterError("points", "non-finite coordinate at index " + std::to_string(i));
    }
    bounds_.extend(points_[i]);
  }
  for (std::size_t i = 0; i < presence_.size(); ++i) {
    const auto& p = presence_[i];
    if (!(p.start <= p.end)) {
      throw ParameterError("presence", "start > end at index " + std::to_string(i));
    }
  }
}

void CameraView::validate() const {
  const std::string where = "view " + std::to_string(id) + ": ";
  if (!(near > 0.0 && near < far)) throw ParameterError("near", where + "need 0 < near < far");
  if (!std::isfinite(far)) throw ParameterError("far", where + "must be finite");
  if (!(fov_x > 0.0 && fov_x < std::numbers::pi)) {
    throw ParameterError("fov_x", where + "need 0 < fov < pi");
  }
  if (!(fov_y > 0.0 && fov_y < std::numbers::pi)) {
    throw ParameterError("fov_y", where + "need 0 < fov < pi");
  }
  if (width < 1 || height < 1) throw ParameterError("width", where + "image must be non-empty");
  if (orthonormality_error(rotation) > 1e-9) {
    throw ParameterError("rotation", where + "not orthonormal");
  }
}

Mat3 look_rotation(Vec3 forward, Vec3 up_hint) {
  const Vec3 f = normalized(forward);
  Vec3 r = cross(f, up_hint);
  if (norm(r) < 1e-12) r = cross(f, Vec3{0, 1, 0});
  if (norm(r) < 1e-12) r = cross(f, Vec3{1, 0, 0});
  r = normalized(r);
  const Vec3 d = cross(f, r);
  return Mat3::from_columns(r, d, f);
}

void SceneDataset::validate() const {
  profile.validate();
  if (cloud.size() == 0) throw ParameterError("points", "point cloud must be non-empty");
  const bool temporal = profile.culling_mode == CullingMode::kSpatioTemporal;
  if (temporal != cloud.has_presence()) {
    throw ConsistencyError(temporal ? "spatio-temporal profile requires presence intervals"
                                    : "presence intervals given for a spatial profile");
  }
  for (std::size_t i = 0; i < views.size(); ++i) {
    const auto& v = views[i];
    if (v.id != i) {
      throw ConsistencyError("view ids must be contiguous from 0; index " + std::to_string(i) +
                             " has id " + std::to_string(v.id));
    }
    v.validate();
    if (temporal && !v.timestamp) {
      throw ConsistencyError("view " + std::to_string(i) + " lacks a timestamp");
    }
  }
}

SceneDataset generate_aerial_scene(const AerialSceneParams& p) {
  if (p.n_points < 1) throw ParameterError("n_points", "must be >= 1");
  if (p.n_views < 1) throw ParameterError("n_views", "must be >= 1");
  if (!(p.altitude > 0.0)) throw ParameterError("altitude", "must be > 0");
  if (p.grid_rows < 1 || p.grid_cols < 1) throw ParameterError("grid", "must be at least 1x1");
  if (!(p.ground_size > 0.0)) throw ParameterError("ground_size", "must be > 0");
  if (!(p.max_height >= 0.0) || p.max_height >= p.altitude) {
    throw ParameterError("max_height", "must be in [0, altitude)");
  }
  if (!(p.fov_x > 0.0 && p.fov_x < std::numbers::pi)) {
    throw ParameterError("fov_x", "need 0 < fov < pi");
  }
  if (p.width < 1 || p.height < 1) throw ParameterError("width", "image must be non-empty");

  SceneDataset ds;
  ds.profile = WorkloadProfile::gaussian_3d();

  // Points: cell chosen by log-normal density weight, then uniform inside it.
  Rng rng(derive_seed(p.seed, kPointStream));
  const std::size_t n_cells = p.grid_rows * p.grid_cols;
  std::vector<double> cumulative(n_cells);
  double acc = 0.0;
  for (std::size_t c = 0; c < n_cells; ++c) {
    acc += std::exp(p.density_sigma * rng.normal());
    cumulative[c] = acc;
  }
  const double cell_w = p.ground_size / static_cast<double>(p.grid_cols);
  const double cell_h = p.ground_size / static_cast<double>(p.grid_rows);
  std::vector<Point3> points;
  points.reserve(p.n_points);
  for (std::size_t i = 0; i < p.n_points; ++i) {
    const double u = rng.uniform() * acc;
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    const std::size_t cell =
        std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()), n_cells - 1);
    const double cx = static_cast<double>(cell % p.grid_cols) * cell_w;
    const double cy = static_cast<double>(cell / p.grid_cols) * cell_h;
    points.push_back(to_point({cx + rng.uniform() * cell_w, cy + rng.uniform() * cell_h,
                               rng.uniform() * p.max_height}));
  }
  ds.cloud = PointCloud(std::move(points));

  // Cameras: serpentine raster over the ground, looking straight down.
  const auto cam_cols =
      static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(p.n_views))));
  const std::size_t cam_rows = (p.n_views + cam_cols - 1) / cam_cols;
  const double step_x = p.ground_size / static_cast<double>(cam_cols);
  const double step_y = p.ground_size / static_cast<double>(cam_rows);
  const Mat3 down_rot = Mat3::from_columns({1, 0, 0}, {0, -1, 0}, {0, 0, -1});
  const double fov_y = fov_y_for(p.fov_x, p.width, p.height);
  Rng view_rng(derive_seed(p.seed, kViewStream));
  for (std::size_t i = 0; i < p.n_views; ++i) {
    const std::size_t row = i / cam_cols;
    std::size_t col = i % cam_cols;
    if (row % 2 == 1) col = cam_cols - 1 - col;
    // Small positional jitter so the raster is not perfectly regular.
    const double jx = view_rng.uniform(-0.1, 0.1) * step_x;
    const double jy = view_rng.uniform(-0.1, 0.1) * step_y;
    CameraView v;
    v.id = static_cast<std::uint32_t>(i);
    v.position = {(static_cast<double>(col) + 0.5) * step_x + jx,
                  (static_cast<double>(row) + 0.5) * step_y + jy, p.altitude};
    v.rotation = down_rot;
    v.fov_x = p.fov_x;
    v.fov_y = fov_y;
    v.near = 0.5;
    v.far = p.altitude + 10.0;
    v.width = p.width;
    v.height = p.height;
    ds.views.push_back(v);
  }
  return ds;
}

double distance_to_polyline(Vec3 p, std::span<const Vec3> waypoints) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < waypoints.size(); ++i) {
    const Vec3 a = waypoints[i];
    const Vec3 ab = waypoints[i + 1] - a;
    const double len2 = dot(ab, ab);
    double t = len2 > 0.0 ? dot(p - a, ab) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    best = std::min(best, norm(p - (a + t * ab)));
  }
  if (waypoints.size() == 1) best = norm(p - waypoints[0]);
  return best;
}

std::vector<Vec3> default_street_waypoints() {
  return {{0, 0, 0}, {300, 0, 0}, {300, 300, 0}, {600, 300, 0}, {600, 600, 0}, {900, 600, 0}};
}

SceneDataset generate_street_scene(const StreetSceneParams& p) {
  if (p.waypoints.size() < 2) throw ParameterError("waypoints", "need at least 2 waypoints");
  if (p.n_points < 1) throw ParameterError("n_points", "must be >= 1");
  if (p.n_views < 1) throw ParameterError("n_views", "must be >= 1");
  if (!(p.corridor_radius > 0.0)) throw ParameterError("corridor_radius", "must be > 0");
  if (!(p.background_fraction >= 0.0 && p.background_fraction <= 1.0)) {
    throw ParameterError("background_fraction", "must be in [0, 1]");
  }
  if (!(p.fov_x > 0.0 && p.fov_x < std::numbers::pi)) {
    throw ParameterError("fov_x", "need 0 < fov < pi");
  }

  // Cumulative arc length per segment.
  std::vector<double> arc{0.0};
  for (std::size_t i = 0; i + 1 < p.waypoints.size(); ++i) {
    arc.push_back(arc.back() + norm(p.waypoints[i + 1] - p.waypoints[i]));
  }
  const double length = arc.back();
  if (!(length > 0.0)) throw ParameterError("waypoints", "polyline has zero length");

  auto locate = [&](double s, Vec3& pos, Vec3& dir) {
    auto it = std::upper_bound(arc.begin(), arc.end(), s);
    std::size_t seg = it == arc.begin() ? 0 : static_cast<std::size_t>(it - arc.begin()) - 1;
    // Skip zero-length segments and clamp to the last real one.
    seg = std::min(seg, p.waypoints.size() - 2);
    while (seg > 0 && arc[seg + 1] - arc[seg] <= 0.0) --seg;
    const Vec3 a = p.waypoints[seg];
    const Vec3 ab = p.waypoints[seg + 1] - a;
    const double seg_len = arc[seg + 1] - arc[seg];
    const double t = seg_len > 0.0 ? std::clamp((s - arc[seg]) / seg_len, 0.0, 1.0) : 0.0;
    pos = a + t * ab;
    dir = seg_len > 0.0 ? (1.0 / seg_len) * ab : Vec3{1, 0, 0};
  };

  SceneDataset ds;
  ds.profile = WorkloadProfile::gaussian_3d();

  Rng rng(derive_seed(p.seed, kPointStream));
  const auto n_background = static_cast<std::size_t>(
      std::llround(p.background_fraction * static_cast<double>(p.n_points)));
  const std::size_t n_corridor = p.n_points - n_background;
  std::vector<Point3> points;
  points.reserve(p.n_points);
  const Vec3 world_up{0, 0, 1};
  const double r = p.corridor_radius;
  for (std::size_t i = 0; i < n_corridor; ++i) {
    Vec3 pos, dir;
    locate(rng.uniform() * length, pos, dir);
    Vec3 side = cross(dir, world_up);
    if (norm(side) < 1e-12) side = Vec3{1, 0, 0};
    side = normalized(side);
    const Vec3 up = cross(side, dir);
    // Upper half-disk in the plane perpendicular to the travel direction.
    double lat, vert;
    do {
      lat = rng.uniform(-r, r);
      vert = rng.uniform(0.0, r);
    } while (lat * lat + vert * vert > r * r);
    points.push_back(to_point(pos + lat * side + vert * up));
  }

  Aabb corridor_box;
  for (const auto& w : p.waypoints) corridor_box.extend(w);
  const double grow = p.background_spread * length;
  const double min_dist = p.background_min_distance * r;
  for (std::size_t i = 0; i < n_background; ++i) {
    Vec3 q;
    do {
      q = {rng.uniform(corridor_box.min.x - grow, corridor_box.max.x + grow),
           rng.uniform(corridor_box.min.y - grow, corridor_box.max.y + grow),
           rng.uniform(corridor_box.min.z, corridor_box.max.z + grow)};
    } while (distance_to_polyline(q, p.waypoints) < min_dist);
    points.push_back(to_point(q));
  }
  ds.cloud = PointCloud(std::move(points));

  const double fov_y = fov_y_for(p.fov_x, p.width, p.height);
  const double far = p.far > 0.0 ? p.far : length;
  for (std::size_t i = 0; i < p.n_views; ++i) {
    const double s = (static_cast<double>(i) + 0.5) / static_cast<double>(p.n_views) * length;
    Vec3 pos, dir;
    locate(s, pos, dir);
    CameraView v;
    v.id = static_cast<std::uint32_t>(i);
    v.position = pos;
    v.rotation = look_rotation(dir, world_up);
    v.fov_x = p.fov_x;
    v.fov_y = fov_y;
    v.near = p.near;
    v.far = std::max(far, 2.0 * p.near);
    v.width = p.width;
    v.height = p.height;
    ds.views.push_back(v);
  }
  return ds;
}

SceneDataset make_temporal(SceneDataset dataset, std::uint64_t seed, double duration) {
  if (!(duration > 0.0)) throw ParameterError("duration", "must be > 0");
  Rng rng(derive_seed(seed, kTemporalStream));
  const auto pts = dataset.cloud.points();
  std::vector<PresenceInterval> presence;
  presence.reserve(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    // Length uniform in [0, 0.4 d] (mean 0.2 d); start uniform where it fits.
    const double len = rng.uniform(0.0, 0.4 * duration);
    const double start = rng.uniform(0.0, duration - len);
    auto s = static_cast<float>(start);
    auto e = static_cast<float>(start + len);
    if (e < s) e = s;
    presence.push_back({s, e});
  }
  dataset.cloud =
      PointCloud(std::vector<Point3>(pts.begin(), pts.end()), std::move(presence));
  const std::size_t n = dataset.views.size();
  for (std::size_t i = 0; i < n; ++i) {
    dataset.views[i].timestamp =
        n == 1 ? 0.5 * duration
               : duration * static_cast<double>(i) / static_cast<double>(n - 1);
  }
  dataset.profile = WorkloadProfile::gaussian_4d();
  return dataset;
}

}  // namespace splatsched
