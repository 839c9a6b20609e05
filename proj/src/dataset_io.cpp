#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "json.hpp"
#include "splatsched/error.hpp"
#include "splatsched/scene.hpp"

namespace splatsched {

namespace {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "points file I/O assumes a little-endian host");

constexpr char kMagic[4] = {'S', 'S', 'P', 'C'};

const char* mode_name(CullingMode m) {
  return m == CullingMode::kSpatioTemporal ? "spatio_temporal" : "spatial";
}

json view_to_json(const CameraView& v) {
  json j;
  j["id"] = v.id;
  j["position"] = {v.position.x, v.position.y, v.position.z};
  j["rotation"] = v.rotation.m;
  j["fov_x"] = v.fov_x;
  j["fov_y"] = v.fov_y;
  j["near"] = v.near;
  j["far"] = v.far;
  j["width"] = v.width;
  j["height"] = v.height;
  if (v.timestamp) j["timestamp"] = *v.timestamp;
  return j;
}

template <typename T>
T field(const json& j, const char* key) {
  if (!j.contains(key)) throw FormatError(0, std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw FormatError(0, std::string("bad field '") + key + "': " + e.what());
  }
}

CameraView view_from_json(const json& j) {
  CameraView v;
  v.id = field<std::uint32_t>(j, "id");
  const auto pos = field<std::array<double, 3>>(j, "position");
  v.position = {pos[0], pos[1], pos[2]};
  v.rotation.m = field<std::array<double, 9>>(j, "rotation");
  v.fov_x = field<double>(j, "fov_x");
  v.fov_y = field<double>(j, "fov_y");
  v.near = field<double>(j, "near");
  v.far = field<double>(j, "far");
  v.width = field<std::uint32_t>(j, "width");
  v.height = field<std::uint32_t>(j, "height");
  if (j.contains("timestamp")) v.timestamp = field<double>(j, "timestamp");
  return v;
}

template <typename T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& data) : data_(data) {}

  template <typename T>
  T get(const char* what) {
    if (data_.size() - pos_ < sizeof(T)) {
      throw FormatError(pos_, std::string("truncated points file while reading ") + what);
    }
    T value;
    std::memcpy(&value, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  const std::string& data_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(0, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

void save_dataset(const SceneDataset& dataset, const std::filesystem::path& json_path,
                  const std::string& points_filename) {
  dataset.validate();
  const bool temporal = dataset.cloud.has_presence();

  json header;
  header["version"] = kDatasetVersion;
  header["profile"] = {{"name", dataset.profile.name},
                       {"splat_state_elements", dataset.profile.splat_state_elements},
                       {"bytes_per_element", dataset.profile.bytes_per_element},
                       {"culling_mode", mode_name(dataset.profile.culling_mode)}};
  header["points_file"] = points_filename;
  header["n_points"] = dataset.cloud.size();
  header["temporal"] = temporal;
  json views = json::array();
  for (const auto& v : dataset.views) views.push_back(view_to_json(v));
  header["views"] = std::move(views);

  std::string bin;
  const auto pts = dataset.cloud.points();
  bin.reserve(8 + pts.size() * (temporal ? 20 : 12));
  bin.append(kMagic, 4);
  put(bin, static_cast<std::uint32_t>(pts.size()));
  for (const auto& p : pts) {
    put(bin, p.x);
    put(bin, p.y);
    put(bin, p.z);
  }
  if (temporal) {
    for (const auto& iv : dataset.cloud.presence()) {
      put(bin, iv.start);
      put(bin, iv.end);
    }
  }

  const auto bin_path = json_path.parent_path() / points_filename;
  {
    std::ofstream out(bin_path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError(0, "cannot write " + bin_path.string());
    out.write(bin.data(), static_cast<std::streamsize>(bin.size()));
  }
  std::ofstream out(json_path, std::ios::trunc);
  if (!out) throw FormatError(0, "cannot write " + json_path.string());
  out << header.dump(2) << '\n';
}

SceneDataset load_dataset(const std::filesystem::path& json_path) {
  const std::string text = read_file(json_path);
  json header;
  try {
    header = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(e.byte, std::string("malformed dataset header: ") + e.what());
  }
  if (!header.is_object()) throw FormatError(0, "dataset header is not a JSON object");
  const auto version = field<std::string>(header, "version");
  if (version != kDatasetVersion) {
    throw VersionError("unsupported dataset version '" + version + "' (expected " +
                       kDatasetVersion + ")");
  }

  SceneDataset ds;
  const json& prof = header.contains("profile") ? header["profile"] : json();
  if (!prof.is_object()) throw FormatError(0, "missing field 'profile'");
  ds.profile.name = field<std::string>(prof, "name");
  ds.profile.splat_state_elements = field<std::uint32_t>(prof, "splat_state_elements");
  ds.profile.bytes_per_element = field<std::uint32_t>(prof, "bytes_per_element");
  const auto mode = field<std::string>(prof, "culling_mode");
  if (mode == "spatial") {
    ds.profile.culling_mode = CullingMode::kSpatial;
  } else if (mode == "spatio_temporal") {
    ds.profile.culling_mode = CullingMode::kSpatioTemporal;
  } else {
    throw FormatError(0, "unknown culling_mode '" + mode + "'");
  }
  const bool temporal = field<bool>(header, "temporal");
  const auto n_declared = field<std::uint64_t>(header, "n_points");
  const auto views = header.contains("views") ? header["views"] : json();
  if (!views.is_array()) throw FormatError(0, "missing field 'views'");
  for (const auto& v : views) ds.views.push_back(view_from_json(v));

  const auto points_file = field<std::string>(header, "points_file");
  const std::string bin = read_file(json_path.parent_path() / points_file);
  Reader r(bin);
  for (char c : kMagic) {
    if (r.get<char>("magic") != c) throw FormatError(r.pos() - 1, "bad points file magic");
  }
  const auto count = r.get<std::uint32_t>("count");
  if (count != n_declared) {
    throw FormatError(4, "points file count " + std::to_string(count) +
                             " does not match header n_points " + std::to_string(n_declared));
  }
  const std::size_t need = std::size_t{count} * (temporal ? 20u : 12u);
  if (r.remaining() < need) {
    throw FormatError(bin.size(), "truncated points file: need " + std::to_string(need) +
                                      " payload bytes, have " + std::to_string(r.remaining()));
  }
  std::vector<Point3> points(count);
  for (auto& p : points) {
    p.x = r.get<float>("x");
    p.y = r.get<float>("y");
    p.z = r.get<float>("z");
  }
  std::vector<PresenceInterval> presence;
  if (temporal) {
    presence.resize(count);
    for (auto& iv : presence) {
      iv.start = r.get<float>("t_start");
      iv.end = r.get<float>("t_end");
    }
  }
  if (r.remaining() != 0) throw FormatError(r.pos(), "trailing bytes in points file");
  try {
    ds.cloud = PointCloud(std::move(points), std::move(presence));
    ds.validate();
  } catch (const ParameterError& e) {
    throw FormatError(0, std::string("invalid dataset contents: ") + e.what());
  }
  return ds;
}

}  // namespace splatsched
