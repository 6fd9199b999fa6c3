#include "binpick/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <variant>

#include "binpick/errors.hpp"

namespace binpick {

namespace {

using Field = std::variant<double RunConfig::*, std::int64_t RunConfig::*,
                           std::uint64_t RunConfig::*, std::string RunConfig::*>;

const std::map<std::string, Field>& field_table() {
  static const std::map<std::string, Field> table = {
      {"object_kind", &RunConfig::object_kind},
      {"object_a", &RunConfig::object_a},
      {"object_b", &RunConfig::object_b},
      {"object_c", &RunConfig::object_c},
      {"object_symmetry", &RunConfig::object_symmetry},
      {"bin_half_x", &RunConfig::bin_half_x},
      {"bin_half_y", &RunConfig::bin_half_y},
      {"bin_half_z", &RunConfig::bin_half_z},
      {"n_min", &RunConfig::n_min},
      {"n_max", &RunConfig::n_max},
      {"settle_iters", &RunConfig::settle_iters},
      {"settle_tolerance", &RunConfig::settle_tolerance},
      {"train_scenes", &RunConfig::train_scenes},
      {"test_scenes", &RunConfig::test_scenes},
      {"views_per_scene", &RunConfig::views_per_scene},
      {"view_radius_min_factor", &RunConfig::view_radius_min_factor},
      {"view_radius_max_factor", &RunConfig::view_radius_max_factor},
      {"elev_min_deg", &RunConfig::elev_min_deg},
      {"elev_max_deg", &RunConfig::elev_max_deg},
      {"image_width", &RunConfig::image_width},
      {"image_height", &RunConfig::image_height},
      {"focal_px", &RunConfig::focal_px},
      {"near_plane", &RunConfig::near_plane},
      {"far_plane", &RunConfig::far_plane},
      {"noise_sigma", &RunConfig::noise_sigma},
      {"detect_score_thresh", &RunConfig::detect_score_thresh},
      {"detect_nms_iou", &RunConfig::detect_nms_iou},
      {"detect_max_out", &RunConfig::detect_max_out},
      {"assign_pos_iou", &RunConfig::assign_pos_iou},
      {"assign_neg_iou", &RunConfig::assign_neg_iou},
      {"sample_pos", &RunConfig::sample_pos},
      {"sample_neg", &RunConfig::sample_neg},
      {"pitch_bins", &RunConfig::pitch_bins},
      {"yaw_bins", &RunConfig::yaw_bins},
      {"roll_bins", &RunConfig::roll_bins},
      {"depth_bins", &RunConfig::depth_bins},
      {"depth_lo", &RunConfig::depth_lo},
      {"depth_hi", &RunConfig::depth_hi},
      {"topk_per_head", &RunConfig::topk_per_head},
      {"max_hypotheses", &RunConfig::max_hypotheses},
      {"pose_nms_factor", &RunConfig::pose_nms_factor},
      {"jointreg_blocks", &RunConfig::jointreg_blocks},
      {"jointreg_neg_weight", &RunConfig::jointreg_neg_weight},
      {"match_factor", &RunConfig::match_factor},
      {"lr", &RunConfig::lr},
      {"train_steps", &RunConfig::train_steps},
      {"jointreg_steps", &RunConfig::jointreg_steps},
      {"w_detect", &RunConfig::w_detect},
      {"w_offset", &RunConfig::w_offset},
      {"w_depth", &RunConfig::w_depth},
      {"w_pose", &RunConfig::w_pose},
      {"center_jitter", &RunConfig::center_jitter},
      {"eval_threshold_factor", &RunConfig::eval_threshold_factor},
      {"min_visibility", &RunConfig::min_visibility},
      {"eval_confidence", &RunConfig::eval_confidence},
      {"seed", &RunConfig::seed},
  };
  return table;
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

void set_field(RunConfig& cfg, const std::string& key, const Field& field,
               const std::string& value) {
  std::visit(
      [&](auto member) {
        using T = std::remove_reference_t<decltype(cfg.*member)>;
        if constexpr (std::is_same_v<T, std::string>) {
          cfg.*member = value;
        } else if constexpr (std::is_same_v<T, double>) {
          try {
            std::size_t used = 0;
            cfg.*member = std::stod(value, &used);
            if (used != value.size()) throw std::invalid_argument(value);
          } catch (const std::exception&) {
            throw ConfigError("bad numeric value for '" + key + "': " + value);
          }
        } else {
          T parsed{};
          auto [ptr, ec] =
              std::from_chars(value.data(), value.data() + value.size(), parsed);
          if (ec != std::errc() || ptr != value.data() + value.size())
            throw ConfigError("bad integer value for '" + key + "': " + value);
          cfg.*member = parsed;
        }
      },
      field);
}

std::string field_to_string(const RunConfig& cfg, const Field& field) {
  return std::visit(
      [&](auto member) -> std::string {
        using T = std::remove_cvref_t<decltype(cfg.*member)>;
        if constexpr (std::is_same_v<T, std::string>) {
          return cfg.*member;
        } else if constexpr (std::is_same_v<T, double>) {
          char buf[40];
          std::snprintf(buf, sizeof(buf), "%.17g", cfg.*member);
          return buf;
        } else {
          return std::to_string(cfg.*member);
        }
      },
      field);
}

}  // namespace

RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) +
                        ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    auto it = field_table().find(key);
    if (it == field_table().end())
      throw ConfigError("unknown config key '" + key + "' (line " +
                        std::to_string(lineno) + ")");
    set_field(cfg, key, it->second, value);
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_config_text(buf.str());
}

std::string dump_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& [key, field] : field_table())
    out += key + " = " + field_to_string(cfg, field) + "\n";
  return out;
}

std::string config_hash(const RunConfig& cfg) {
  const std::string dump = dump_config(cfg);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : dump) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

SceneConfig RunConfig::scene_config() const {
  SceneConfig s;
  s.bin_half = Vec3(bin_half_x, bin_half_y, bin_half_z);
  s.n_min = static_cast<int>(n_min);
  s.n_max = static_cast<int>(n_max);
  s.seed = seed;
  s.settle_iters = static_cast<int>(settle_iters);
  s.tolerance = settle_tolerance;
  s.view_radius_min_factor = view_radius_min_factor;
  s.view_radius_max_factor = view_radius_max_factor;
  s.elev_min_deg = elev_min_deg;
  s.elev_max_deg = elev_max_deg;
  s.views_per_scene = static_cast<int>(views_per_scene);
  s.image_width = static_cast<int>(image_width);
  s.image_height = static_cast<int>(image_height);
  s.focal_px = focal_px;
  return s;
}

MeshModel RunConfig::build_model() const {
  MeshModel m;
  if (object_kind == "wedge") {
    m = make_wedge(object_a, object_b, object_c);
  } else if (object_kind == "box") {
    m = make_box_mesh(object_a, object_b, object_c);
  } else if (object_kind == "cylinder") {
    m = make_cylinder(object_a, object_b, 24);
  } else {
    throw ConfigError("unknown object_kind '" + object_kind + "'");
  }
  // "auto" keeps the primitive's natural symmetry; anything else overrides.
  if (object_symmetry != "auto")
    m.symmetry = SymmetrySpec::from_name(object_symmetry);
  return m;
}

RenderConfig RunConfig::render_config() const {
  RenderConfig r;
  r.near_plane = near_plane;
  r.far_plane = far_plane;
  r.noise_sigma = noise_sigma;
  r.noise_seed = seed;
  return r;
}

}  // namespace binpick
