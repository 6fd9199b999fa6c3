#include "binpick/dataset.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace binpick {

namespace {

using nlohmann::json;

void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is, const std::string& path) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw DataError("truncated depth file: " + path);
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

json pose_to_json(const Pose6D& p) {
  return json{{"pitch", p.pitch},
              {"yaw", p.yaw},
              {"roll", p.roll},
              {"t", {p.t.x(), p.t.y(), p.t.z()}}};
}

Pose6D pose_from_json(const json& j) {
  Pose6D p;
  p.pitch = j.at("pitch").get<double>();
  p.yaw = j.at("yaw").get<double>();
  p.roll = j.at("roll").get<double>();
  const auto& t = j.at("t");
  p.t = Vec3(t.at(0).get<double>(), t.at(1).get<double>(),
             t.at(2).get<double>());
  return p;
}

json view_to_json(const CameraView& v) {
  json rot = json::array();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) rot.push_back(v.rotation(r, c));
  return json{{"rotation", rot},
              {"translation", {v.translation.x(), v.translation.y(),
                               v.translation.z()}},
              {"fx", v.fx}, {"fy", v.fy}, {"cx", v.cx}, {"cy", v.cy},
              {"width", v.width}, {"height", v.height}};
}

CameraView view_from_json(const json& j) {
  CameraView v;
  const auto& rot = j.at("rotation");
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) v.rotation(r, c) = rot.at(r * 3 + c).get<double>();
  const auto& t = j.at("translation");
  v.translation = Vec3(t.at(0).get<double>(), t.at(1).get<double>(),
                       t.at(2).get<double>());
  v.fx = j.at("fx").get<double>();
  v.fy = j.at("fy").get<double>();
  v.cx = j.at("cx").get<double>();
  v.cy = j.at("cy").get<double>();
  v.width = j.at("width").get<int>();
  v.height = j.at("height").get<int>();
  return v;
}

json load_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open: " + path);
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw DataError("bad JSON in " + path + ": " + e.what());
  }
}

void write_json_file(const json& j, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write: " + path);
  os << j.dump(1, '\t') << '\n';
  if (!os) throw DataError("write failed: " + path);
}

}  // namespace

void save_depth(const DepthImage& img, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write depth file: " + path);
  os.write("BPD1", 4);
  write_u32(os, static_cast<std::uint32_t>(img.width));
  write_u32(os, static_cast<std::uint32_t>(img.height));
  static_assert(sizeof(float) == 4);
  os.write(reinterpret_cast<const char*>(img.depth.data()),
           static_cast<std::streamsize>(img.depth.size() * sizeof(float)));
  if (!os) throw DataError("write failed: " + path);
}

DepthImage load_depth(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open depth file: " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "BPD1", 4) != 0)
    throw DataError("bad depth file magic: " + path);
  DepthImage img;
  img.width = static_cast<int>(read_u32(is, path));
  img.height = static_cast<int>(read_u32(is, path));
  if (img.width <= 0 || img.height <= 0 || img.width > 1 << 16 ||
      img.height > 1 << 16)
    throw DataError("implausible depth dimensions in " + path);
  img.depth.resize(static_cast<std::size_t>(img.width) * img.height);
  if (!is.read(reinterpret_cast<char*>(img.depth.data()),
               static_cast<std::streamsize>(img.depth.size() * sizeof(float))))
    throw DataError("truncated depth file: " + path);
  return img;
}

void save_scene(const SceneRecord& scene, const std::string& path) {
  json j;
  j["instances"] = json::array();
  for (const auto& inst : scene.instances)
    j["instances"].push_back(pose_to_json(inst.pose));
  j["views"] = json::array();
  for (const auto& v : scene.views) j["views"].push_back(view_to_json(v));
  write_json_file(j, path);
}

SceneRecord load_scene(const std::string& path) {
  const json j = load_json_file(path);
  SceneRecord scene;
  try {
    for (const auto& p : j.at("instances"))
      scene.instances.push_back({pose_from_json(p)});
    for (const auto& v : j.at("views")) scene.views.push_back(view_from_json(v));
  } catch (const json::exception& e) {
    throw DataError("bad scene record in " + path + ": " + e.what());
  }
  return scene;
}

void save_annotation(const FrameAnnotation& ann, const std::string& path) {
  json j;
  j["view"] = view_to_json(ann.view);
  j["instances"] = json::array();
  for (const auto& a : ann.instances) {
    j["instances"].push_back(
        {{"instance_index", a.instance_index},
         {"box", {a.box.x, a.box.y, a.box.w, a.box.h}},
         {"center", {a.center_x, a.center_y}},
         {"center_depth", a.center_depth},
         {"pose", pose_to_json(a.pose)},
         {"visibility", a.visibility},
         {"center_outside_box", a.center_outside_box}});
  }
  write_json_file(j, path);
}

FrameAnnotation load_annotation(const std::string& path) {
  const json j = load_json_file(path);
  FrameAnnotation ann;
  try {
    ann.view = view_from_json(j.at("view"));
    for (const auto& a : j.at("instances")) {
      InstanceAnnotation inst;
      inst.instance_index = a.at("instance_index").get<int>();
      const auto& b = a.at("box");
      inst.box = {b.at(0).get<double>(), b.at(1).get<double>(),
                  b.at(2).get<double>(), b.at(3).get<double>()};
      inst.center_x = a.at("center").at(0).get<double>();
      inst.center_y = a.at("center").at(1).get<double>();
      inst.center_depth = a.at("center_depth").get<double>();
      inst.pose = pose_from_json(a.at("pose"));
      inst.visibility = a.at("visibility").get<double>();
      inst.center_outside_box = a.at("center_outside_box").get<bool>();
      ann.instances.push_back(inst);
    }
  } catch (const json::exception& e) {
    throw DataError("bad annotation in " + path + ": " + e.what());
  }
  return ann;
}

void save_manifest(const DatasetManifest& m, const std::string& path) {
  json j;
  j["seed"] = m.seed;
  j["config_hash"] = m.config_hash;
  j["scenes"] = json::array();
  for (const auto& s : m.scenes) {
    json frames = json::array();
    for (const auto& f : s.frames)
      frames.push_back({{"depth", f.depth}, {"annotation", f.annotation}});
    j["scenes"].push_back(
        {{"scene", s.scene}, {"split", s.split}, {"frames", frames}});
  }
  write_json_file(j, path);
}

DatasetManifest load_manifest(const std::string& path, const std::string& root,
                              const std::string& expected_hash) {
  const json j = load_json_file(path);
  DatasetManifest m;
  try {
    m.seed = j.at("seed").get<std::uint64_t>();
    m.config_hash = j.at("config_hash").get<std::string>();
    for (const auto& s : j.at("scenes")) {
      SceneFiles sf;
      sf.scene = s.at("scene").get<std::string>();
      sf.split = s.at("split").get<std::string>();
      for (const auto& f : s.at("frames"))
        sf.frames.push_back({f.at("depth").get<std::string>(),
                             f.at("annotation").get<std::string>()});
      m.scenes.push_back(std::move(sf));
    }
  } catch (const json::exception& e) {
    throw DataError("bad manifest in " + path + ": " + e.what());
  }
  if (!expected_hash.empty() && m.config_hash != expected_hash)
    throw DataError("manifest config hash " + m.config_hash +
                    " does not match current config " + expected_hash);
  namespace fs = std::filesystem;
  for (const auto& s : m.scenes) {
    if (!fs::exists(fs::path(root) / s.scene))
      throw DataError("manifest references missing file: " + s.scene);
    for (const auto& f : s.frames) {
      if (!fs::exists(fs::path(root) / f.depth))
        throw DataError("manifest references missing file: " + f.depth);
      if (!fs::exists(fs::path(root) / f.annotation))
        throw DataError("manifest references missing file: " + f.annotation);
    }
  }
  return m;
}

}  // namespace binpick
