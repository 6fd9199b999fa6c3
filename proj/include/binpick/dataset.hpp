#pragma once

#include <string>
#include <vector>

#include "binpick/config.hpp"

namespace binpick {

// "BPD1" depth file: u32 width, u32 height, f32 little-endian row-major.
void save_depth(const DepthImage& img, const std::string& path);
DepthImage load_depth(const std::string& path);

struct SceneRecord {
  std::vector<SceneInstance> instances;
  std::vector<CameraView> views;
};

void save_scene(const SceneRecord& scene, const std::string& path);
SceneRecord load_scene(const std::string& path);

void save_annotation(const FrameAnnotation& ann, const std::string& path);
FrameAnnotation load_annotation(const std::string& path);

struct FrameFiles {
  std::string depth;       // relative to the dataset root
  std::string annotation;
};

struct SceneFiles {
  std::string scene;
  std::string split;  // "train" | "test"
  std::vector<FrameFiles> frames;
};

struct DatasetManifest {
  std::vector<SceneFiles> scenes;
  std::uint64_t seed = 0;
  std::string config_hash;
};

void save_manifest(const DatasetManifest& m, const std::string& path);
// Checks every referenced file exists under root and, when expected_hash is
// non-empty, that the stored config hash matches.
DatasetManifest load_manifest(const std::string& path, const std::string& root,
                              const std::string& expected_hash = "");

}  // namespace binpick
