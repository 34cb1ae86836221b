#pragma once

// Multi-view dataset: skinned template, cameras, per-frame poses and the image/mask pairs
// observed by each camera, stored as a directory with scene.json, images/, masks/ and the
// template as OBJ plus a JSON sidecar.

#include <filesystem>
#include <string>
#include <vector>

#include "skinrf/body_template.hpp"
#include "skinrf/image.hpp"
#include "skinrf/renderer.hpp"

namespace skinrf {

inline constexpr int kSceneSchemaVersion = 1;

// One observation: the image of frame `index` seen by camera `camera`.
struct Frame {
  int index = 0;
  int camera = 0;
  std::string image_path;  // relative to the scene directory
  std::string mask_path;
  Image image;  // RGB in [0, 1], zero where the mask is zero
  Image mask;   // one channel, 0 or 1
};

struct SceneSplit {
  std::vector<int> train_cameras;
  std::vector<int> test_cameras;
  std::vector<int> train_frames;
  std::vector<int> test_frames;  // frames whose poses are held out of training
};

struct SceneDataset {
  BodyModel body;
  std::vector<Camera> cameras;
  std::vector<Pose> poses;  // one per frame index
  std::vector<Frame> frames;
  SceneSplit split;

  int frame_count() const { return static_cast<int>(poses.size()); }
  // nullptr when frame/camera pair is not present.
  const Frame* find(int frame, int camera) const;
  // Throws StructuralError on dangling camera/frame references, size mismatches or bad poses.
  void validate() const;
};

SceneDataset load_scene(const std::filesystem::path& dir);
void save_scene(const SceneDataset& scene, const std::filesystem::path& dir);

// Pose list file: {"poses": [pose, ...]} with poses as in scene.json.
std::vector<Pose> load_poses(const std::filesystem::path& path, int part_count);
void save_poses(const std::vector<Pose>& poses, const std::filesystem::path& path);

// Template OBJ + sidecar (weights V x K, skeleton, part names).
void save_template(const BodyModel& body, const std::filesystem::path& obj_path,
                   const std::filesystem::path& sidecar_path);
BodyModel load_template(const std::filesystem::path& obj_path, const std::filesystem::path& sidecar_path);

// Plain OBJ of a triangle mesh; optional sidecar with per-vertex weights.
void write_obj(const std::filesystem::path& path, const TriangleMesh& mesh);
TriangleMesh read_obj(const std::filesystem::path& path);

}  // namespace skinrf
