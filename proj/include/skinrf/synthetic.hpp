#pragma once

// Synthetic multi-view scenes of the toy body: a scripted pose sequence seen by a ring of
// cameras, rendered with closed-form transmittance through a constant-density interior.

#include <cstdint>

#include "skinrf/body_template.hpp"
#include "skinrf/image.hpp"
#include "skinrf/renderer.hpp"
#include "skinrf/scene.hpp"

namespace skinrf {

struct SyntheticConfig {
  ToyBodyOptions body;
  int width = 64;
  int height = 64;
  int camera_count = 4;
  int train_camera_count = 3;  // the remaining cameras are held out
  int train_frames = 60;
  int test_frames = 10;        // frames with novel poses, appended after the training frames
  double camera_distance = 3.0;
  double camera_height = 0.3;
  double fov_y = 0.55;         // radians
  double density = 100.0;      // interior density, 1/m
  double motion = 1.0;         // scales every joint amplitude
  bool texture = false;        // stripe pattern fixed to the canonical surface
  std::uint64_t seed = 0;
};

// Flat albedo of each part (cycled beyond ten parts).
Vec3 part_albedo(int part);

// Pose of the scripted sequence at `phase` (radians). `offsets` holds one phase offset per
// part; `amplitude` scales every joint.
Pose scripted_pose(int part_count, double phase, const std::vector<double>& offsets, double amplitude);

struct GroundTruthView {
  Image rgb;    // unquantised, black background
  Image alpha;  // one channel, 1 - transmittance
  Image mask;   // one channel, 1 where the ray enters the body
};

// Exact emission-absorption image of the posed template: every interval inside the closed
// surface has density `density` and the albedo of the part owning its entry face.
GroundTruthView render_ground_truth(const BodyModel& body, const Pose& pose, const Camera& cam, double density,
                                    bool texture = false);

std::vector<Camera> camera_ring(const SyntheticConfig& config);

SceneDataset generate_synthetic_scene(const SyntheticConfig& config);

}  // namespace skinrf
