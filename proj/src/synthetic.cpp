#include "skinrf/synthetic.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "skinrf/error.hpp"

namespace skinrf {

Vec3 part_albedo(int part) {
  static const std::array<Vec3, 10> palette = {
      Vec3(0.80, 0.35, 0.30), Vec3(0.95, 0.80, 0.60), Vec3(0.30, 0.55, 0.85), Vec3(0.35, 0.80, 0.45),
      Vec3(0.85, 0.75, 0.25), Vec3(0.60, 0.40, 0.80), Vec3(0.25, 0.75, 0.80), Vec3(0.90, 0.50, 0.20),
      Vec3(0.55, 0.55, 0.55), Vec3(0.75, 0.30, 0.60)};
  return palette[static_cast<std::size_t>(part) % palette.size()];
}

Pose scripted_pose(int part_count, double phase, const std::vector<double>& offsets, double amplitude) {
  if (static_cast<int>(offsets.size()) < part_count) throw UsageError("scripted_pose: one phase offset per part");
  Pose p = Pose::rest(part_count);
  auto s = [&](int k) { return std::sin(phase + offsets[static_cast<std::size_t>(k)]); };
  auto half = [&](int k) { return 0.5 + 0.5 * s(k); };
  p.root.rotation = rotation_from_axis_angle(Vec3(0.0, 0.35 * amplitude * std::sin(0.5 * phase + offsets[0]), 0.0));
  p.root.translation = Vec3(0.0, 0.02 * amplitude * std::sin(2.0 * phase), 0.0);
  for (int k = 0; k < part_count; ++k) {
    Vec3 r = Vec3::Zero();
    switch (k) {
      case 0: r = Vec3(0.10 * s(0), 0.0, 0.0); break;                  // torso sway
      case 1: r = Vec3(0.30 * s(1), 0.20 * s(0), 0.0); break;          // head nod
      case 2: r = Vec3(0.0, 0.30 * s(0), 0.60 * s(2)); break;          // left arm
      case 3: r = Vec3(0.0, -0.30 * s(0), -0.60 * s(3)); break;        // right arm
      case 4: r = Vec3(0.50 * s(4), 0.0, 0.10 * s(1)); break;          // left leg
      case 5: r = Vec3(-0.50 * s(4), 0.0, -0.10 * s(1)); break;        // right leg
      case 6: r = Vec3(0.0, 0.0, 0.80 * half(6)); break;               // left elbow
      case 7: r = Vec3(0.0, 0.0, -0.80 * half(7)); break;              // right elbow
      case 8: r = Vec3(0.70 * half(8), 0.0, 0.0); break;               // left knee
      case 9: r = Vec3(0.70 * half(9), 0.0, 0.0); break;               // right knee
      default: break;
    }
    p.joint_rotations[static_cast<std::size_t>(k)] = amplitude * r;
  }
  return p;
}

GroundTruthView render_ground_truth(const BodyModel& body, const Pose& pose, const Camera& cam, double density,
                                    bool texture) {
  cam.validate();
  const PartTransforms parts = forward_kinematics(body.skeleton, pose);
  const TriangleBvh bvh(pose_mesh(body.mesh, parts), body.mesh.faces);
  const auto& verts = bvh.vertices();
  const auto& faces = body.mesh.faces;
  const int k = body.mesh.part_count();

  std::vector<Vec3> normals(faces.size());
  std::vector<int> owner(faces.size());
  for (std::size_t f = 0; f < faces.size(); ++f) {
    const auto& t = faces[f];
    normals[f] = (verts[static_cast<std::size_t>(t[1])] - verts[static_cast<std::size_t>(t[0])])
                     .cross(verts[static_cast<std::size_t>(t[2])] - verts[static_cast<std::size_t>(t[0])]);
    Eigen::RowVectorXd w = Eigen::RowVectorXd::Zero(k);
    for (const int v : t) w += body.mesh.vertex_weights.row(v);
    Eigen::Index best = 0;
    w.maxCoeff(&best);
    owner[f] = static_cast<int>(best);
  }

  auto entry_color = [&](const Vec3& origin, const Vec3& dir, double t, int face) {
    Vec3 c = part_albedo(owner[static_cast<std::size_t>(face)]);
    if (!texture) return c;
    // Canonical position of the hit via its barycentric coordinates on the posed face.
    const auto& tri = faces[static_cast<std::size_t>(face)];
    const Vec3 a = verts[static_cast<std::size_t>(tri[0])];
    const Vec3 b = verts[static_cast<std::size_t>(tri[1])];
    const Vec3 cc = verts[static_cast<std::size_t>(tri[2])];
    const TrianglePoint tp = closest_point_on_triangle(origin + t * dir, a, b, cc);
    Vec3 rest = Vec3::Zero();
    for (int j = 0; j < 3; ++j) rest += tp.barycentric[j] * body.mesh.vertices[static_cast<std::size_t>(tri[static_cast<std::size_t>(j)])];
    return Vec3(c * (0.8 + 0.2 * std::sin(40.0 * rest.y())));
  };

  GroundTruthView out{Image(cam.width, cam.height, 3), Image(cam.width, cam.height, 1), Image(cam.width, cam.height, 1)};
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      const Ray ray = pixel_ray(cam, x + 0.5, y + 0.5);
      const std::vector<RayHit> hits = bvh.intersect_all(ray.origin, ray.direction);
      Vec3 color = Vec3::Zero();
      double trans = 1.0;
      int depth = 0;
      double start = 0.0;
      Vec3 interval_color = Vec3::Zero();
      bool entered = false;
      for (const RayHit& h : hits) {
        const bool entering = normals[static_cast<std::size_t>(h.face)].dot(ray.direction) < 0.0;
        if (entering) {
          if (depth == 0) {
            start = h.t;
            interval_color = entry_color(ray.origin, ray.direction, h.t, h.face);
          }
          ++depth;
        } else if (depth > 0) {
          if (--depth == 0) {
            const double a = -std::expm1(-density * (h.t - start));
            color += trans * a * interval_color;
            trans *= 1.0 - a;
            entered = true;
          }
        }
      }
      for (int c = 0; c < 3; ++c) out.rgb.at(x, y, c) = color[c];
      out.alpha.at(x, y, 0) = 1.0 - trans;
      out.mask.at(x, y, 0) = entered ? 1.0 : 0.0;
    }
  }
  return out;
}

std::vector<Camera> camera_ring(const SyntheticConfig& config) {
  std::vector<Camera> cams;
  const Vec3 target(0.0, -0.05, 0.0);
  for (int c = 0; c < config.camera_count; ++c) {
    const double angle = 2.0 * std::numbers::pi * c / config.camera_count;
    const Vec3 eye(config.camera_distance * std::sin(angle), config.camera_height,
                   config.camera_distance * std::cos(angle));
    cams.push_back(Camera::look_at(eye, target, Vec3::UnitY(), config.width, config.height, config.fov_y));
  }
  return cams;
}

SceneDataset generate_synthetic_scene(const SyntheticConfig& config) {
  if (config.camera_count < 1 || config.train_camera_count < 1 || config.train_camera_count > config.camera_count) {
    throw UsageError("synthetic scene: need 1 <= train cameras <= cameras");
  }
  if (config.train_frames < 1 || config.test_frames < 0) throw UsageError("synthetic scene: need at least one training frame");
  SceneDataset scene;
  scene.body = make_toy_body(config.body);
  const int k = scene.body.skeleton.part_count();
  scene.cameras = camera_ring(config);

  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  std::vector<double> offsets(static_cast<std::size_t>(k));
  for (double& o : offsets) o = angle(rng);
  std::vector<double> novel_offsets = offsets;
  for (double& o : novel_offsets) o += angle(rng);

  for (int f = 0; f < config.train_frames; ++f) {
    const double phase = 2.0 * std::numbers::pi * f / config.train_frames;
    scene.poses.push_back(scripted_pose(k, phase, offsets, config.motion));
    scene.split.train_frames.push_back(f);
  }
  for (int f = 0; f < config.test_frames; ++f) {
    const double phase = 2.0 * std::numbers::pi * (f + 0.5) / config.test_frames;
    scene.poses.push_back(scripted_pose(k, phase, novel_offsets, config.motion));
    scene.split.test_frames.push_back(config.train_frames + f);
  }
  for (int c = 0; c < config.camera_count; ++c) {
    (c < config.train_camera_count ? scene.split.train_cameras : scene.split.test_cameras).push_back(c);
  }

  for (int f = 0; f < scene.frame_count(); ++f) {
    for (int c = 0; c < config.camera_count; ++c) {
      const GroundTruthView gt = render_ground_truth(scene.body, scene.poses[static_cast<std::size_t>(f)],
                                                     scene.cameras[static_cast<std::size_t>(c)], config.density,
                                                     config.texture);
      Frame fr;
      fr.index = f;
      fr.camera = c;
      char name[64];
      std::snprintf(name, sizeof(name), "f%03d_c%d.png", f, c);
      fr.image_path = std::string("images/") + name;
      fr.mask_path = std::string("masks/") + name;
      fr.image = quantized(gt.rgb);
      fr.mask = gt.mask;
      scene.frames.push_back(std::move(fr));
    }
  }
  scene.validate();
  return scene;
}

}  // namespace skinrf
