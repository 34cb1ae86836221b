#pragma once

// Pinhole cameras, ray bounds from the posed box, sample placement along rays and
// emission-absorption compositing over a black background.

#include <Eigen/Core>
#include <optional>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "skinrf/autodiff.hpp"
#include "skinrf/blend_weight_field.hpp"
#include "skinrf/image.hpp"
#include "skinrf/model.hpp"

namespace skinrf {

// OpenCV convention: camera looks down +z, x right, y down; pixel centers at (i + 0.5, j + 0.5).
struct Camera {
  double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
  Se3 world_to_camera;
  int width = 1, height = 1;

  Vec3 center() const { return -(world_to_camera.rotation.transpose() * world_to_camera.translation); }
  Eigen::Vector2d project(const Vec3& world) const;
  // Throws StructuralError for non-positive focal lengths, an invalid rotation or empty resolution.
  void validate() const;

  // Camera at `eye` looking at `target` with `up` roughly along -y of the image.
  static Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, int width, int height, double fov_y);
};

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();
  double t_near = 0.0;
  double t_far = 0.0;
};

// Ray through continuous pixel coordinates (px, py); bounds left at zero.
Ray pixel_ray(const Camera& cam, double px, double py);
inline Ray pixel_ray(const Camera& cam, const Eigen::Vector2d& px) { return pixel_ray(cam, px.x(), px.y()); }

// Slab test clipped to t >= 0. nullopt when the clipped interval is empty.
std::optional<std::pair<double, double>> intersect_box(const Ray& ray, const Aabb& box);

inline constexpr int kSamplesPerRay = 64;

struct SampleSettings {
  int samples = kSamplesPerRay;
  bool stratified = false;  // jittered strata when true, stratum midpoints otherwise
};

// Depths t_j and interval lengths delta_j for one ray. Interval boundaries are t_near, the
// midpoints between consecutive samples and t_far, so the deltas partition [t_near, t_far].
struct RaySamples {
  std::vector<double> t;
  std::vector<double> delta;
};
RaySamples sample_ray(double t_near, double t_far, const SampleSettings& settings, std::mt19937_64* rng);

struct Composite {
  Vec3 color = Vec3::Zero();
  double alpha = 0.0;
};
// C = sum_j T_j (1 - exp(-sigma_j delta_j)) c_j, T_j = exp(-sum_{l<j} sigma_l delta_l), alpha = 1 - T_end.
Composite composite(std::span<const double> sigma, std::span<const double> delta, std::span<const Vec3> color);

// Batched compositing: samples of ray r occupy rows [offsets[r], offsets[r+1]). Returns R x 3.
ad::Var composite(ad::Var sigma, ad::Var rgb, const std::vector<int>& offsets, const std::vector<double>& delta,
                  std::vector<double>* alpha = nullptr);

struct RenderedRays {
  ad::Var rgb;                 // R x 3
  std::vector<double> alpha;   // per ray
};
// Renders rays whose bounds are already set (t_near >= t_far means a miss: black, alpha 0).
// ray_ctx assigns one context per ray.
RenderedRays render_rays(ModelGraph& graph, std::span<const Ray> rays, const ContextRows& ray_ctx,
                         const SampleSettings& settings, std::mt19937_64* rng);

// Sets the ray bounds from the context box; false on a miss.
bool bound_ray(Ray& ray, const Aabb& box);

// Single ray. Bounds come from the context box.
Composite render_ray(const Model& model, const DeformationContext& ctx, Ray ray, std::mt19937_64* rng,
                     bool stratified);

struct RenderSettings {
  int batch_rays = 256;  // rays per forward pass
  int threads = 0;       // 0 = hardware concurrency
  SampleSettings samples;
  std::uint64_t seed = 0;  // jitter seed when samples.stratified
};
// RGBA image of the field under `cam`. Batches are fixed pixel ranges, so the result does not
// depend on the thread count.
Image render_image(const Model& model, const DeformationContext& ctx, const Camera& cam,
                   const RenderSettings& settings = {});

}  // namespace skinrf
