#include "skinrf/renderer.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <string>
#include <thread>

#include "skinrf/error.hpp"
#include "skinrf/radiance_field.hpp"

namespace skinrf {

Eigen::Vector2d Camera::project(const Vec3& world) const {
  const Vec3 p = world_to_camera.apply(world);
  return {fx * p.x() / p.z() + cx, fy * p.y() / p.z() + cy};
}

void Camera::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw StructuralError("camera focal lengths must be positive");
  if (width < 1 || height < 1) throw StructuralError("camera resolution must be at least 1x1");
  if (!world_to_camera.is_valid()) throw StructuralError("camera rotation is not a proper rotation");
}

Camera Camera::look_at(const Vec3& eye, const Vec3& target, const Vec3& up, int width, int height, double fov_y) {
  const Vec3 forward = (target - eye).normalized();
  const Vec3 right = forward.cross(up).normalized();
  const Vec3 down = forward.cross(right);
  Camera cam;
  cam.world_to_camera.rotation.row(0) = right.transpose();
  cam.world_to_camera.rotation.row(1) = down.transpose();
  cam.world_to_camera.rotation.row(2) = forward.transpose();
  cam.world_to_camera.translation = -(cam.world_to_camera.rotation * eye);
  cam.width = width;
  cam.height = height;
  cam.fy = 0.5 * height / std::tan(0.5 * fov_y);
  cam.fx = cam.fy;
  cam.cx = 0.5 * width;
  cam.cy = 0.5 * height;
  return cam;
}

Ray pixel_ray(const Camera& cam, double px, double py) {
  const Vec3 d_cam((px - cam.cx) / cam.fx, (py - cam.cy) / cam.fy, 1.0);
  Ray ray;
  ray.origin = cam.center();
  ray.direction = (cam.world_to_camera.rotation.transpose() * d_cam).normalized();
  return ray;
}

std::optional<std::pair<double, double>> intersect_box(const Ray& ray, const Aabb& box) {
  double t0 = 0.0;
  double t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    const double o = ray.origin[a];
    const double d = ray.direction[a];
    if (d == 0.0) {
      if (o < box.min[a] || o > box.max[a]) return std::nullopt;
      continue;
    }
    double ta = (box.min[a] - o) / d;
    double tb = (box.max[a] - o) / d;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  if (!(t1 > t0)) return std::nullopt;
  return std::make_pair(t0, t1);
}

bool bound_ray(Ray& ray, const Aabb& box) {
  const auto hit = intersect_box(ray, box);
  if (!hit) {
    ray.t_near = ray.t_far = 0.0;
    return false;
  }
  ray.t_near = hit->first;
  ray.t_far = hit->second;
  return true;
}

RaySamples sample_ray(double t_near, double t_far, const SampleSettings& settings, std::mt19937_64* rng) {
  if (settings.samples < 1) throw UsageError("sample_ray: need at least one sample");
  if (!(t_far > t_near)) throw UsageError("sample_ray: empty interval");
  if (settings.stratified && !rng) throw UsageError("sample_ray: stratified sampling needs a generator");
  const int n = settings.samples;
  const double step = (t_far - t_near) / n;
  RaySamples s;
  s.t.resize(static_cast<std::size_t>(n));
  s.delta.resize(static_cast<std::size_t>(n));
  std::uniform_real_distribution<double> jitter(0.0, 1.0);
  for (int j = 0; j < n; ++j) {
    const double u = settings.stratified ? jitter(*rng) : 0.5;
    s.t[static_cast<std::size_t>(j)] = t_near + (j + u) * step;
  }
  double lower = t_near;
  for (int j = 0; j < n; ++j) {
    const auto jj = static_cast<std::size_t>(j);
    const double upper = j + 1 < n ? 0.5 * (s.t[jj] + s.t[jj + 1]) : t_far;
    s.delta[jj] = upper - lower;
    lower = upper;
  }
  return s;
}

Composite composite(std::span<const double> sigma, std::span<const double> delta, std::span<const Vec3> color) {
  if (sigma.size() != delta.size() || sigma.size() != color.size()) throw UsageError("composite: length mismatch");
  Composite out;
  double trans = 1.0;
  for (std::size_t j = 0; j < sigma.size(); ++j) {
    const double a = -std::expm1(-sigma[j] * delta[j]);
    out.color += trans * a * color[j];
    trans *= 1.0 - a;
  }
  out.alpha = 1.0 - trans;
  return out;
}

ad::Var composite(ad::Var sigma, ad::Var rgb, const std::vector<int>& offsets, const std::vector<double>& delta,
                  std::vector<double>* alpha) {
  const ad::Matrix& sv = sigma.value();
  const ad::Matrix& cv = rgb.value();
  const auto rays = static_cast<Eigen::Index>(offsets.size()) - 1;
  if (rays < 0 || sv.cols() != 1 || cv.cols() != 3 || sv.rows() != cv.rows() ||
      static_cast<std::size_t>(sv.rows()) != delta.size() || offsets.back() != sv.rows()) {
    throw UsageError("composite: sample layout does not match inputs");
  }
  ad::Matrix out = ad::Matrix::Zero(rays, 3);
  if (alpha) alpha->assign(static_cast<std::size_t>(rays), 0.0);
  for (Eigen::Index r = 0; r < rays; ++r) {
    double trans = 1.0;
    for (int j = offsets[static_cast<std::size_t>(r)]; j < offsets[static_cast<std::size_t>(r) + 1]; ++j) {
      const double a = -std::expm1(-sv(j, 0) * delta[static_cast<std::size_t>(j)]);
      out.row(r) += (trans * a) * cv.row(j);
      trans *= 1.0 - a;
    }
    if (alpha) (*alpha)[static_cast<std::size_t>(r)] = 1.0 - trans;
  }
  return sigma.tape->custom(
      std::move(out), {sigma, rgb},
      [sigma, rgb, offsets, delta](ad::Tape& t, const ad::Matrix& g) {
        const ad::Matrix& s = t.value(sigma);
        const ad::Matrix& c = t.value(rgb);
        ad::Matrix gs = ad::Matrix::Zero(s.rows(), 1);
        ad::Matrix gc = ad::Matrix::Zero(c.rows(), 3);
        std::vector<double> before;  // transmittance in front of each sample
        for (std::size_t r = 0; r + 1 < offsets.size(); ++r) {
          const int begin = offsets[r];
          const int end = offsets[r + 1];
          before.resize(static_cast<std::size_t>(end - begin));
          double trans = 1.0;
          for (int j = begin; j < end; ++j) {
            before[static_cast<std::size_t>(j - begin)] = trans;
            trans *= std::exp(-s(j, 0) * delta[static_cast<std::size_t>(j)]);
          }
          const Eigen::RowVector3d gr = g.row(static_cast<Eigen::Index>(r));
          Eigen::RowVector3d behind = Eigen::RowVector3d::Zero();  // sum of w_l c_l over later samples
          for (int j = end - 1; j >= begin; --j) {
            const double dj = delta[static_cast<std::size_t>(j)];
            const double e = std::exp(-s(j, 0) * dj);
            const double tj = before[static_cast<std::size_t>(j - begin)];
            const double w = -tj * std::expm1(-s(j, 0) * dj);
            gs(j, 0) = dj * (tj * e * gr.dot(c.row(j)) - gr.dot(behind));
            gc.row(j) = w * gr;
            behind += w * c.row(j);
          }
        }
        t.accumulate(sigma, gs);
        t.accumulate(rgb, gc);
      },
      "composite");
}

RenderedRays render_rays(ModelGraph& graph, std::span<const Ray> rays, const ContextRows& ray_ctx,
                         const SampleSettings& settings, std::mt19937_64* rng) {
  if (ray_ctx.rows.size() != rays.size()) throw UsageError("render_rays: one context row per ray is required");
  ad::Tape& tape = graph.tape();
  std::vector<int> offsets{0};
  std::vector<double> delta;
  std::vector<Vec3> points;
  std::vector<Vec3> dirs;
  ContextRows sample_ctx;
  sample_ctx.contexts = ray_ctx.contexts;
  for (std::size_t r = 0; r < rays.size(); ++r) {
    const Ray& ray = rays[r];
    if (ray.t_far > ray.t_near) {
      const RaySamples s = sample_ray(ray.t_near, ray.t_far, settings, rng);
      for (std::size_t j = 0; j < s.t.size(); ++j) {
        points.push_back(ray.origin + s.t[j] * ray.direction);
        dirs.push_back(ray.direction);
        delta.push_back(s.delta[j]);
        sample_ctx.rows.push_back(ray_ctx.rows[r]);
      }
    }
    offsets.push_back(static_cast<int>(points.size()));
  }
  RenderedRays out;
  if (points.empty()) {
    out.rgb = tape.constant(ad::Matrix::Zero(static_cast<Eigen::Index>(rays.size()), 3));
    out.alpha.assign(rays.size(), 0.0);
    return out;
  }
  const auto n = static_cast<Eigen::Index>(points.size());
  ad::Matrix xm(n, 3), dm(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    xm.row(i) = points[static_cast<std::size_t>(i)].transpose();
    dm.row(i) = dirs[static_cast<std::size_t>(i)].transpose();
  }
  const FieldSamples field =
      query_deformed(graph, tape.constant(std::move(xm), "sample_points"), tape.constant(std::move(dm), "view_dirs"), sample_ctx);
  out.rgb = composite(field.sigma, field.rgb, offsets, delta, &out.alpha);
  return out;
}

Composite render_ray(const Model& model, const DeformationContext& ctx, Ray ray, std::mt19937_64* rng,
                     bool stratified) {
  if (!bound_ray(ray, ctx.bounds)) return {};
  ad::Tape tape(false);
  ModelGraph graph(tape, model);
  const ContextRows rows = ContextRows::single(ctx, 1);
  SampleSettings settings;
  settings.stratified = stratified;
  const RenderedRays r = render_rays(graph, std::span<const Ray>(&ray, 1), rows, settings, rng);
  return {r.rgb.value().row(0).transpose(), r.alpha[0]};
}

Image render_image(const Model& model, const DeformationContext& ctx, const Camera& cam,
                   const RenderSettings& settings) {
  cam.validate();
  if (settings.batch_rays < 1) throw UsageError("render_image: batch size must be positive");
  Image img(cam.width, cam.height, 4);
  const long pixels = static_cast<long>(cam.width) * cam.height;
  const long chunks = (pixels + settings.batch_rays - 1) / settings.batch_rays;
  std::atomic<long> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto worker = [&] {
    try {
      for (long c = next++; c < chunks; c = next++) {
        const long begin = c * settings.batch_rays;
        const long end = std::min(pixels, begin + settings.batch_rays);
        std::vector<Ray> rays;
        rays.reserve(static_cast<std::size_t>(end - begin));
        for (long p = begin; p < end; ++p) {
          Ray ray = pixel_ray(cam, static_cast<double>(p % cam.width) + 0.5, static_cast<double>(p / cam.width) + 0.5);
          bound_ray(ray, ctx.bounds);
          rays.push_back(ray);
        }
        std::seed_seq seq{static_cast<std::uint64_t>(settings.seed), static_cast<std::uint64_t>(c)};
        std::mt19937_64 rng(seq);
        ad::Tape tape(false);
        ModelGraph graph(tape, model);
        const ContextRows rows = ContextRows::single(ctx, rays.size());
        const RenderedRays r = render_rays(graph, rays, rows, settings.samples, &rng);
        for (long p = begin; p < end; ++p) {
          const auto i = static_cast<Eigen::Index>(p - begin);
          const int x = static_cast<int>(p % cam.width), y = static_cast<int>(p / cam.width);
          for (int ch = 0; ch < 3; ++ch) img.at(x, y, ch) = r.rgb.value()(i, ch);
          img.at(x, y, 3) = r.alpha[static_cast<std::size_t>(i)];
        }
      }
    } catch (...) {
      std::lock_guard<std::mutex> lock(failure_mutex);
      if (!failure) failure = std::current_exception();
      next = chunks;
    }
  };

  int threads = settings.threads > 0 ? settings.threads : static_cast<int>(std::thread::hardware_concurrency());
  threads = std::max(1, std::min<int>(threads, static_cast<int>(chunks)));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return img;
}

}  // namespace skinrf
