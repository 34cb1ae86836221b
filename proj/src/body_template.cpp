#include "skinrf/body_template.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "skinrf/error.hpp"
#include "skinrf/marching_cubes.hpp"

namespace skinrf {

void TemplateMesh::validate() const {
  const int nv = static_cast<int>(vertices.size());
  if (vertex_weights.rows() != nv) {
    throw StructuralError("template has " + std::to_string(nv) + " vertices but " +
                          std::to_string(vertex_weights.rows()) + " weight rows");
  }
  for (const Face& f : faces) {
    for (const int v : f) {
      if (v < 0 || v >= nv) throw StructuralError("template face references vertex " + std::to_string(v));
    }
  }
  for (int v = 0; v < nv; ++v) {
    const auto row = vertex_weights.row(v);
    if ((row.array() < 0.0).any() || std::abs(row.sum() - 1.0) > 1e-6) {
      throw StructuralError("template vertex " + std::to_string(v) + " has weights off the simplex");
    }
  }
}

namespace {

struct LimbSegment {
  int part;  // owning part before absorption
  Vec3 a, b;
  double radius;
};

struct PartSpec {
  const char* name;
  int parent;
  Vec3 joint;
};

// Fixed ten-part layout; the first part_count entries are used.
const PartSpec kParts[] = {
    {"torso", -1, {0.0, 0.0, 0.0}},          {"head", 0, {0.0, 0.40, 0.0}},
    {"left_arm", 0, {0.17, 0.30, 0.0}},      {"right_arm", 0, {-0.17, 0.30, 0.0}},
    {"left_leg", 0, {0.08, -0.08, 0.0}},     {"right_leg", 0, {-0.08, -0.08, 0.0}},
    {"left_forearm", 2, {0.42, 0.30, 0.0}},  {"right_forearm", 3, {-0.42, 0.30, 0.0}},
    {"left_shin", 4, {0.08, -0.38, 0.0}},    {"right_shin", 5, {-0.08, -0.38, 0.0}},
};
constexpr int kMaxParts = 10;

const LimbSegment kSegments[] = {
    {0, {0.0, -0.02, 0.0}, {0.0, 0.36, 0.0}, 0.13},    {1, {0.0, 0.47, 0.0}, {0.0, 0.53, 0.0}, 0.10},
    {2, {0.17, 0.30, 0.0}, {0.42, 0.30, 0.0}, 0.065},  {3, {-0.17, 0.30, 0.0}, {-0.42, 0.30, 0.0}, 0.065},
    {4, {0.08, -0.08, 0.0}, {0.08, -0.38, 0.0}, 0.075}, {5, {-0.08, -0.08, 0.0}, {-0.08, -0.38, 0.0}, 0.075},
    {6, {0.42, 0.30, 0.0}, {0.64, 0.30, 0.0}, 0.055},  {7, {-0.42, 0.30, 0.0}, {-0.64, 0.30, 0.0}, 0.055},
    {8, {0.08, -0.38, 0.0}, {0.08, -0.66, 0.0}, 0.06}, {9, {-0.08, -0.38, 0.0}, {-0.08, -0.66, 0.0}, 0.06},
};

double segment_distance(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 ab = b - a;
  const double t = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

double smooth_min(double a, double b, double k) {
  const double h = std::max(k - std::abs(a - b), 0.0) / k;
  return std::min(a, b) - h * h * k * 0.25;
}

}  // namespace

BodyModel make_toy_body(const ToyBodyOptions& options) {
  const int k = options.part_count;
  if (k < 1 || k > kMaxParts) throw StructuralError("toy body supports 1..10 parts, got " + std::to_string(k));

  BodyModel body;
  for (int i = 0; i < k; ++i) {
    const PartSpec& spec = kParts[i];
    body.part_names.emplace_back(spec.name);
    body.skeleton.parents.push_back(spec.parent);
    const Vec3 offset = spec.parent < 0 ? spec.joint : Vec3(spec.joint - kParts[spec.parent].joint);
    body.skeleton.rest_offsets.push_back(Se3::from_translation(offset));
  }
  body.skeleton.validate();

  // A segment whose part is excluded belongs to the nearest included ancestor.
  std::vector<LimbSegment> segments;
  for (const LimbSegment& seg : kSegments) {
    int owner = seg.part;
    while (owner >= k) owner = kParts[owner].parent;
    // Absent head/limb roots (owner chain ends at torso) are dropped unless the limb root exists.
    if (seg.part >= k && kParts[seg.part].parent >= k) continue;
    if (seg.part >= k && seg.part < 6) continue;
    segments.push_back({owner, seg.a, seg.b, seg.radius});
  }

  auto sdf = [&](const Vec3& p) {
    double d = std::numeric_limits<double>::infinity();
    for (const LimbSegment& s : segments) {
      const double ds = segment_distance(p, s.a, s.b) - s.radius;
      d = std::isinf(d) ? ds : smooth_min(d, ds, options.blend_radius);
    }
    return d;
  };

  Aabb box;
  for (const LimbSegment& s : segments) {
    box.expand(s.a);
    box.expand(s.b);
  }
  box = box.padded(0.2);
  DensityGrid grid;
  grid.spacing = options.cell_size;
  // Offset by a fraction of a cell so no lattice corner sits exactly on a symmetry plane.
  grid.origin = box.min + Vec3(0.311, 0.277, 0.193) * options.cell_size;
  for (int a = 0; a < 3; ++a) grid.dims[static_cast<std::size_t>(a)] = static_cast<int>(std::ceil(box.extent()[a] / grid.spacing)) + 1;
  grid.values.resize(grid.corner_count());
  for (int z = 0; z < grid.dims[2]; ++z) {
    for (int y = 0; y < grid.dims[1]; ++y) {
      for (int x = 0; x < grid.dims[0]; ++x) grid.values[grid.index(x, y, z)] = -sdf(grid.corner(x, y, z));
    }
  }
  TriangleMesh surface = marching_cubes(grid, 0.0);
  body.mesh.vertices = std::move(surface.vertices);
  body.mesh.faces = std::move(surface.faces);

  const auto nv = static_cast<Eigen::Index>(body.mesh.vertices.size());
  body.mesh.vertex_weights.setZero(nv, k);
  for (Eigen::Index v = 0; v < nv; ++v) {
    const Vec3& p = body.mesh.vertices[static_cast<std::size_t>(v)];
    Eigen::VectorXd dist = Eigen::VectorXd::Constant(k, std::numeric_limits<double>::infinity());
    for (const LimbSegment& s : segments) {
      dist[s.part] = std::min(dist[s.part], segment_distance(p, s.a, s.b) - s.radius);
    }
    const double dmin = dist.minCoeff();
    Eigen::VectorXd w(k);
    for (int i = 0; i < k; ++i) w[i] = std::isinf(dist[i]) ? 0.0 : std::exp(-(dist[i] - dmin) / options.weight_falloff);
    body.mesh.vertex_weights.row(v) = (w / w.sum()).transpose();
  }
  body.mesh.validate();
  return body;
}

std::vector<Vec3> pose_mesh(const TemplateMesh& mesh, const PartTransforms& parts) {
  if (parts.size() != mesh.part_count()) {
    throw StructuralError("pose_mesh: " + std::to_string(parts.size()) + " transforms for a " +
                          std::to_string(mesh.part_count()) + "-part template");
  }
  std::vector<Vec3> out(mesh.vertices.size());
  for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
    // Blended displacement, so identity transforms reproduce the rest vertices bit for bit.
    Vec3 shift = Vec3::Zero();
    for (int k = 0; k < parts.size(); ++k) {
      const double w = mesh.vertex_weights(static_cast<Eigen::Index>(v), k);
      if (w == 0.0) continue;
      shift += w * (parts[k].apply(mesh.vertices[v]) - mesh.vertices[v]);
    }
    out[v] = mesh.vertices[v] + shift;
  }
  return out;
}

SurfaceHit closest_surface_point(const TemplateMesh& mesh, const Vec3& x) {
  return closest_point_brute_force(mesh.vertices, mesh.faces, x);
}

namespace {

BlendWeights interpolate_weights(const TemplateMesh& mesh, const SurfaceHit& hit) {
  const Face& f = mesh.faces[static_cast<std::size_t>(hit.face)];
  BlendWeights w = BlendWeights::Zero(mesh.part_count());
  for (int j = 0; j < 3; ++j) w += hit.closest.barycentric[j] * mesh.vertex_weights.row(f[static_cast<std::size_t>(j)]).transpose();
  return w;
}

}  // namespace

BlendWeights base_weights(const TemplateMesh& mesh, const PartTransforms& parts, const Vec3& x_observation) {
  const std::vector<Vec3> posed = pose_mesh(mesh, parts);
  return interpolate_weights(mesh, closest_point_brute_force(posed, mesh.faces, x_observation));
}

BlendWeights canonical_base_weights(const TemplateMesh& mesh, const Vec3& x_canonical) {
  return interpolate_weights(mesh, closest_surface_point(mesh, x_canonical));
}

Aabb posed_bounds(const TemplateMesh& mesh, const PartTransforms& parts, double padding) {
  if (padding < 0.0) throw StructuralError("bounds padding must be non-negative");
  Aabb box;
  for (const Vec3& v : pose_mesh(mesh, parts)) box.expand(v);
  return box.padded(padding);
}

PosedBody::PosedBody(const TemplateMesh& mesh, const PartTransforms& parts)
    : mesh_(&mesh), parts_(parts), bvh_(pose_mesh(mesh, parts), mesh.faces) {}

PosedBody::Sample PosedBody::base_weights(const Vec3& x, bool with_jacobian) const {
  const SurfaceHit hit = bvh_.closest_point(x);
  Sample s;
  s.weights = interpolate_weights(*mesh_, hit);
  s.face = hit.face;
  s.region = hit.closest.region;
  if (with_jacobian) {
    const Face& f = mesh_->faces[static_cast<std::size_t>(hit.face)];
    const auto& verts = bvh_.vertices();
    const Eigen::Matrix3d db = barycentric_jacobian(hit.closest, verts[static_cast<std::size_t>(f[0])],
                                                    verts[static_cast<std::size_t>(f[1])],
                                                    verts[static_cast<std::size_t>(f[2])]);
    s.jacobian.setZero(mesh_->part_count(), 3);
    for (int j = 0; j < 3; ++j) {
      s.jacobian += mesh_->vertex_weights.row(f[static_cast<std::size_t>(j)]).transpose() * db.row(j);
    }
  }
  return s;
}

}  // namespace skinrf
