#include "skinrf/mesh_extraction.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>
#include <random>

#include "skinrf/error.hpp"
#include "skinrf/scene.hpp"

namespace skinrf {

void MeshConfig::validate() const {
  if (!(voxel_size > 0.0) || !std::isfinite(voxel_size)) throw UsageError("mesh voxel size must be positive");
  if (!std::isfinite(iso)) throw UsageError("mesh iso level must be finite");
  if (padding < 0.0) throw UsageError("mesh padding must be non-negative");
  if (batch_points < 1) throw UsageError("mesh batch size must be positive");
}

DensityGrid grid_layout(const Aabb& box, double voxel) {
  if (box.empty()) throw UsageError("grid over an empty box");
  if (!(voxel > 0.0)) throw UsageError("grid voxel must be positive");
  DensityGrid g;
  g.origin = box.min;
  g.spacing = voxel;
  for (int a = 0; a < 3; ++a) {
    const double cells = std::ceil(box.extent()[a] / voxel);
    if (cells > 1e7) throw SizeError("grid axis of " + std::to_string(cells) + " cells");
    g.dims[static_cast<std::size_t>(a)] = std::max(2, static_cast<int>(cells) + 1);
  }
  return g;
}

std::size_t grid_bytes(const DensityGrid& layout) { return layout.corner_count() * sizeof(double); }

double coarsened_voxel(const Aabb& box, double voxel, std::size_t max_bytes) {
  for (int i = 0; i < 200; ++i) {
    if (grid_bytes(grid_layout(box, voxel)) <= max_bytes) return voxel;
    voxel *= 1.25;
  }
  throw SizeError("no voxel size fits the grid memory cap");
}

namespace {

DensityGrid checked_layout(const Aabb& box, double voxel, std::size_t max_bytes) {
  DensityGrid g = grid_layout(box, voxel);
  if (grid_bytes(g) > max_bytes) {
    throw SizeError("density grid " + std::to_string(g.dims[0]) + "x" + std::to_string(g.dims[1]) + "x" +
                    std::to_string(g.dims[2]) + " needs " + std::to_string(grid_bytes(g)) + " bytes, cap is " +
                    std::to_string(max_bytes));
  }
  g.values.resize(g.corner_count());
  return g;
}

}  // namespace

DensityGrid sample_grid(const Aabb& box, double voxel, std::size_t max_bytes,
                        const std::function<double(const Vec3&)>& f) {
  DensityGrid g = checked_layout(box, voxel, max_bytes);
  for (int z = 0; z < g.dims[2]; ++z) {
    for (int y = 0; y < g.dims[1]; ++y) {
      for (int x = 0; x < g.dims[0]; ++x) g.values[g.index(x, y, z)] = f(g.corner(x, y, z));
    }
  }
  return g;
}

DensityGrid build_density_grid(const Model& model, const Aabb& box, double voxel, std::size_t max_bytes,
                               int batch_points) {
  if (batch_points < 1) throw UsageError("batch size must be positive");
  DensityGrid g = checked_layout(box, voxel, max_bytes);
  const std::size_t n = g.corner_count();
  const auto nx = static_cast<std::size_t>(g.dims[0]);
  const auto ny = static_cast<std::size_t>(g.dims[1]);
  for (std::size_t begin = 0; begin < n; begin += static_cast<std::size_t>(batch_points)) {
    const std::size_t end = std::min(n, begin + static_cast<std::size_t>(batch_points));
    ad::Matrix x(static_cast<Eigen::Index>(end - begin), 3);
    for (std::size_t i = begin; i < end; ++i) {
      const auto ix = static_cast<int>(i % nx);
      const auto iy = static_cast<int>((i / nx) % ny);
      const auto iz = static_cast<int>(i / (nx * ny));
      x.row(static_cast<Eigen::Index>(i - begin)) = g.corner(ix, iy, iz).transpose();
    }
    ad::Tape tape(false);
    ModelGraph graph(tape, model);
    const ad::Matrix& sigma = graph.density(tape.constant(std::move(x))).sigma.value();
    for (std::size_t i = begin; i < end; ++i) g.values[i] = sigma(static_cast<Eigen::Index>(i - begin), 0);
  }
  return g;
}

void attach_weights(ExtractedMesh& mesh, const Model& model, const DeformationContext& canonical, int batch_points) {
  if (batch_points < 1) throw UsageError("batch size must be positive");
  const std::size_t n = mesh.mesh.vertices.size();
  mesh.weights.resize(static_cast<Eigen::Index>(n), canonical.parts().size());
  for (std::size_t begin = 0; begin < n; begin += static_cast<std::size_t>(batch_points)) {
    const std::size_t end = std::min(n, begin + static_cast<std::size_t>(batch_points));
    ad::Matrix x(static_cast<Eigen::Index>(end - begin), 3);
    for (std::size_t i = begin; i < end; ++i) x.row(static_cast<Eigen::Index>(i - begin)) = mesh.mesh.vertices[i].transpose();
    ad::Tape tape(false);
    ModelGraph graph(tape, model);
    const ad::Var w = field_weights(graph, tape.constant(std::move(x)), ContextRows::single(canonical, end - begin));
    mesh.weights.middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(end - begin)) = w.value();
  }
}

ExtractedMesh extract_canonical_mesh(const Model& model, const BodyModel& body, const MeshConfig& config) {
  config.validate();
  Aabb box;
  for (const Vec3& v : body.mesh.vertices) box.expand(v);
  box = box.padded(config.padding);
  const double voxel =
      config.auto_coarsen ? coarsened_voxel(box, config.voxel_size, config.max_grid_bytes) : config.voxel_size;
  const DensityGrid grid = build_density_grid(model, box, voxel, config.max_grid_bytes, config.batch_points);
  ExtractedMesh out;
  out.mesh = marching_cubes(grid, config.iso);
  attach_weights(out, model, DeformationContext::canonical(body), config.batch_points);
  return out;
}

TriangleMesh repose_mesh(const ExtractedMesh& mesh, const PartTransforms& parts) {
  if (mesh.weights.rows() != static_cast<Eigen::Index>(mesh.mesh.vertices.size()) ||
      mesh.weights.cols() != parts.size()) {
    throw StructuralError("repose_mesh: weight table does not match the mesh or the part count");
  }
  TriangleMesh out;
  out.faces = mesh.mesh.faces;
  out.vertices.resize(mesh.mesh.vertices.size());
  for (std::size_t v = 0; v < out.vertices.size(); ++v) {
    const Vec3& p = mesh.mesh.vertices[v];
    Vec3 shift = Vec3::Zero();
    for (int k = 0; k < parts.size(); ++k) {
      const double w = mesh.weights(static_cast<Eigen::Index>(v), k);
      if (w == 0.0) continue;
      shift += w * (parts[k].apply(p) - p);
    }
    out.vertices[v] = p + shift;
  }
  return out;
}

namespace {

std::vector<Vec3> surface_samples(const TriangleMesh& m, int count, std::mt19937_64& rng) {
  std::vector<Vec3> pts = m.vertices;
  if (m.faces.empty() || count <= 0) return pts;
  std::vector<double> cumulative(m.faces.size());
  double total = 0.0;
  for (std::size_t f = 0; f < m.faces.size(); ++f) {
    const Face& t = m.faces[f];
    const Vec3& a = m.vertices[static_cast<std::size_t>(t[0])];
    total += 0.5 * (m.vertices[static_cast<std::size_t>(t[1])] - a).cross(m.vertices[static_cast<std::size_t>(t[2])] - a).norm();
    cumulative[f] = total;
  }
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < count; ++i) {
    const double r = u(rng) * total;
    const auto it = std::lower_bound(cumulative.begin(), cumulative.end(), r);
    const Face& t = m.faces[static_cast<std::size_t>(std::min<std::ptrdiff_t>(it - cumulative.begin(),
                                                                              static_cast<std::ptrdiff_t>(m.faces.size()) - 1))];
    double s = u(rng), q = u(rng);
    if (s + q > 1.0) {
      s = 1.0 - s;
      q = 1.0 - q;
    }
    const Vec3& a = m.vertices[static_cast<std::size_t>(t[0])];
    pts.push_back(a + s * (m.vertices[static_cast<std::size_t>(t[1])] - a) + q * (m.vertices[static_cast<std::size_t>(t[2])] - a));
  }
  return pts;
}

double one_sided(const std::vector<Vec3>& pts, const TriangleBvh& bvh) {
  double worst = 0.0;
  for (const Vec3& p : pts) worst = std::max(worst, bvh.closest_point(p).distance());
  return worst;
}

}  // namespace

double hausdorff_distance(const TriangleMesh& a, const TriangleMesh& b, int samples_per_mesh, std::uint64_t seed) {
  if (a.empty() || b.empty()) throw UsageError("hausdorff_distance: empty mesh");
  std::mt19937_64 rng(seed);
  const std::vector<Vec3> pa = surface_samples(a, samples_per_mesh, rng);
  const std::vector<Vec3> pb = surface_samples(b, samples_per_mesh, rng);
  const TriangleBvh ba(a.vertices, a.faces);
  const TriangleBvh bb(b.vertices, b.faces);
  return std::max(one_sided(pa, bb), one_sided(pb, ba));
}

void write_extracted_mesh(const std::filesystem::path& obj_path, const std::filesystem::path& sidecar_path,
                          const ExtractedMesh& mesh, const std::vector<std::string>& part_names) {
  write_obj(obj_path, mesh.mesh);
  nlohmann::json j;
  j["part_names"] = part_names;
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index v = 0; v < mesh.weights.rows(); ++v) {
    std::vector<double> r;
    for (Eigen::Index k = 0; k < mesh.weights.cols(); ++k) r.push_back(mesh.weights(v, k));
    rows.push_back(r);
  }
  j["vertex_weights"] = std::move(rows);
  std::ofstream out(sidecar_path);
  if (!out) throw UsageError("cannot write " + sidecar_path.string());
  out << j.dump(1) << "\n";
}

}  // namespace skinrf
