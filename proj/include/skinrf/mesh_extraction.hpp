#pragma once

// Canonical-space surface extraction: the density field sampled on a lattice, marching cubes
// at a density threshold, canonical blend weights per vertex and reposing by LBS.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "skinrf/blend_weight_field.hpp"
#include "skinrf/marching_cubes.hpp"
#include "skinrf/model.hpp"

namespace skinrf {

struct MeshConfig {
  double voxel_size = 0.005;  // meters
  double iso = 5.0;           // density threshold
  double padding = 0.05;      // around the rest-pose template box
  std::size_t max_grid_bytes = std::size_t{1} << 30;
  // Grow the voxel until the grid fits instead of failing with SizeError.
  bool auto_coarsen = false;
  int batch_points = 4096;  // points per forward pass

  void validate() const;
};

// Lattice geometry covering `box` at `voxel`, before any values are filled.
DensityGrid grid_layout(const Aabb& box, double voxel);
std::size_t grid_bytes(const DensityGrid& layout);
// Smallest voxel >= `voxel` (growing by 1.25x) whose grid over `box` fits `max_bytes`.
double coarsened_voxel(const Aabb& box, double voxel, std::size_t max_bytes);

// Samples `f` at every lattice corner. Throws SizeError if the grid would exceed `max_bytes`.
DensityGrid sample_grid(const Aabb& box, double voxel, std::size_t max_bytes,
                        const std::function<double(const Vec3&)>& f);
// Canonical density sigma(x) on the lattice, evaluated in batches.
DensityGrid build_density_grid(const Model& model, const Aabb& box, double voxel, std::size_t max_bytes,
                               int batch_points = 4096);

struct ExtractedMesh {
  TriangleMesh mesh;
  Eigen::MatrixXd weights;  // vertex x part, rows on the simplex
};

// Canonical surface of the learned density over the padded rest-pose box, with w_can.
ExtractedMesh extract_canonical_mesh(const Model& model, const BodyModel& body, const MeshConfig& config);
// Fills `weights` with the canonical weight field at each vertex.
void attach_weights(ExtractedMesh& mesh, const Model& model, const DeformationContext& canonical,
                    int batch_points = 4096);
// v' = v + sum_k w_k (G_k v - v); identity transforms return the vertices unchanged.
TriangleMesh repose_mesh(const ExtractedMesh& mesh, const PartTransforms& parts);

// Symmetric Hausdorff distance estimated from the vertices plus `samples_per_mesh` area-uniform
// surface samples of each mesh, measured against the exact closest point on the other.
double hausdorff_distance(const TriangleMesh& a, const TriangleMesh& b, int samples_per_mesh = 20000,
                          std::uint64_t seed = 0);

// OBJ plus a JSON sidecar {part_names, vertex_weights}.
void write_extracted_mesh(const std::filesystem::path& obj_path, const std::filesystem::path& sidecar_path,
                          const ExtractedMesh& mesh, const std::vector<std::string>& part_names);

}  // namespace skinrf
