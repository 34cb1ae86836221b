#pragma once

#include <Eigen/Core>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "skinrf/geometry.hpp"
#include "skinrf/kinematics.hpp"

namespace skinrf {

// Simplex vector over the K skeleton parts.
using BlendWeights = Eigen::VectorXd;

// Rest-pose skinned triangle mesh.
struct TemplateMesh {
  std::vector<Vec3> vertices;
  std::vector<Face> faces;
  Eigen::MatrixXd vertex_weights;  // V x K, rows on the simplex

  int part_count() const { return static_cast<int>(vertex_weights.cols()); }
  TriangleMesh triangle_mesh() const { return {vertices, faces}; }
  // Face indices in range, one weight row per vertex, rows non-negative and summing to 1 ± 1e-6.
  void validate() const;
};

// Skeleton plus its skinned template; the stand-in for a statistical body model.
struct BodyModel {
  Skeleton skeleton;
  TemplateMesh mesh;
  std::vector<std::string> part_names;
};

struct ToyBodyOptions {
  int part_count = 6;            // 1..10
  double cell_size = 0.025;      // lattice spacing used to mesh the implicit figure
  double blend_radius = 0.04;    // smooth-union radius between limbs
  double weight_falloff = 0.015; // meters; softmin temperature for authored weights
};

// Capsule-limb stick figure in a T-pose, y up, facing +z. Parts in order: torso (root),
// head, left/right upper arm, left/right leg, left/right forearm, left/right shin. Limb
// segments whose part is excluded by part_count are absorbed by the parent part.
BodyModel make_toy_body(const ToyBodyOptions& options = {});

// v' = (Σ_k w_k G_k) v per vertex.
std::vector<Vec3> pose_mesh(const TemplateMesh& mesh, const PartTransforms& parts);

// Exhaustive closest-point scan over the rest-pose template.
SurfaceHit closest_surface_point(const TemplateMesh& mesh, const Vec3& x);

// Pose the mesh, take the closest posed surface point and interpolate its facet's weights.
BlendWeights base_weights(const TemplateMesh& mesh, const PartTransforms& parts, const Vec3& x_observation);
BlendWeights canonical_base_weights(const TemplateMesh& mesh, const Vec3& x_canonical);

// Box around every posed vertex, inflated by `padding` on each side.
Aabb posed_bounds(const TemplateMesh& mesh, const PartTransforms& parts, double padding);

inline constexpr double kDefaultBoundsPadding = 0.05;

// A posed copy of the template with a BVH for repeated base-weight queries.
class PosedBody {
 public:
  PosedBody(const TemplateMesh& mesh, const PartTransforms& parts);

  struct Sample {
    BlendWeights weights;
    Eigen::Matrix<double, Eigen::Dynamic, 3> jacobian;  // d weights / d x, K x 3 (filled on request)
    int face = -1;
    TriangleRegion region = TriangleRegion::kFace;
  };
  Sample base_weights(const Vec3& x, bool with_jacobian = false) const;

  const std::vector<Vec3>& vertices() const { return bvh_.vertices(); }
  const TriangleBvh& bvh() const { return bvh_; }
  const TemplateMesh& mesh() const { return *mesh_; }
  const PartTransforms& parts() const { return parts_; }
  Aabb bounds(double padding) const { return bvh_.bounds().padded(padding); }

 private:
  const TemplateMesh* mesh_;
  PartTransforms parts_;
  TriangleBvh bvh_;
};

}  // namespace skinrf
