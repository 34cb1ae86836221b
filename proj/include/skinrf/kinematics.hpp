#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <optional>
#include <vector>

namespace skinrf {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

// Rigid transform x -> rotation * x + translation.
struct Se3 {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static Se3 identity() { return {}; }
  static Se3 from_translation(const Vec3& t) { return {Mat3::Identity(), t}; }
  static Se3 from_rotation(const Mat3& r) { return {r, Vec3::Zero()}; }

  Vec3 apply(const Vec3& x) const { return rotation * x + translation; }
  Mat4 matrix() const;

  // Orthonormality and det(+1) to `tol`.
  bool is_valid(double tol = 1e-9) const;
};

// a ∘ b: applies b first, then a.
Se3 se3_compose(const Se3& a, const Se3& b);
Se3 se3_inverse(const Se3& a);
inline Se3 operator*(const Se3& a, const Se3& b) { return se3_compose(a, b); }

// Largest admissible axis-angle magnitude; the chart is singular at pi.
inline constexpr double kMaxRotationAngle = 3.14159265358979323846 - 1e-6;

// Rodrigues' formula. Magnitudes at or above pi are clamped to kMaxRotationAngle.
Mat3 rotation_from_axis_angle(const Vec3& axis_angle);
Vec3 axis_angle_from_rotation(const Mat3& r);

struct Skeleton {
  std::vector<int> parents;       // -1 marks the root
  std::vector<Se3> rest_offsets;  // joint frame relative to parent joint frame, rest pose

  int part_count() const { return static_cast<int>(parents.size()); }

  // Throws StructuralError unless parents form a tree with exactly one root.
  void validate() const;
  // Parents-before-children ordering of part indices.
  std::vector<int> topological_order() const;
  // Joint frames in the rest pose (root-down composition of rest offsets).
  std::vector<Se3> rest_joint_frames() const;
};

struct Pose {
  Se3 root;                             // global rigid motion applied on top of the rest placement
  std::vector<Vec3> joint_rotations;    // axis-angle per part, radians

  static Pose rest(int part_count);
  // Throws StructuralError when the rotation count differs or a magnitude is >= pi.
  void validate(int part_count) const;
};

// G_k per part: maps canonical (rest-pose) points to posed points.
struct PartTransforms {
  std::vector<Se3> transforms;

  int size() const { return static_cast<int>(transforms.size()); }
  const Se3& operator[](int k) const { return transforms[static_cast<std::size_t>(k)]; }
  static PartTransforms identity(int part_count);
};

// G_k = A_k ∘ B_k^{-1} with A the posed joint chain and B the rest chain.
PartTransforms forward_kinematics(const Skeleton& skel, const Pose& pose);

// Squared L2 distance between joint-angle vectors (root rotation included).
double pose_distance(const Pose& a, const Pose& b);

}  // namespace skinrf
