#include "skinrf/kinematics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "skinrf/error.hpp"

namespace skinrf {

Mat4 Se3::matrix() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rotation;
  m.topRightCorner<3, 1>() = translation;
  return m;
}

bool Se3::is_valid(double tol) const {
  const double ortho = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
  return ortho <= tol && std::abs(rotation.determinant() - 1.0) <= tol && translation.allFinite();
}

Se3 se3_compose(const Se3& a, const Se3& b) {
  return {a.rotation * b.rotation, a.rotation * b.translation + a.translation};
}

Se3 se3_inverse(const Se3& a) {
  const Mat3 rt = a.rotation.transpose();
  return {rt, -(rt * a.translation)};
}

Mat3 rotation_from_axis_angle(const Vec3& axis_angle) {
  double theta = axis_angle.norm();
  if (theta < 1e-12) {
    // First-order expansion keeps the map smooth at zero.
    Mat3 k;
    k << 0, -axis_angle.z(), axis_angle.y(), axis_angle.z(), 0, -axis_angle.x(), -axis_angle.y(),
        axis_angle.x(), 0;
    return Mat3::Identity() + k;
  }
  const Vec3 axis = axis_angle / theta;
  theta = std::min(theta, kMaxRotationAngle);
  Mat3 k;
  k << 0, -axis.z(), axis.y(), axis.z(), 0, -axis.x(), -axis.y(), axis.x(), 0;
  return Mat3::Identity() + std::sin(theta) * k + (1.0 - std::cos(theta)) * k * k;
}

Vec3 axis_angle_from_rotation(const Mat3& r) {
  const Eigen::AngleAxisd aa(r);
  return aa.axis() * aa.angle();
}

void Skeleton::validate() const {
  const int k = part_count();
  if (k < 1) throw StructuralError("skeleton has no parts");
  if (static_cast<int>(rest_offsets.size()) != k) {
    throw StructuralError("skeleton has " + std::to_string(k) + " parents but " +
                          std::to_string(rest_offsets.size()) + " rest offsets");
  }
  int roots = 0;
  for (int i = 0; i < k; ++i) {
    const int p = parents[static_cast<std::size_t>(i)];
    if (p == -1) {
      ++roots;
    } else if (p < 0 || p >= k || p == i) {
      throw StructuralError("part " + std::to_string(i) + " has invalid parent " + std::to_string(p));
    }
    if (!rest_offsets[static_cast<std::size_t>(i)].is_valid(1e-6)) {
      throw StructuralError("rest offset of part " + std::to_string(i) + " is not a rigid transform");
    }
  }
  if (roots != 1) throw StructuralError("skeleton must have exactly one root, found " + std::to_string(roots));
  // Every chain must reach the root within k steps, otherwise there is a cycle.
  for (int i = 0; i < k; ++i) {
    int cur = i;
    int steps = 0;
    while (parents[static_cast<std::size_t>(cur)] != -1) {
      cur = parents[static_cast<std::size_t>(cur)];
      if (++steps > k) throw StructuralError("skeleton parent links contain a cycle at part " + std::to_string(i));
    }
  }
}

std::vector<int> Skeleton::topological_order() const {
  validate();
  const int k = part_count();
  std::vector<int> depth(static_cast<std::size_t>(k), 0);
  for (int i = 0; i < k; ++i) {
    for (int cur = i; parents[static_cast<std::size_t>(cur)] != -1; cur = parents[static_cast<std::size_t>(cur)]) {
      ++depth[static_cast<std::size_t>(i)];
    }
  }
  std::vector<int> order(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) order[static_cast<std::size_t>(i)] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return depth[static_cast<std::size_t>(a)] < depth[static_cast<std::size_t>(b)]; });
  return order;
}

std::vector<Se3> Skeleton::rest_joint_frames() const {
  std::vector<Se3> frames(static_cast<std::size_t>(part_count()));
  for (const int i : topological_order()) {
    const auto ui = static_cast<std::size_t>(i);
    const int p = parents[ui];
    frames[ui] = p < 0 ? rest_offsets[ui] : frames[static_cast<std::size_t>(p)] * rest_offsets[ui];
  }
  return frames;
}

Pose Pose::rest(int part_count) {
  Pose p;
  p.joint_rotations.assign(static_cast<std::size_t>(part_count), Vec3::Zero());
  return p;
}

void Pose::validate(int part_count) const {
  if (static_cast<int>(joint_rotations.size()) != part_count) {
    throw StructuralError("pose has " + std::to_string(joint_rotations.size()) + " joint rotations, skeleton has " +
                          std::to_string(part_count) + " parts");
  }
  for (std::size_t i = 0; i < joint_rotations.size(); ++i) {
    if (!joint_rotations[i].allFinite() || joint_rotations[i].norm() >= 3.14159265358979323846) {
      throw StructuralError("joint rotation " + std::to_string(i) + " outside the canonical axis-angle chart");
    }
  }
  if (!root.is_valid(1e-6)) throw StructuralError("pose root is not a rigid transform");
}

PartTransforms PartTransforms::identity(int part_count) {
  PartTransforms p;
  p.transforms.assign(static_cast<std::size_t>(part_count), Se3::identity());
  return p;
}

PartTransforms forward_kinematics(const Skeleton& skel, const Pose& pose) {
  const int k = skel.part_count();
  pose.validate(k);
  const auto order = skel.topological_order();
  std::vector<Se3> posed(static_cast<std::size_t>(k));
  std::vector<Se3> rest(static_cast<std::size_t>(k));
  for (const int i : order) {
    const auto ui = static_cast<std::size_t>(i);
    const Se3 local = skel.rest_offsets[ui] * Se3::from_rotation(rotation_from_axis_angle(pose.joint_rotations[ui]));
    const int p = skel.parents[ui];
    if (p < 0) {
      posed[ui] = pose.root * local;
      rest[ui] = skel.rest_offsets[ui];
    } else {
      posed[ui] = posed[static_cast<std::size_t>(p)] * local;
      rest[ui] = rest[static_cast<std::size_t>(p)] * skel.rest_offsets[ui];
    }
  }
  PartTransforms out;
  out.transforms.resize(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    out.transforms[ui] = posed[ui] * se3_inverse(rest[ui]);
  }
  return out;
}

double pose_distance(const Pose& a, const Pose& b) {
  double d = (axis_angle_from_rotation(a.root.rotation) - axis_angle_from_rotation(b.root.rotation)).squaredNorm();
  const std::size_t n = std::min(a.joint_rotations.size(), b.joint_rotations.size());
  for (std::size_t i = 0; i < n; ++i) d += (a.joint_rotations[i] - b.joint_rotations[i]).squaredNorm();
  return d;
}

}  // namespace skinrf
