#pragma once

#include <Eigen/Core>
#include <array>
#include <limits>
#include <span>
#include <vector>

#include "skinrf/kinematics.hpp"

namespace skinrf {

using Face = std::array<int, 3>;

struct Aabb {
  Vec3 min = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 max = Vec3::Constant(-std::numeric_limits<double>::infinity());

  bool empty() const { return (min.array() > max.array()).any(); }
  void expand(const Vec3& p) {
    min = min.cwiseMin(p);
    max = max.cwiseMax(p);
  }
  void expand(const Aabb& b) {
    min = min.cwiseMin(b.min);
    max = max.cwiseMax(b.max);
  }
  Aabb padded(double pad) const { return {min.array() - pad, max.array() + pad}; }
  Vec3 center() const { return 0.5 * (min + max); }
  Vec3 extent() const { return max - min; }
  bool contains(const Vec3& p, double tol = 0.0) const {
    return (p.array() >= min.array() - tol).all() && (p.array() <= max.array() + tol).all();
  }
  double squared_distance(const Vec3& p) const {
    const Vec3 d = (min - p).cwiseMax(Vec3::Zero()).cwiseMax(p - max);
    return d.squaredNorm();
  }
};

// Which feature of the triangle the closest point lies on.
enum class TriangleRegion : std::uint8_t { kVertexA, kVertexB, kVertexC, kEdgeAB, kEdgeAC, kEdgeBC, kFace };

struct TrianglePoint {
  Vec3 point;
  Vec3 barycentric;  // weights of (a, b, c)
  double squared_distance;
  TriangleRegion region;
};

// Closest point on triangle abc to p (region classification after Ericson).
TrianglePoint closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

// d(barycentric)/dp for the region found above; rows are (a, b, c). Constant within a region.
Eigen::Matrix3d barycentric_jacobian(const TrianglePoint& tp, const Vec3& a, const Vec3& b, const Vec3& c);

struct SurfaceHit {
  int face = -1;
  TrianglePoint closest;
  double distance() const { return std::sqrt(closest.squared_distance); }
};

struct RayHit {
  double t;
  int face;
};

// Bounding volume hierarchy over a triangle soup. Holds copies of the vertex positions.
class TriangleBvh {
 public:
  TriangleBvh() = default;
  TriangleBvh(std::vector<Vec3> vertices, std::vector<Face> faces);

  // Closest surface point; ties on distance go to the lowest face index.
  SurfaceHit closest_point(const Vec3& p) const;
  // Every intersection of the ray origin + t*dir with t > t_min, sorted by t.
  std::vector<RayHit> intersect_all(const Vec3& origin, const Vec3& dir, double t_min = 0.0) const;

  const std::vector<Vec3>& vertices() const { return vertices_; }
  const std::vector<Face>& faces() const { return faces_; }
  const Aabb& bounds() const { return nodes_.empty() ? empty_ : nodes_.front().box; }

 private:
  struct Node {
    Aabb box;
    int left = -1;   // child index or -1 for leaves
    int right = -1;
    int begin = 0;   // leaf range into order_
    int end = 0;
  };
  int build(int begin, int end, int depth);

  std::vector<Vec3> vertices_;
  std::vector<Face> faces_;
  std::vector<int> order_;
  std::vector<Aabb> face_boxes_;
  std::vector<Node> nodes_;
  Aabb empty_;
};

// Exhaustive scan over all faces; the reference the BVH must reproduce exactly.
SurfaceHit closest_point_brute_force(std::span<const Vec3> vertices, std::span<const Face> faces, const Vec3& p);

// Möller–Trumbore; returns t or a negative value on miss.
double intersect_triangle(const Vec3& origin, const Vec3& dir, const Vec3& a, const Vec3& b, const Vec3& c);

}  // namespace skinrf

namespace skinrf {

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<Face> faces;

  bool empty() const { return faces.empty(); }
  double surface_area() const;
  // Positive when faces are oriented outward.
  double signed_volume() const;
  // V - E + F over the welded vertex indices.
  int euler_characteristic() const;
  // Every undirected edge is shared by exactly two faces with opposite orientation.
  bool is_closed_manifold() const;
  Aabb bounds() const;
};

}  // namespace skinrf
