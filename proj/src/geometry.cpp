#include "skinrf/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "skinrf/error.hpp"

namespace skinrf {
namespace {

double safe_ratio(double num, double den) { return den != 0.0 ? num / den : 0.0; }

}  // namespace

TrianglePoint closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  auto finish = [&](const Vec3& bary, TriangleRegion region) {
    const Vec3 q = bary.x() * a + bary.y() * b + bary.z() * c;
    return TrianglePoint{q, bary, (p - q).squaredNorm(), region};
  };
  const Vec3 ab = b - a;
  const Vec3 ac = c - a;
  const Vec3 ap = p - a;
  const double d1 = ab.dot(ap);
  const double d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return finish({1, 0, 0}, TriangleRegion::kVertexA);

  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp);
  const double d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return finish({0, 1, 0}, TriangleRegion::kVertexB);

  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
    const double v = safe_ratio(d1, d1 - d3);
    return finish({1 - v, v, 0}, TriangleRegion::kEdgeAB);
  }

  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp);
  const double d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return finish({0, 0, 1}, TriangleRegion::kVertexC);

  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
    const double w = safe_ratio(d2, d2 - d6);
    return finish({1 - w, 0, w}, TriangleRegion::kEdgeAC);
  }

  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    const double w = safe_ratio(d4 - d3, (d4 - d3) + (d5 - d6));
    return finish({0, 1 - w, w}, TriangleRegion::kEdgeBC);
  }

  const double denom = va + vb + vc;
  const double v = safe_ratio(vb, denom);
  const double w = safe_ratio(vc, denom);
  return finish({1 - v - w, v, w}, TriangleRegion::kFace);
}

Eigen::Matrix3d barycentric_jacobian(const TrianglePoint& tp, const Vec3& a, const Vec3& b, const Vec3& c) {
  Eigen::Matrix3d j = Eigen::Matrix3d::Zero();
  auto edge = [&](const Vec3& from, const Vec3& to, int i_from, int i_to) {
    const Vec3 e = to - from;
    const double len2 = e.squaredNorm();
    if (len2 == 0.0) return;
    const Eigen::RowVector3d dt = e.transpose() / len2;
    j.row(i_from) = -dt;
    j.row(i_to) = dt;
  };
  switch (tp.region) {
    case TriangleRegion::kVertexA:
    case TriangleRegion::kVertexB:
    case TriangleRegion::kVertexC:
      break;
    case TriangleRegion::kEdgeAB:
      edge(a, b, 0, 1);
      break;
    case TriangleRegion::kEdgeAC:
      edge(a, c, 0, 2);
      break;
    case TriangleRegion::kEdgeBC:
      edge(b, c, 1, 2);
      break;
    case TriangleRegion::kFace: {
      const Vec3 ab = b - a;
      const Vec3 ac = c - a;
      Eigen::Matrix2d gram;
      gram << ab.dot(ab), ab.dot(ac), ab.dot(ac), ac.dot(ac);
      if (std::abs(gram.determinant()) == 0.0) break;
      Eigen::Matrix<double, 2, 3> e;
      e.row(0) = ab.transpose();
      e.row(1) = ac.transpose();
      const Eigen::Matrix<double, 2, 3> dvw = gram.inverse() * e;
      j.row(1) = dvw.row(0);
      j.row(2) = dvw.row(1);
      j.row(0) = -(dvw.row(0) + dvw.row(1));
      break;
    }
  }
  return j;
}

SurfaceHit closest_point_brute_force(std::span<const Vec3> vertices, std::span<const Face> faces, const Vec3& p) {
  if (faces.empty()) throw StructuralError("closest point query on an empty mesh");
  SurfaceHit best;
  best.closest.squared_distance = std::numeric_limits<double>::infinity();
  for (std::size_t f = 0; f < faces.size(); ++f) {
    const Face& tri = faces[f];
    const TrianglePoint tp = closest_point_on_triangle(p, vertices[static_cast<std::size_t>(tri[0])],
                                                       vertices[static_cast<std::size_t>(tri[1])],
                                                       vertices[static_cast<std::size_t>(tri[2])]);
    if (tp.squared_distance < best.closest.squared_distance) {
      best.face = static_cast<int>(f);
      best.closest = tp;
    }
  }
  return best;
}

double intersect_triangle(const Vec3& origin, const Vec3& dir, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 e1 = b - a;
  const Vec3 e2 = c - a;
  const Vec3 pvec = dir.cross(e2);
  const double det = e1.dot(pvec);
  if (std::abs(det) < 1e-300) return -1.0;
  const double inv = 1.0 / det;
  const Vec3 tvec = origin - a;
  const double u = tvec.dot(pvec) * inv;
  if (u < 0.0 || u > 1.0) return -1.0;
  const Vec3 qvec = tvec.cross(e1);
  const double v = dir.dot(qvec) * inv;
  if (v < 0.0 || u + v > 1.0) return -1.0;
  return e2.dot(qvec) * inv;
}

TriangleBvh::TriangleBvh(std::vector<Vec3> vertices, std::vector<Face> faces)
    : vertices_(std::move(vertices)), faces_(std::move(faces)) {
  const int nv = static_cast<int>(vertices_.size());
  face_boxes_.reserve(faces_.size());
  for (const Face& f : faces_) {
    Aabb box;
    for (const int v : f) {
      if (v < 0 || v >= nv) throw StructuralError("face references vertex " + std::to_string(v) + " out of range");
      box.expand(vertices_[static_cast<std::size_t>(v)]);
    }
    face_boxes_.push_back(box);
  }
  order_.resize(faces_.size());
  std::iota(order_.begin(), order_.end(), 0);
  if (!faces_.empty()) {
    nodes_.reserve(2 * faces_.size());
    build(0, static_cast<int>(faces_.size()), 0);
  }
}

int TriangleBvh::build(int begin, int end, int depth) {
  const int index = static_cast<int>(nodes_.size());
  nodes_.push_back({});
  Aabb box;
  Aabb centroids;
  for (int i = begin; i < end; ++i) {
    const Aabb& fb = face_boxes_[static_cast<std::size_t>(order_[static_cast<std::size_t>(i)])];
    box.expand(fb);
    centroids.expand(fb.center());
  }
  nodes_[static_cast<std::size_t>(index)].box = box;
  constexpr int kLeafSize = 4;
  if (end - begin <= kLeafSize || depth > 48) {
    nodes_[static_cast<std::size_t>(index)].begin = begin;
    nodes_[static_cast<std::size_t>(index)].end = end;
    return index;
  }
  int axis = 0;
  centroids.extent().maxCoeff(&axis);
  const int mid = (begin + end) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end, [&](int x, int y) {
    const double cx = face_boxes_[static_cast<std::size_t>(x)].center()[axis];
    const double cy = face_boxes_[static_cast<std::size_t>(y)].center()[axis];
    return cx < cy || (cx == cy && x < y);
  });
  const int left = build(begin, mid, depth + 1);
  const int right = build(mid, end, depth + 1);
  nodes_[static_cast<std::size_t>(index)].left = left;
  nodes_[static_cast<std::size_t>(index)].right = right;
  return index;
}

SurfaceHit TriangleBvh::closest_point(const Vec3& p) const {
  if (faces_.empty()) throw StructuralError("closest point query on an empty mesh");
  SurfaceHit best;
  best.closest.squared_distance = std::numeric_limits<double>::infinity();
  int stack[128];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const Node& node = nodes_[static_cast<std::size_t>(stack[--top])];
    // Equal distances are not pruned so that the lowest face index can still win a tie.
    if (node.box.squared_distance(p) > best.closest.squared_distance) continue;
    if (node.left < 0) {
      for (int i = node.begin; i < node.end; ++i) {
        const int f = order_[static_cast<std::size_t>(i)];
        const Face& tri = faces_[static_cast<std::size_t>(f)];
        const TrianglePoint tp = closest_point_on_triangle(p, vertices_[static_cast<std::size_t>(tri[0])],
                                                           vertices_[static_cast<std::size_t>(tri[1])],
                                                           vertices_[static_cast<std::size_t>(tri[2])]);
        if (tp.squared_distance < best.closest.squared_distance ||
            (tp.squared_distance == best.closest.squared_distance && f < best.face)) {
          best.face = f;
          best.closest = tp;
        }
      }
      continue;
    }
    const Node& l = nodes_[static_cast<std::size_t>(node.left)];
    const Node& r = nodes_[static_cast<std::size_t>(node.right)];
    const double dl = l.box.squared_distance(p);
    const double dr = r.box.squared_distance(p);
    // Push the farther child first so the nearer one is visited next.
    if (dl <= dr) {
      stack[top++] = node.right;
      stack[top++] = node.left;
    } else {
      stack[top++] = node.left;
      stack[top++] = node.right;
    }
  }
  return best;
}

std::vector<RayHit> TriangleBvh::intersect_all(const Vec3& origin, const Vec3& dir, double t_min) const {
  std::vector<RayHit> hits;
  if (faces_.empty()) return hits;
  const Vec3 inv = dir.cwiseInverse();
  auto slab = [&](const Aabb& b) {
    double t0 = t_min;
    double t1 = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
      double lo = (b.min[a] - origin[a]) * inv[a];
      double hi = (b.max[a] - origin[a]) * inv[a];
      if (std::isnan(lo) || std::isnan(hi)) {
        if (origin[a] < b.min[a] || origin[a] > b.max[a]) return false;
        continue;
      }
      if (lo > hi) std::swap(lo, hi);
      t0 = std::max(t0, lo);
      t1 = std::min(t1, hi);
    }
    return t0 <= t1;
  };
  int stack[128];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const Node& node = nodes_[static_cast<std::size_t>(stack[--top])];
    if (!slab(node.box)) continue;
    if (node.left < 0) {
      for (int i = node.begin; i < node.end; ++i) {
        const int f = order_[static_cast<std::size_t>(i)];
        const Face& tri = faces_[static_cast<std::size_t>(f)];
        const double t = intersect_triangle(origin, dir, vertices_[static_cast<std::size_t>(tri[0])],
                                            vertices_[static_cast<std::size_t>(tri[1])],
                                            vertices_[static_cast<std::size_t>(tri[2])]);
        if (t > t_min) hits.push_back({t, f});
      }
      continue;
    }
    stack[top++] = node.left;
    stack[top++] = node.right;
  }
  std::sort(hits.begin(), hits.end(), [](const RayHit& x, const RayHit& y) {
    return x.t < y.t || (x.t == y.t && x.face < y.face);
  });
  return hits;
}

}  // namespace skinrf

#include <map>

namespace skinrf {

double TriangleMesh::surface_area() const {
  double area = 0.0;
  for (const Face& f : faces) {
    const Vec3& a = vertices[static_cast<std::size_t>(f[0])];
    const Vec3& b = vertices[static_cast<std::size_t>(f[1])];
    const Vec3& c = vertices[static_cast<std::size_t>(f[2])];
    area += 0.5 * (b - a).cross(c - a).norm();
  }
  return area;
}

double TriangleMesh::signed_volume() const {
  double vol = 0.0;
  for (const Face& f : faces) {
    const Vec3& a = vertices[static_cast<std::size_t>(f[0])];
    const Vec3& b = vertices[static_cast<std::size_t>(f[1])];
    const Vec3& c = vertices[static_cast<std::size_t>(f[2])];
    vol += a.dot(b.cross(c)) / 6.0;
  }
  return vol;
}

namespace {

std::map<std::pair<int, int>, std::pair<int, int>> edge_usage(const std::vector<Face>& faces) {
  // (min,max) -> (count of min->max, count of max->min)
  std::map<std::pair<int, int>, std::pair<int, int>> edges;
  for (const Face& f : faces) {
    for (int i = 0; i < 3; ++i) {
      const int a = f[static_cast<std::size_t>(i)];
      const int b = f[static_cast<std::size_t>((i + 1) % 3)];
      auto& e = edges[{std::min(a, b), std::max(a, b)}];
      (a < b ? e.first : e.second) += 1;
    }
  }
  return edges;
}

}  // namespace

int TriangleMesh::euler_characteristic() const {
  std::vector<char> used(vertices.size(), 0);
  for (const Face& f : faces) {
    for (const int v : f) used[static_cast<std::size_t>(v)] = 1;
  }
  const int v = static_cast<int>(std::count(used.begin(), used.end(), 1));
  const int e = static_cast<int>(edge_usage(faces).size());
  return v - e + static_cast<int>(faces.size());
}

bool TriangleMesh::is_closed_manifold() const {
  if (faces.empty()) return false;
  for (const auto& [key, use] : edge_usage(faces)) {
    if (use.first != 1 || use.second != 1) return false;
  }
  return true;
}

Aabb TriangleMesh::bounds() const {
  Aabb box;
  for (const Vec3& v : vertices) box.expand(v);
  return box;
}

}  // namespace skinrf
