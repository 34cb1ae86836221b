#include "skinrf/marching_cubes.hpp"

#include <algorithm>
#include <string>
#include <unordered_map>

#include "skinrf/error.hpp"

namespace skinrf {
namespace {

Vec3 corner_offset(int c) { return {double(c & 1), double((c >> 1) & 1), double((c >> 2) & 1)}; }

struct CubeTopology {
  std::array<std::array<int, 2>, 12> edges{};  // corner pairs, first corner has the axis bit clear
  std::array<int, 12> edge_axis{};
  std::vector<std::vector<std::array<int, 3>>> cases;  // 256 configurations

  int edge_between(int a, int b) const {
    for (int e = 0; e < 12; ++e) {
      const auto& ed = edges[static_cast<std::size_t>(e)];
      if ((ed[0] == a && ed[1] == b) || (ed[0] == b && ed[1] == a)) return e;
    }
    return -1;
  }

  // Both lattice edges lie on a common cube face.
  bool share_face(int e1, int e2) const {
    const auto& a = edges[static_cast<std::size_t>(e1)];
    const auto& b = edges[static_cast<std::size_t>(e2)];
    for (int axis = 0; axis < 3; ++axis) {
      if (axis == edge_axis[static_cast<std::size_t>(e1)] || axis == edge_axis[static_cast<std::size_t>(e2)]) continue;
      if (((a[0] >> axis) & 1) == ((b[0] >> axis) & 1)) return true;
    }
    return false;
  }

  CubeTopology() {
    int n = 0;
    for (int axis = 0; axis < 3; ++axis) {
      for (int c = 0; c < 8; ++c) {
        if (c & (1 << axis)) continue;
        edges[static_cast<std::size_t>(n)] = {c, c | (1 << axis)};
        edge_axis[static_cast<std::size_t>(n)] = axis;
        ++n;
      }
    }
    cases.resize(256);
    for (int config = 0; config < 256; ++config) cases[static_cast<std::size_t>(config)] = triangulate(config);
  }

  std::vector<std::array<int, 3>> triangulate(int config) const {
    auto inside = [config](int c) { return ((config >> c) & 1) != 0; };
    auto midpoint = [this](int e) -> Vec3 {
      const auto& ed = edges[static_cast<std::size_t>(e)];
      return 0.5 * (corner_offset(ed[0]) + corner_offset(ed[1]));
    };
    std::array<int, 12> next;
    next.fill(-1);
    auto add_segment = [&](int e1, int e2, int inside_corner, const Vec3& normal) {
      const Vec3 p = midpoint(e1);
      const Vec3 q = midpoint(e2);
      const double side = (q - p).cross(corner_offset(inside_corner) - p).dot(normal);
      if (side > 0) {
        next[static_cast<std::size_t>(e1)] = e2;
      } else {
        next[static_cast<std::size_t>(e2)] = e1;
      }
    };
    for (int axis = 0; axis < 3; ++axis) {
      const int u = (axis + 1) % 3;
      const int v = (axis + 2) % 3;
      for (int s = 0; s < 2; ++s) {
        const int base = s << axis;
        const std::array<int, 4> cyc{base, base | (1 << u), base | (1 << u) | (1 << v), base | (1 << v)};
        Vec3 normal = Vec3::Zero();
        normal[axis] = s ? 1.0 : -1.0;
        std::vector<int> crossing;
        int any_inside = -1;
        for (int i = 0; i < 4; ++i) {
          const int a = cyc[static_cast<std::size_t>(i)];
          const int b = cyc[static_cast<std::size_t>((i + 1) % 4)];
          if (inside(a)) any_inside = a;
          if (inside(a) != inside(b)) crossing.push_back(edge_between(a, b));
        }
        if (crossing.size() == 2) {
          add_segment(crossing[0], crossing[1], any_inside, normal);
        } else if (crossing.size() == 4) {
          // Saddle face: cut each inside corner off on its own.
          for (int i = 0; i < 4; ++i) {
            const int c = cyc[static_cast<std::size_t>(i)];
            if (!inside(c)) continue;
            const int prev = cyc[static_cast<std::size_t>((i + 3) % 4)];
            const int nxt = cyc[static_cast<std::size_t>((i + 1) % 4)];
            add_segment(edge_between(prev, c), edge_between(c, nxt), c, normal);
          }
        }
      }
    }
    std::vector<std::array<int, 3>> tris;
    std::array<bool, 12> visited{};
    for (int start = 0; start < 12; ++start) {
      if (next[static_cast<std::size_t>(start)] < 0 || visited[static_cast<std::size_t>(start)]) continue;
      std::vector<int> loop;
      for (int e = start; !visited[static_cast<std::size_t>(e)]; e = next[static_cast<std::size_t>(e)]) {
        visited[static_cast<std::size_t>(e)] = true;
        loop.push_back(e);
      }
      // Face-segment chaining winds inward; reverse for outward normals.
      std::reverse(loop.begin(), loop.end());
      // Fan from an apex whose diagonals all cross the cell interior. A diagonal lying in a
      // cube face could be emitted by the neighbouring cell too and break the manifold.
      const std::size_t n = loop.size();
      std::size_t apex = 0;
      for (; apex < n; ++apex) {
        bool interior = true;
        for (std::size_t i = 2; i + 1 < n && interior; ++i) {
          interior = !share_face(loop[apex], loop[(apex + i) % n]);
        }
        if (interior) break;
      }
      if (apex == n) apex = 0;  // not reached for any of the 256 configurations
      std::rotate(loop.begin(), loop.begin() + static_cast<std::ptrdiff_t>(apex), loop.end());
      for (std::size_t i = 1; i + 1 < n; ++i) tris.push_back({loop[0], loop[i], loop[i + 1]});
    }
    return tris;
  }
};

const CubeTopology& topology() {
  static const CubeTopology topo;
  return topo;
}

}  // namespace

void DensityGrid::validate() const {
  if (dims[0] < 2 || dims[1] < 2 || dims[2] < 2) throw StructuralError("density grid needs at least 2 corners per axis");
  if (!(spacing > 0.0)) throw StructuralError("density grid spacing must be positive");
  if (values.size() != corner_count()) {
    throw StructuralError("density grid holds " + std::to_string(values.size()) + " values, expected " +
                          std::to_string(corner_count()));
  }
}

const std::vector<std::array<int, 3>>& marching_cubes_case(int config) {
  return topology().cases.at(static_cast<std::size_t>(config));
}

TriangleMesh marching_cubes(const DensityGrid& grid, double iso) {
  grid.validate();
  const CubeTopology& topo = topology();
  TriangleMesh mesh;
  std::unordered_map<std::size_t, int> vertex_of_edge;
  for (int k = 0; k + 1 < grid.dims[2]; ++k) {
    for (int j = 0; j + 1 < grid.dims[1]; ++j) {
      for (int i = 0; i + 1 < grid.dims[0]; ++i) {
        int config = 0;
        for (int c = 0; c < 8; ++c) {
          if (grid.at(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1)) > iso) config |= 1 << c;
        }
        if (config == 0 || config == 255) continue;
        auto vertex = [&](int e) {
          const auto& ed = topo.edges[static_cast<std::size_t>(e)];
          const int i0 = i + (ed[0] & 1), j0 = j + ((ed[0] >> 1) & 1), k0 = k + ((ed[0] >> 2) & 1);
          const int i1 = i + (ed[1] & 1), j1 = j + ((ed[1] >> 1) & 1), k1 = k + ((ed[1] >> 2) & 1);
          const std::size_t key = grid.index(i0, j0, k0) * 3 + static_cast<std::size_t>(topo.edge_axis[static_cast<std::size_t>(e)]);
          const auto [it, fresh] = vertex_of_edge.try_emplace(key, static_cast<int>(mesh.vertices.size()));
          if (fresh) {
            const double v0 = grid.at(i0, j0, k0);
            const double v1 = grid.at(i1, j1, k1);
            const double t = (iso - v0) / (v1 - v0);
            const Vec3 p0 = grid.corner(i0, j0, k0);
            const Vec3 p1 = grid.corner(i1, j1, k1);
            mesh.vertices.push_back(p0 + t * (p1 - p0));
          }
          return it->second;
        };
        for (const auto& tri : topo.cases[static_cast<std::size_t>(config)]) {
          mesh.faces.push_back({vertex(tri[0]), vertex(tri[1]), vertex(tri[2])});
        }
      }
    }
  }
  return mesh;
}

}  // namespace skinrf
