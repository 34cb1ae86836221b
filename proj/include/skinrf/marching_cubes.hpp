#pragma once

#include <array>
#include <vector>

#include "skinrf/geometry.hpp"

namespace skinrf {

// Scalar samples on a regular lattice of corners, x fastest.
struct DensityGrid {
  Vec3 origin = Vec3::Zero();
  double spacing = 0.005;
  std::array<int, 3> dims{2, 2, 2};
  std::vector<double> values;

  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(k) * static_cast<std::size_t>(dims[1]) + static_cast<std::size_t>(j)) *
               static_cast<std::size_t>(dims[0]) +
           static_cast<std::size_t>(i);
  }
  double at(int i, int j, int k) const { return values[index(i, j, k)]; }
  Vec3 corner(int i, int j, int k) const { return origin + spacing * Vec3(i, j, k); }
  std::size_t corner_count() const {
    return static_cast<std::size_t>(dims[0]) * static_cast<std::size_t>(dims[1]) * static_cast<std::size_t>(dims[2]);
  }
  // Throws StructuralError on dims < 2, spacing <= 0 or a size mismatch.
  void validate() const;
};

// Iso-surface of `grid` at `iso`. Corners strictly above iso count as inside; faces are
// oriented outward (towards lower values) and vertices on shared lattice edges are welded.
// Ambiguous lattice faces always separate the inside corners, so neighbouring cells agree
// and the surface is closed away from the grid boundary.
TriangleMesh marching_cubes(const DensityGrid& grid, double iso);

// The per-configuration triangle list, exposed for tests. Cell corner c sits at offset
// (c & 1, c >> 1 & 1, c >> 2 & 1) and bit c of `config` marks it inside. Edges are numbered
// by axis (x, y, z), then by the corner with that axis bit clear.
const std::vector<std::array<int, 3>>& marching_cubes_case(int config);

}  // namespace skinrf
