#include <doctest.h>

#include "generators.hpp"
#include "skinrf/body_template.hpp"
#include "skinrf/error.hpp"

using namespace skinrf;

namespace {

// Dense barycentric lattice over the triangle: an upper bound no exact closest point may beat.
double lattice_min_distance(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c, int n) {
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= n; ++i) {
    for (int j = 0; i + j <= n; ++j) {
      const double u = double(i) / n, v = double(j) / n;
      best = std::min(best, (p - ((1 - u - v) * a + u * b + v * c)).norm());
    }
  }
  return best;
}

}  // namespace

TEST_SUITE("body_template") {
  TEST_CASE("toy body is a valid closed template for every part count") {
    for (int k = 1; k <= 10; ++k) {
      const BodyModel body = make_toy_body({.part_count = k});
      CHECK_NOTHROW(body.mesh.validate());
      CHECK(body.mesh.part_count() == k);
      CHECK(body.skeleton.part_count() == k);
      const TriangleMesh m = body.mesh.triangle_mesh();
      CHECK(m.is_closed_manifold());
      CHECK(m.signed_volume() > 0.0);
    }
    CHECK_THROWS_AS(make_toy_body({.part_count = 0}), StructuralError);
    CHECK_THROWS_AS(make_toy_body({.part_count = 11}), StructuralError);
  }

  TEST_CASE("template validation rejects weights off the simplex") {
    BodyModel body = testgen::cube_body();
    body.mesh.vertex_weights(3, 0) = 0.9;
    CHECK_THROWS_AS(body.mesh.validate(), StructuralError);
    body = testgen::cube_body();
    body.mesh.faces[0][1] = 42;
    CHECK_THROWS_AS(body.mesh.validate(), StructuralError);
  }

  TEST_CASE("pose_mesh: rest pose is bit-exact and a one-part translation shifts everything") {
    const BodyModel body = make_toy_body({});
    const auto rest = pose_mesh(body.mesh, PartTransforms::identity(body.mesh.part_count()));
    for (std::size_t v = 0; v < rest.size(); ++v) CHECK((rest[v] - body.mesh.vertices[v]).norm() == 0.0);

    const BodyModel cube = testgen::cube_body();
    PartTransforms t;
    t.transforms = {Se3::from_translation(Vec3(0.25, -1.0, 2.0))};
    const auto moved = pose_mesh(cube.mesh, t);
    for (std::size_t v = 0; v < moved.size(); ++v) {
      CHECK((moved[v] - cube.mesh.vertices[v] - Vec3(0.25, -1.0, 2.0)).norm() < 1e-15);
    }
    CHECK_THROWS_AS(pose_mesh(body.mesh, PartTransforms::identity(2)), StructuralError);
  }

  TEST_CASE("pose_mesh matches the explicit weighted matrix blend") {
    const BodyModel body = make_toy_body({.part_count = 4});
    Pose p = Pose::rest(4);
    p.joint_rotations[2] = Vec3(0.0, 0.0, testgen::kPi / 2);
    p.joint_rotations[1] = Vec3(0.3, 0.0, 0.0);
    const PartTransforms g = forward_kinematics(body.skeleton, p);
    const auto posed = pose_mesh(body.mesh, g);
    for (std::size_t v = 0; v < posed.size(); ++v) {
      Mat4 blend = Mat4::Zero();
      for (int k = 0; k < 4; ++k) blend += body.mesh.vertex_weights(static_cast<Eigen::Index>(v), k) * g[k].matrix();
      const Vec3 oracle = (blend * body.mesh.vertices[v].homogeneous()).head<3>();
      CHECK((posed[v] - oracle).norm() < 1e-12);
    }
  }

  TEST_CASE("closest point on a triangle: known regions and a lattice bound") {
    const Vec3 a(0, 0, 0), b(1, 0, 0), c(0, 1, 0);
    TrianglePoint tp = closest_point_on_triangle(Vec3(0.2, 0.3, 0.7), a, b, c);
    CHECK(tp.region == TriangleRegion::kFace);
    CHECK((tp.point - Vec3(0.2, 0.3, 0.0)).norm() < 1e-15);
    CHECK(tp.squared_distance == doctest::Approx(0.49));
    tp = closest_point_on_triangle(Vec3(-1, -1, 0), a, b, c);
    CHECK(tp.region == TriangleRegion::kVertexA);
    tp = closest_point_on_triangle(Vec3(0.5, -2, 0.1), a, b, c);
    CHECK(tp.region == TriangleRegion::kEdgeAB);
    CHECK((tp.point - Vec3(0.5, 0, 0)).norm() < 1e-15);
    tp = closest_point_on_triangle(Vec3(1, 1, 0), a, b, c);
    CHECK(tp.region == TriangleRegion::kEdgeBC);

    testgen::Gen g(21);
    for (int i = 0; i < 300; ++i) {
      const Vec3 ta = g.vec3(1), tb = g.vec3(1), tc = g.vec3(1), p = g.vec3(2);
      const TrianglePoint q = closest_point_on_triangle(p, ta, tb, tc);
      CHECK(q.barycentric.minCoeff() >= -1e-12);
      CHECK(q.barycentric.sum() == doctest::Approx(1.0).epsilon(1e-12));
      CHECK((q.point - (q.barycentric[0] * ta + q.barycentric[1] * tb + q.barycentric[2] * tc)).norm() < 1e-12);
      CHECK(std::sqrt(q.squared_distance) <= lattice_min_distance(p, ta, tb, tc, 60) + 1e-12);
    }
  }

  TEST_CASE("barycentric jacobian matches finite differences inside a region") {
    testgen::Gen g(22);
    int checked = 0;
    for (int i = 0; i < 200; ++i) {
      const Vec3 a = g.vec3(1), b = g.vec3(1), c = g.vec3(1), p = g.vec3(1.5);
      const TrianglePoint tp = closest_point_on_triangle(p, a, b, c);
      const Eigen::Matrix3d j = barycentric_jacobian(tp, a, b, c);
      const double h = 1e-6;
      Eigen::Matrix3d fd;
      bool same_region = true;
      for (int d = 0; d < 3; ++d) {
        const TrianglePoint plus = closest_point_on_triangle(p + h * Vec3::Unit(d), a, b, c);
        const TrianglePoint minus = closest_point_on_triangle(p - h * Vec3::Unit(d), a, b, c);
        same_region = same_region && plus.region == tp.region && minus.region == tp.region;
        fd.col(d) = (plus.barycentric - minus.barycentric) / (2 * h);
      }
      if (!same_region) continue;
      ++checked;
      CHECK((j - fd).cwiseAbs().maxCoeff() < 1e-5 * std::max(1.0, j.cwiseAbs().maxCoeff()));
    }
    CHECK(checked > 150);
  }

  TEST_CASE("BVH closest point reproduces the exhaustive scan exactly") {
    const BodyModel body = make_toy_body({});
    const auto posed = pose_mesh(body.mesh, forward_kinematics(body.skeleton, testgen::Gen(3).pose(6, 1.0, 0.3)));
    const TriangleBvh bvh(posed, body.mesh.faces);
    testgen::Gen g(23);
    for (int i = 0; i < 1000; ++i) {
      const Vec3 x = g.vec3(1.2);
      const SurfaceHit fast = bvh.closest_point(x);
      const SurfaceHit slow = closest_point_brute_force(posed, body.mesh.faces, x);
      CHECK(fast.face == slow.face);
      CHECK(fast.closest.squared_distance == slow.closest.squared_distance);
    }
  }

  TEST_CASE("BVH ray intersections match a brute-force scan") {
    const BodyModel body = make_toy_body({});
    const TriangleBvh bvh(body.mesh.vertices, body.mesh.faces);
    testgen::Gen g(24);
    for (int i = 0; i < 200; ++i) {
      const Vec3 o = g.unit() * 2.0;
      const Vec3 d = (g.vec3(0.3) - o).normalized();
      std::vector<double> brute;
      for (const Face& f : body.mesh.faces) {
        const double t = intersect_triangle(o, d, body.mesh.vertices[static_cast<std::size_t>(f[0])],
                                            body.mesh.vertices[static_cast<std::size_t>(f[1])],
                                            body.mesh.vertices[static_cast<std::size_t>(f[2])]);
        if (t > 0.0) brute.push_back(t);
      }
      std::sort(brute.begin(), brute.end());
      const auto hits = bvh.intersect_all(o, d, 0.0);
      REQUIRE(hits.size() == brute.size());
      for (std::size_t h = 0; h < hits.size(); ++h) CHECK(hits[h].t == brute[h]);
      // A closed surface is crossed an even number of times from outside.
      CHECK(hits.size() % 2 == 0);
    }
  }

  TEST_CASE("base weights interpolate the closest facet and stay on the simplex") {
    const BodyModel body = make_toy_body({});
    const PartTransforms rest = PartTransforms::identity(6);
    // At a vertex the weights are that vertex's authored weights.
    for (std::size_t v = 0; v < body.mesh.vertices.size(); v += 97) {
      const BlendWeights w = base_weights(body.mesh, rest, body.mesh.vertices[v]);
      CHECK((w.transpose() - body.mesh.vertex_weights.row(static_cast<Eigen::Index>(v))).norm() < 1e-12);
    }
    testgen::Gen g(25);
    for (int i = 0; i < 200; ++i) {
      const BlendWeights w = canonical_base_weights(body.mesh, g.vec3(1.0));
      CHECK(w.minCoeff() >= 0.0);
      CHECK(std::abs(w.sum() - 1.0) < 1e-12);
    }
  }

  TEST_CASE("posed body queries agree with the free functions and carry a correct jacobian") {
    const BodyModel body = make_toy_body({});
    testgen::Gen g(26);
    const PartTransforms parts = forward_kinematics(body.skeleton, g.pose(6, 0.8, 0.2));
    const PosedBody posed(body.mesh, parts);
    int checked = 0;
    for (int i = 0; i < 200; ++i) {
      const Vec3 x = g.vec3(0.8);
      const PosedBody::Sample s = posed.base_weights(x, true);
      CHECK((s.weights - base_weights(body.mesh, parts, x)).norm() == 0.0);
      const double h = 1e-7;
      Eigen::MatrixXd fd(6, 3);
      bool same = true;
      for (int d = 0; d < 3; ++d) {
        const auto p = posed.base_weights(x + h * Vec3::Unit(d));
        const auto m = posed.base_weights(x - h * Vec3::Unit(d));
        same = same && p.face == s.face && m.face == s.face && p.region == s.region && m.region == s.region;
        fd.col(d) = (p.weights - m.weights) / (2 * h);
      }
      if (!same) continue;
      ++checked;
      CHECK((s.jacobian - fd).cwiseAbs().maxCoeff() < 1e-5 * std::max(1.0, s.jacobian.cwiseAbs().maxCoeff()));
    }
    CHECK(checked > 100);
  }

  TEST_CASE("posed bounds contain every posed vertex with the requested padding") {
    const BodyModel body = make_toy_body({});
    const PartTransforms parts = forward_kinematics(body.skeleton, testgen::Gen(4).pose(6, 1.0, 0.5));
    const Aabb tight = posed_bounds(body.mesh, parts, 0.0);
    const Aabb padded = posed_bounds(body.mesh, parts, 0.05);
    for (const Vec3& v : pose_mesh(body.mesh, parts)) CHECK(tight.contains(v));
    CHECK((padded.min - (tight.min - Vec3::Constant(0.05))).norm() < 1e-15);
    CHECK_THROWS_AS(posed_bounds(body.mesh, parts, -1.0), StructuralError);
  }
}
