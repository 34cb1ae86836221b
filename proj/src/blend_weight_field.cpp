#include "skinrf/blend_weight_field.hpp"

#include <Eigen/LU>
#include <cmath>
#include <string>

#include "skinrf/error.hpp"

namespace skinrf {

DeformationContext DeformationContext::make(const BodyModel& body, const Pose& pose, LatentRef latent, int appearance,
                                            double padding) {
  DeformationContext ctx;
  ctx.body = std::make_shared<PosedBody>(body.mesh, forward_kinematics(body.skeleton, pose));
  ctx.pose = pose;
  ctx.latent = latent;
  ctx.appearance = appearance;
  ctx.bounds = ctx.body->bounds(padding);
  if (padding < 0.0) throw StructuralError("bounds padding must be non-negative");
  return ctx;
}

DeformationContext DeformationContext::canonical(const BodyModel& body, double padding) {
  return make(body, Pose::rest(body.skeleton.part_count()), LatentRef::canonical(), -1, padding);
}

ContextRows ContextRows::single(const DeformationContext& ctx, std::size_t count) {
  ContextRows r;
  r.contexts.push_back(&ctx);
  r.rows.assign(count, 0);
  return r;
}

namespace {

// Affine part of Sigma_k w_k G_k. Returns false when it is too ill-conditioned to invert.
template <typename Row>
bool blend_affine(const Row& w, const PartTransforms& parts, Mat3& a, Vec3& t, Mat3& a_inv) {
  if (w.size() != parts.size()) {
    throw StructuralError("blend weights have " + std::to_string(w.size()) + " entries for " +
                          std::to_string(parts.size()) + " parts");
  }
  a.setZero();
  t.setZero();
  for (int k = 0; k < parts.size(); ++k) {
    a += w[k] * parts[k].rotation;
    t += w[k] * parts[k].translation;
  }
  const double det = a.determinant();
  if (!std::isfinite(det) || det == 0.0) return false;
  a_inv = a.inverse();
  // Frobenius condition estimate of the full homogeneous matrix and its inverse.
  const Vec3 inv_t = -a_inv * t;
  const double norm = std::sqrt(a.squaredNorm() + t.squaredNorm() + 1.0);
  const double inv_norm = std::sqrt(a_inv.squaredNorm() + inv_t.squaredNorm() + 1.0);
  const double cond = norm * inv_norm;
  return std::isfinite(cond) && cond <= kMaxBlendCondition;
}

}  // namespace

Mat4 blend_transform(const BlendWeights& w, const PartTransforms& parts) {
  if (w.size() != parts.size()) throw StructuralError("blend_transform: weight and part counts differ");
  Mat4 m = Mat4::Zero();
  for (int k = 0; k < parts.size(); ++k) m += w[k] * parts[k].matrix();
  m.row(3) << 0.0, 0.0, 0.0, 1.0;
  return m;
}

Vec3 deform_from_canonical(const BlendWeights& w, const PartTransforms& parts, const Vec3& x_canonical) {
  if (w.size() != parts.size()) throw StructuralError("deform_from_canonical: weight and part counts differ");
  Vec3 shift = Vec3::Zero();
  for (int k = 0; k < parts.size(); ++k) shift += w[k] * (parts[k].apply(x_canonical) - x_canonical);
  // Equal to the weighted sum for simplex weights; identity transforms stay bit-exact.
  return x_canonical + shift;
}

Vec3 inverse_blend(const BlendWeights& w, const PartTransforms& parts, const Vec3& x) {
  Mat3 a, a_inv;
  Vec3 t;
  if (!blend_affine(w, parts, a, t, a_inv)) {
    throw DegenerateDeformationError("blended skinning transform is singular or ill-conditioned");
  }
  return a_inv * (x - t);
}

ad::Var base_weights(ad::Tape& tape, ad::Var x, const ContextRows& ctx) {
  const ad::Matrix& xv = x.value();
  if (xv.cols() != 3 || static_cast<std::size_t>(xv.rows()) != ctx.rows.size()) {
    throw UsageError("base_weights: expected N x 3 points with one context row each");
  }
  const Eigen::Index n = xv.rows();
  const int k = ctx.at(0).parts().size();
  const bool need_jacobian = tape.needs(x);
  ad::Matrix out(n, k);
  ad::Matrix jac;  // N x 3K, column block c holds d w / d x_c
  if (need_jacobian) jac.resize(n, 3 * k);
  for (Eigen::Index r = 0; r < n; ++r) {
    const PosedBody& body = *ctx.at(static_cast<std::size_t>(r)).body;
    const PosedBody::Sample s = body.base_weights(xv.row(r).transpose(), need_jacobian);
    if (s.weights.size() != k) throw StructuralError("base_weights: contexts disagree on part count");
    out.row(r) = s.weights.transpose();
    if (need_jacobian) {
      for (int c = 0; c < 3; ++c) jac.block(r, c * k, 1, k) = s.jacobian.col(c).transpose();
    }
    if (tape.tracking_branches()) {
      tape.mix_signature(static_cast<std::uint64_t>(s.face) * 8u + static_cast<std::uint64_t>(s.region));
    }
  }
  return tape.custom(std::move(out), {x},
                     [x, jac = std::move(jac), k](ad::Tape& t, const ad::Matrix& g) {
                       ad::Matrix gx(g.rows(), 3);
                       for (int c = 0; c < 3; ++c) {
                         gx.col(c) = g.cwiseProduct(jac.middleCols(c * k, k)).rowwise().sum();
                       }
                       t.accumulate(x, gx);
                     },
                     "base_weights");
}

ad::Var normalize_rows(ad::Var u) {
  const ad::Matrix s = u.value().rowwise().sum();
  ad::Matrix out = (u.value().array().colwise() / s.col(0).array()).matrix();
  const int id = static_cast<int>(u.tape->size());
  return u.tape->custom(std::move(out), {u},
                        [u, s, id](ad::Tape& t, const ad::Matrix& g) {
                          const ad::Matrix& w = t.value(ad::Var{&t, id});
                          const Eigen::VectorXd dot = g.cwiseProduct(w).rowwise().sum();
                          ad::Matrix gu = g;
                          gu.colwise() -= dot;
                          gu.array().colwise() /= s.col(0).array();
                          t.accumulate(u, gu);
                        },
                        "normalize_rows");
}

ad::Var field_weights(ModelGraph& graph, ad::Var x, const ContextRows& ctx) {
  const LatentKind kind = ctx.contexts.at(0)->latent.kind;
  std::vector<int> latent_rows(ctx.rows.size());
  for (std::size_t r = 0; r < ctx.rows.size(); ++r) {
    const DeformationContext& c = ctx.at(r);
    if (c.latent.kind != kind) throw UsageError("field_weights: a batch must use a single latent kind");
    latent_rows[r] = c.latent.index;
  }
  const ad::Var base = base_weights(graph.tape(), x, ctx);
  const ad::Var res = graph.residual(x, kind, latent_rows);
  return normalize_rows(base + res);
}

ad::Var inverse_blend(ad::Var w, ad::Var x, const ContextRows& ctx, std::vector<unsigned char>& valid) {
  ad::Tape& tape = *x.tape;
  const ad::Matrix& wv = w.value();
  const ad::Matrix& xv = x.value();
  const Eigen::Index n = xv.rows();
  if (wv.rows() != n || xv.cols() != 3 || static_cast<std::size_t>(n) != ctx.rows.size()) {
    throw UsageError("inverse_blend: batch shapes disagree");
  }
  valid.assign(static_cast<std::size_t>(n), 0);
  ad::Matrix out(n, 3);
  ad::Matrix inv(n, 9);
  for (Eigen::Index r = 0; r < n; ++r) {
    Mat3 a, a_inv;
    Vec3 t;
    const bool ok = blend_affine(wv.row(r), ctx.at(static_cast<std::size_t>(r)).parts(), a, t, a_inv);
    valid[static_cast<std::size_t>(r)] = ok ? 1 : 0;
    if (ok) {
      out.row(r) = (a_inv * (xv.row(r).transpose() - t)).transpose();
      inv.row(r) = Eigen::Map<const Eigen::RowVectorXd>(a_inv.data(), 9);
    } else {
      out.row(r) = xv.row(r);
      inv.row(r).setZero();
    }
  }
  if (tape.tracking_branches()) {
    for (const unsigned char v : valid) tape.mix_signature(v);
  }
  const int id = static_cast<int>(tape.size());
  return tape.custom(
      std::move(out), {w, x},
      [w, x, id, inv = std::move(inv), contexts = ctx.contexts, rows = ctx.rows](ad::Tape& t, const ad::Matrix& g) {
        const ad::Matrix& xc = t.value(ad::Var{&t, id});
        const Eigen::Index n2 = g.rows();
        const Eigen::Index k = t.value(w).cols();
        ad::Matrix gx(n2, 3);
        ad::Matrix gw(n2, k);
        for (Eigen::Index r = 0; r < n2; ++r) {
          const Eigen::RowVectorXd flat = inv.row(r);
          const Eigen::Map<const Mat3> a_inv(flat.data());
          const Vec3 u = a_inv.transpose() * g.row(r).transpose();
          gx.row(r) = u.transpose();
          const PartTransforms& parts = contexts[static_cast<std::size_t>(rows[static_cast<std::size_t>(r)])]->parts();
          const Vec3 p = xc.row(r).transpose();
          for (Eigen::Index j = 0; j < k; ++j) gw(r, j) = -u.dot(parts[static_cast<int>(j)].apply(p));
        }
        t.accumulate(w, gw);
        t.accumulate(x, gx);
      },
      "inverse_blend");
}

CanonicalPoints deform_to_canonical(ModelGraph& graph, ad::Var x, const ContextRows& ctx) {
  CanonicalPoints out;
  if (!graph.model().config().deformation) {
    out.x = x;
    out.valid.assign(ctx.rows.size(), 1);
    return out;
  }
  const ad::Var w = field_weights(graph, x, ctx);
  out.x = inverse_blend(w, x, ctx, out.valid);
  return out;
}

BlendWeights field_weights(const Model& model, const DeformationContext& ctx, const Vec3& x) {
  ad::Tape tape(false);
  ModelGraph graph(tape, model);
  const ad::Var xv = tape.constant(x.transpose());
  const ContextRows rows = ContextRows::single(ctx, 1);
  return field_weights(graph, xv, rows).value().row(0).transpose();
}

Vec3 deform_to_canonical(const Model& model, const DeformationContext& ctx, const Vec3& x) {
  ad::Tape tape(false);
  ModelGraph graph(tape, model);
  const ad::Var xv = tape.constant(x.transpose());
  const ContextRows rows = ContextRows::single(ctx, 1);
  const CanonicalPoints c = deform_to_canonical(graph, xv, rows);
  if (!c.valid[0]) throw DegenerateDeformationError("blended skinning transform is singular or ill-conditioned");
  return c.x.value().row(0).transpose();
}

}  // namespace skinrf
