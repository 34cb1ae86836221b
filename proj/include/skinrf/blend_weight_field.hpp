#pragma once

// Neural blend weight fields (base weights from the template plus a positive learned
// residual, renormalised) and the inverse-skinning deformation they induce.

#include <memory>
#include <vector>

#include "skinrf/autodiff.hpp"
#include "skinrf/body_template.hpp"
#include "skinrf/kinematics.hpp"
#include "skinrf/model.hpp"

namespace skinrf {

// Everything needed to deform points of one frame (or one novel pose, or the canonical
// space itself) into canonical space.
struct DeformationContext {
  std::shared_ptr<const PosedBody> body;  // template posed by `pose`; its parts are G_k
  Pose pose;
  LatentRef latent;
  int appearance = -1;  // frame whose appearance code colors samples; -1 when unused
  Aabb bounds;          // padded posed box; density is zero outside

  const PartTransforms& parts() const { return body->parts(); }

  static DeformationContext make(const BodyModel& body, const Pose& pose, LatentRef latent, int appearance = -1,
                                 double padding = kDefaultBoundsPadding);
  // Rest pose, identity transforms, canonical code.
  static DeformationContext canonical(const BodyModel& body, double padding = kDefaultBoundsPadding);
};

// Per-row context assignment for batched queries.
struct ContextRows {
  std::vector<const DeformationContext*> contexts;
  std::vector<int> rows;  // index into contexts, one per batch row

  static ContextRows single(const DeformationContext& ctx, std::size_t count);
  const DeformationContext& at(std::size_t row) const { return *contexts[static_cast<std::size_t>(rows[row])]; }
};

// Sigma_k w_k G_k as a homogeneous matrix (bottom row fixed to 0 0 0 1).
Mat4 blend_transform(const BlendWeights& w, const PartTransforms& parts);
// (Sigma_k w_k G_k) x.
Vec3 deform_from_canonical(const BlendWeights& w, const PartTransforms& parts, const Vec3& x_canonical);
// (Sigma_k w_k G_k)^-1 x. Throws DegenerateDeformationError when the blend is singular or its
// condition estimate exceeds kMaxBlendCondition.
Vec3 inverse_blend(const BlendWeights& w, const PartTransforms& parts, const Vec3& x);

inline constexpr double kMaxBlendCondition = 1e12;

// norm(exp(F_dw(x, psi)) + w_s(x)) for the context's pose and latent code.
BlendWeights field_weights(const Model& model, const DeformationContext& ctx, const Vec3& x);
inline BlendWeights observation_weights(const Model& model, const DeformationContext& ctx, const Vec3& x) {
  return field_weights(model, ctx, x);
}
// `canonical_ctx` must come from DeformationContext::canonical.
inline BlendWeights canonical_weights(const Model& model, const DeformationContext& canonical_ctx, const Vec3& x) {
  return field_weights(model, canonical_ctx, x);
}
// `novel_ctx` carries the novel pose and LatentRef::novel(i).
inline BlendWeights novel_pose_weights(const Model& model, const DeformationContext& novel_ctx, const Vec3& x) {
  return field_weights(model, novel_ctx, x);
}

// T_i(x): inverse skinning with the field weights queried at x.
Vec3 deform_to_canonical(const Model& model, const DeformationContext& ctx, const Vec3& x);

// Batched, differentiable versions. `x` is N x 3.
ad::Var base_weights(ad::Tape& tape, ad::Var x, const ContextRows& ctx);
ad::Var normalize_rows(ad::Var u);
ad::Var field_weights(ModelGraph& graph, ad::Var x, const ContextRows& ctx);

struct CanonicalPoints {
  ad::Var x;                         // N x 3
  std::vector<unsigned char> valid;  // 0 where the blend could not be inverted
};
// Invalid rows keep their input position and carry zero gradient.
ad::Var inverse_blend(ad::Var w, ad::Var x, const ContextRows& ctx, std::vector<unsigned char>& valid);
CanonicalPoints deform_to_canonical(ModelGraph& graph, ad::Var x, const ContextRows& ctx);

}  // namespace skinrf
