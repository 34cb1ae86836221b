#pragma once

// Canonical radiance field queries: density and shape feature at canonical points, color
// from feature, view direction and appearance code, and the composition with the per-frame
// deformation.

#include <Eigen/Core>

#include "skinrf/autodiff.hpp"
#include "skinrf/blend_weight_field.hpp"
#include "skinrf/model.hpp"

namespace skinrf {

struct RadianceSample {
  double sigma = 0.0;
  Vec3 color = Vec3::Zero();
};

struct DensitySample {
  double sigma = 0.0;
  Eigen::VectorXd feature;
};

DensitySample query_density(const Model& model, const Vec3& x_canonical);
// Throws MissingLatentError for an unknown code index and UsageError for a non-unit d.
Vec3 query_color(const Model& model, const Eigen::VectorXd& feature, const Vec3& d, int code_index);
// Density and color at T_i(x), viewed along the observation-space direction d. Zero density
// outside the context's box; DegenerateDeformationError when T_i cannot be evaluated.
RadianceSample query_deformed(const Model& model, const DeformationContext& ctx, const Vec3& x, const Vec3& d);

struct FieldSamples {
  ad::Var sigma;  // N x 1; zero for rows outside their box or with a degenerate deformation
  ad::Var rgb;    // N x 3
};
// Batched query. Color uses each row's context appearance code.
FieldSamples query_deformed(ModelGraph& graph, ad::Var x, ad::Var dirs, const ContextRows& ctx);

}  // namespace skinrf
