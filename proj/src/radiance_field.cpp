#include "skinrf/radiance_field.hpp"

#include <cmath>

#include "skinrf/error.hpp"

namespace skinrf {

DensitySample query_density(const Model& model, const Vec3& x_canonical) {
  ad::Tape tape(false);
  ModelGraph graph(tape, model);
  const ModelGraph::Density d = graph.density(tape.constant(x_canonical.transpose()));
  return {d.sigma.scalar(), d.feature.value().row(0).transpose()};
}

Vec3 query_color(const Model& model, const Eigen::VectorXd& feature, const Vec3& d, int code_index) {
  if (std::abs(d.norm() - 1.0) > 1e-6) throw UsageError("query_color: view direction must be a unit vector");
  ad::Tape tape(false);
  ModelGraph graph(tape, model);
  const ad::Var rgb = graph.color(tape.constant(feature.transpose()), tape.constant(d.transpose()), {code_index});
  return rgb.value().row(0).transpose();
}

RadianceSample query_deformed(const Model& model, const DeformationContext& ctx, const Vec3& x, const Vec3& d) {
  if (!ctx.bounds.contains(x)) return {};
  ad::Tape tape(false);
  ModelGraph graph(tape, model);
  const ContextRows rows = ContextRows::single(ctx, 1);
  const CanonicalPoints c = deform_to_canonical(graph, tape.constant(x.transpose()), rows);
  if (!c.valid[0]) throw DegenerateDeformationError("blended skinning transform is singular or ill-conditioned");
  const ModelGraph::Density dens = graph.density(c.x);
  const ad::Var rgb = graph.color(dens.feature, tape.constant(d.transpose()), {ctx.appearance});
  return {dens.sigma.scalar(), rgb.value().row(0).transpose()};
}

FieldSamples query_deformed(ModelGraph& graph, ad::Var x, ad::Var dirs, const ContextRows& ctx) {
  ad::Tape& tape = graph.tape();
  const Eigen::Index n = x.rows();
  const CanonicalPoints c = deform_to_canonical(graph, x, ctx);
  Eigen::VectorXd keep(n);
  std::vector<int> appearance(static_cast<std::size_t>(n));
  bool all_kept = true;
  for (Eigen::Index r = 0; r < n; ++r) {
    const DeformationContext& rc = ctx.at(static_cast<std::size_t>(r));
    const bool inside = rc.bounds.contains(x.value().row(r).transpose());
    keep[r] = inside && c.valid[static_cast<std::size_t>(r)] ? 1.0 : 0.0;
    all_kept = all_kept && keep[r] == 1.0;
    appearance[static_cast<std::size_t>(r)] = rc.appearance;
  }
  const ModelGraph::Density dens = graph.density(c.x);
  FieldSamples out;
  out.sigma = all_kept ? dens.sigma : ad::mul_col(dens.sigma, tape.constant(keep));
  out.rgb = graph.color(dens.feature, dirs, appearance);
  return out;
}

}  // namespace skinrf
