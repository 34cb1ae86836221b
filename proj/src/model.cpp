#include "skinrf/model.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "skinrf/error.hpp"

namespace skinrf {

Eigen::VectorXd encode(const PositionalEncoding& pe, const Eigen::VectorXd& v) {
  const auto d = v.size();
  Eigen::VectorXd out(pe.output_dim(static_cast<int>(d)));
  Eigen::Index c = 0;
  if (pe.include_input) {
    out.head(d) = v;
    c = d;
  }
  for (int l = 0; l < pe.frequency_count; ++l) {
    const double f = std::ldexp(std::numbers::pi, l);
    for (Eigen::Index i = 0; i < d; ++i) out[c++] = std::sin(f * v[i]);
    for (Eigen::Index i = 0; i < d; ++i) out[c++] = std::cos(f * v[i]);
  }
  return out;
}

ad::Var encode(const PositionalEncoding& pe, ad::Var v) {
  const ad::Matrix& x = v.value();
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  ad::Matrix out(n, pe.output_dim(static_cast<int>(d)));
  Eigen::Index c = 0;
  if (pe.include_input) {
    out.leftCols(d) = x;
    c = d;
  }
  for (int l = 0; l < pe.frequency_count; ++l) {
    const double f = std::ldexp(std::numbers::pi, l);
    out.middleCols(c, d) = (f * x.array()).sin().matrix();
    out.middleCols(c + d, d) = (f * x.array()).cos().matrix();
    c += 2 * d;
  }
  return v.tape->custom(
      std::move(out), {v},
      [v, pe](ad::Tape& t, const ad::Matrix& g) {
        const ad::Matrix& xv = t.value(v);
        const Eigen::Index dd = xv.cols();
        ad::Matrix gx = ad::Matrix::Zero(xv.rows(), dd);
        Eigen::Index col = 0;
        if (pe.include_input) {
          gx += g.leftCols(dd);
          col = dd;
        }
        for (int l = 0; l < pe.frequency_count; ++l) {
          const double f = std::ldexp(std::numbers::pi, l);
          const auto fx = (f * xv.array()).eval();
          gx.array() += f * (g.middleCols(col, dd).array() * fx.cos() - g.middleCols(col + dd, dd).array() * fx.sin());
          col += 2 * dd;
        }
        t.accumulate(v, gx);
      },
      "positional_encoding");
}

void ModelConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v < 1) throw StructuralError(std::string("model config: ") + name + " must be positive");
  };
  positive(part_count, "part_count");
  positive(frame_count, "frame_count");
  positive(latent_dim, "latent_dim");
  positive(density_depth, "density_depth");
  positive(density_width, "density_width");
  positive(color_width, "color_width");
  positive(weight_depth, "weight_depth");
  positive(weight_width, "weight_width");
  if (position_frequencies < 0 || direction_frequencies < 0) throw StructuralError("model config: negative frequency count");
  if (skip_layer < 0) throw StructuralError("model config: negative skip layer");
}

namespace {

struct BlockSpec {
  std::string name;
  Eigen::Index rows, cols;
  enum Init { kLinear, kBias, kCode, kConstant } init;
  int fan_in;
  double value = 0.0;
};

void add_trunk(std::vector<BlockSpec>& specs, const std::string& prefix, int depth, int width, int in, int extra,
               int skip) {
  for (int i = 0; i < depth; ++i) {
    const std::string p = prefix + ".l" + std::to_string(i);
    const int layer_in = i == 0 ? in : width;
    const bool skip_here = i > 0 && i == skip + 1;
    const int fan = layer_in + (i == 0 ? extra : 0) + (skip_here ? in : 0);
    specs.push_back({p + ".w", width, layer_in, BlockSpec::kLinear, fan});
    if (i == 0 && extra > 0) specs.push_back({p + ".w_code", width, extra, BlockSpec::kLinear, fan});
    if (skip_here) specs.push_back({p + ".w_skip", width, in, BlockSpec::kLinear, fan});
    specs.push_back({p + ".b", 1, width, BlockSpec::kBias, fan});
  }
}

std::vector<BlockSpec> layout_for(const ModelConfig& c) {
  const int pos_dim = PositionalEncoding{c.position_frequencies, true}.output_dim(3);
  const int dir_dim = PositionalEncoding{c.direction_frequencies, true}.output_dim(3);
  std::vector<BlockSpec> s;
  add_trunk(s, "density", c.density_depth, c.density_width, pos_dim, 0, c.skip_layer);
  s.push_back({"density.sigma.w", 1, c.density_width, BlockSpec::kLinear, c.density_width});
  s.push_back({"density.sigma.b", 1, 1, BlockSpec::kBias, c.density_width});
  s.push_back({"density.feature.w", c.density_width, c.density_width, BlockSpec::kLinear, c.density_width});
  s.push_back({"density.feature.b", 1, c.density_width, BlockSpec::kBias, c.density_width});

  const int color_fan = c.density_width + dir_dim + c.latent_dim;
  s.push_back({"color.hidden.w", c.color_width, c.density_width, BlockSpec::kLinear, color_fan});
  s.push_back({"color.hidden.w_dir", c.color_width, dir_dim, BlockSpec::kLinear, color_fan});
  s.push_back({"color.hidden.w_code", c.color_width, c.latent_dim, BlockSpec::kLinear, color_fan});
  s.push_back({"color.hidden.b", 1, c.color_width, BlockSpec::kBias, color_fan});
  s.push_back({"color.out.w", 3, c.color_width, BlockSpec::kLinear, c.color_width});
  s.push_back({"color.out.b", 1, 3, BlockSpec::kBias, c.color_width});

  add_trunk(s, "weight", c.weight_depth, c.weight_width, pos_dim, c.latent_dim, c.skip_layer);
  s.push_back({"weight.out.w", c.part_count, c.weight_width, BlockSpec::kLinear, c.weight_width});
  s.push_back({"weight.out.b", 1, c.part_count, BlockSpec::kConstant, c.weight_width, c.residual_bias});

  s.push_back({"appearance_codes", c.frame_count, c.latent_dim, BlockSpec::kCode, 0});
  s.push_back({"weight_codes", c.frame_count, c.latent_dim, BlockSpec::kCode, 0});
  s.push_back({"canonical_code", 1, c.latent_dim, BlockSpec::kCode, 0});
  return s;
}

}  // namespace

Model::Model(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  for (const BlockSpec& b : layout_for(config_)) {
    const BlockId id = params_.add(b.name, b.rows, b.cols);
    switch (b.init) {
      case BlockSpec::kLinear:
      case BlockSpec::kBias:
        params_.fill_uniform(id, 1.0 / std::sqrt(static_cast<double>(b.fan_in)), rng);
        break;
      case BlockSpec::kCode:
        params_.fill_normal(id, config_.latent_init_stddev, rng);
        break;
      case BlockSpec::kConstant:
        params_.fill_constant(id, b.value);
        break;
    }
  }
}

Model::Model(const ModelConfig& config, ParamStore params) : config_(config), params_(std::move(params)) {
  config_.validate();
  params_.validate_layout();
  const std::vector<BlockSpec> specs = layout_for(config_);
  const auto& blocks = params_.blocks();
  const std::size_t extra = blocks.size() - std::min(blocks.size(), specs.size());
  if (blocks.size() < specs.size() || extra > 1) {
    throw StructuralError("parameter layout has " + std::to_string(blocks.size()) + " blocks, model expects " +
                          std::to_string(specs.size()));
  }
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (blocks[i].name != specs[i].name || blocks[i].rows != specs[i].rows || blocks[i].cols != specs[i].cols) {
      throw StructuralError("parameter block " + std::to_string(i) + " is '" + blocks[i].name + "' " +
                            std::to_string(blocks[i].rows) + "x" + std::to_string(blocks[i].cols) + ", expected '" +
                            specs[i].name + "' " + std::to_string(specs[i].rows) + "x" + std::to_string(specs[i].cols));
    }
  }
  if (extra == 1 && (blocks.back().name != "novel_codes" || blocks.back().cols != config_.latent_dim)) {
    throw StructuralError("unexpected trailing parameter block '" + blocks.back().name + "'");
  }
}

void Model::add_novel_codes(const std::vector<int>& init_from_frames) {
  if (params_.find("novel_codes")) throw UsageError("novel codes already exist in this model");
  if (init_from_frames.empty()) throw UsageError("add_novel_codes: no poses");
  const auto rows = static_cast<Eigen::Index>(init_from_frames.size());
  const BlockId id = params_.add("novel_codes", rows, config_.latent_dim);
  const BlockId codes = params_.require("weight_codes");
  for (Eigen::Index r = 0; r < rows; ++r) {
    const int src = init_from_frames[static_cast<std::size_t>(r)];
    if (src < 0 || src >= config_.frame_count) throw MissingLatentError("no weight code for frame " + std::to_string(src));
    const Eigen::RowVectorXd code = params_.matrix(codes).row(src);
    params_.matrix(id).row(r) = code;
  }
}

int Model::novel_count() const {
  const auto id = params_.find("novel_codes");
  return id ? static_cast<int>(params_.block(*id).rows) : 0;
}

int Model::latent_rows(LatentKind kind) const {
  switch (kind) {
    case LatentKind::kFrame: return config_.frame_count;
    case LatentKind::kCanonical: return 1;
    case LatentKind::kNovel: return novel_count();
  }
  return 0;
}

bool Model::is_weight_net_block(BlockId id) const { return params_.block(id).name.starts_with("weight."); }

void Model::freeze_for_stage2(bool train_weight_net) {
  params_.freeze_all();
  const BlockId novel = params_.require("novel_codes");
  params_.set_trainable(novel, true);
  if (train_weight_net) {
    for (BlockId id = 0; id < static_cast<BlockId>(params_.blocks().size()); ++id) {
      if (is_weight_net_block(id)) params_.set_trainable(id, true);
    }
  }
}

ModelGraph::ModelGraph(ad::Tape& tape, const Model& model)
    : tape_(tape), model_(model), bound_(model.params().blocks().size()) {}

ad::Var ModelGraph::param(std::string_view name) {
  const BlockId id = model_.params().require(name);
  auto& slot = bound_[static_cast<std::size_t>(id)];
  if (!slot) slot = tape_.parameter(model_.params(), id);
  return *slot;
}

ad::Var ModelGraph::trunk(const std::string& prefix, int depth, ad::Var encoded, std::optional<ad::Var> extra) {
  const int skip = model_.config().skip_layer;
  ad::Var h = encoded;
  for (int i = 0; i < depth; ++i) {
    const std::string p = prefix + ".l" + std::to_string(i);
    ad::Var pre = ad::linear(h, param(p + ".w"), param(p + ".b"));
    if (i == 0 && extra) pre = pre + *extra;
    if (i > 0 && i == skip + 1) pre = pre + ad::matmul_nt(encoded, param(p + ".w_skip"));
    h = ad::relu(pre);
  }
  return h;
}

ad::Var ModelGraph::projected_codes(const std::string& table, const std::string& weight) {
  const std::string key = table + "|" + weight;
  for (const auto& [k, v] : projected_) {
    if (k == key) return v;
  }
  const ad::Var p = ad::matmul_nt(param(table), param(weight));
  projected_.emplace_back(key, p);
  return p;
}

ModelGraph::Density ModelGraph::density(ad::Var x_canonical) {
  const ModelConfig& c = model_.config();
  const ad::Var enc = encode(model_.position_encoding(), x_canonical);
  const ad::Var h = trunk("density", c.density_depth, enc, std::nullopt);
  const ad::Var pre = ad::linear(h, param("density.sigma.w"), param("density.sigma.b"));
  Density d;
  d.sigma = c.density_activation == DensityActivation::kSoftplus ? ad::softplus(pre) : ad::relu(pre);
  d.feature = ad::linear(h, param("density.feature.w"), param("density.feature.b"));
  return d;
}

void ModelGraph::check_rows(LatentKind kind, const std::vector<int>& rows) const {
  const int available = model_.latent_rows(kind);
  for (const int r : rows) {
    if (r < 0 || r >= available) {
      const char* what = kind == LatentKind::kFrame ? "frame" : (kind == LatentKind::kNovel ? "novel pose" : "canonical");
      throw MissingLatentError(std::string("no latent code for ") + what + " " + std::to_string(r) + " (" +
                               std::to_string(available) + " available)");
    }
  }
}

ad::Var ModelGraph::color(ad::Var feature, ad::Var dirs, const std::vector<int>& appearance_rows) {
  if (static_cast<Eigen::Index>(appearance_rows.size()) != feature.rows()) {
    throw UsageError("color: one appearance row per sample is required");
  }
  check_rows(LatentKind::kFrame, appearance_rows);
  const ad::Var enc_d = encode(model_.direction_encoding(), dirs);
  const ad::Var codes = ad::gather_rows(projected_codes("appearance_codes", "color.hidden.w_code"), appearance_rows);
  ad::Var pre = ad::linear(feature, param("color.hidden.w"), param("color.hidden.b"));
  pre = pre + ad::matmul_nt(enc_d, param("color.hidden.w_dir")) + codes;
  return ad::sigmoid(ad::linear(ad::relu(pre), param("color.out.w"), param("color.out.b")));
}

ad::Var ModelGraph::residual(ad::Var x, LatentKind kind, const std::vector<int>& rows) {
  if (static_cast<Eigen::Index>(rows.size()) != x.rows()) throw UsageError("residual: one latent row per sample is required");
  check_rows(kind, rows);
  const char* table = kind == LatentKind::kFrame ? "weight_codes" : (kind == LatentKind::kNovel ? "novel_codes" : "canonical_code");
  const ad::Var codes = ad::gather_rows(projected_codes(table, "weight.l0.w_code"), rows);
  const ad::Var enc = encode(model_.position_encoding(), x);
  const ad::Var h = trunk("weight", model_.config().weight_depth, enc, codes);
  return ad::exp(ad::linear(h, param("weight.out.w"), param("weight.out.b")));
}

}  // namespace skinrf
