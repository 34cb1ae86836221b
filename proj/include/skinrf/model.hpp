#pragma once

// Parameter layout and batched forward passes for the three networks: the density net
// F_sigma, the color net F_c and the residual blend weight net F_dw, plus the latent code
// tables that condition them.

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "skinrf/autodiff.hpp"
#include "skinrf/params.hpp"

namespace skinrf {

struct PositionalEncoding {
  int frequency_count = 10;
  bool include_input = true;

  int output_dim(int input_dim) const { return input_dim * (2 * frequency_count + (include_input ? 1 : 0)); }
};

// [v?, sin(2^0 pi v), cos(2^0 pi v), ..., sin(2^(L-1) pi v), cos(2^(L-1) pi v)], where each
// sin/cos group covers all components of v.
Eigen::VectorXd encode(const PositionalEncoding& pe, const Eigen::VectorXd& v);
ad::Var encode(const PositionalEncoding& pe, ad::Var v);

enum class DensityActivation { kSoftplus, kRelu };

struct ModelConfig {
  int part_count = 6;
  int frame_count = 1;  // rows of the appearance and weight code tables
  int latent_dim = 128;
  int density_depth = 8;
  int density_width = 256;
  int color_width = 128;
  int weight_depth = 8;
  int weight_width = 256;
  int skip_layer = 4;  // the encoded input is re-injected after this layer
  int position_frequencies = 10;
  int direction_frequencies = 4;
  DensityActivation density_activation = DensityActivation::kSoftplus;
  // Initial bias of the residual head; exp(-4.6) ~ 0.01 so the field starts near the base weights.
  double residual_bias = -4.6;
  double latent_init_stddev = 0.1;
  // false gives the no-deformation ablation: observation points are used as canonical points.
  bool deformation = true;

  void validate() const;
};

enum class LatentKind { kFrame, kCanonical, kNovel };

// Which weight-field code conditions F_dw.
struct LatentRef {
  LatentKind kind = LatentKind::kCanonical;
  int index = 0;

  static LatentRef frame(int i) { return {LatentKind::kFrame, i}; }
  static LatentRef canonical() { return {LatentKind::kCanonical, 0}; }
  static LatentRef novel(int i) { return {LatentKind::kNovel, i}; }
};

class Model {
 public:
  Model(const ModelConfig& config, std::uint64_t seed);
  // Adopts an existing parameter store (checkpoint load); the layout must match the config.
  Model(const ModelConfig& config, ParamStore params);

  const ModelConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  PositionalEncoding position_encoding() const { return {config_.position_frequencies, true}; }
  PositionalEncoding direction_encoding() const { return {config_.direction_frequencies, true}; }

  // Appends (once) a table of `count` novel-pose codes, each initialised from a frame code.
  void add_novel_codes(const std::vector<int>& init_from_frames);
  int novel_count() const;
  int latent_rows(LatentKind kind) const;

  // Freezes everything except the novel codes (and F_dw if `train_weight_net`).
  void freeze_for_stage2(bool train_weight_net);
  bool is_weight_net_block(BlockId id) const;

 private:
  void build_layout();
  void check_layout() const;

  ModelConfig config_;
  ParamStore params_;
};

// Binds model parameters onto one tape and runs batched forward passes. Every parameter
// block becomes a leaf at most once per graph.
class ModelGraph {
 public:
  ModelGraph(ad::Tape& tape, const Model& model);

  ad::Tape& tape() { return tape_; }
  const Model& model() const { return model_; }
  ad::Var param(std::string_view name);

  struct Density {
    ad::Var sigma;    // N x 1, non-negative
    ad::Var feature;  // N x density_width
  };
  Density density(ad::Var x_canonical);
  // dirs: N x 3 unit vectors; appearance_rows: frame code per row.
  ad::Var color(ad::Var feature, ad::Var dirs, const std::vector<int>& appearance_rows);
  // Strictly positive residual weights exp(F_dw(x, psi)), N x K.
  ad::Var residual(ad::Var x, LatentKind kind, const std::vector<int>& rows);

 private:
  ad::Var trunk(const std::string& prefix, int depth, ad::Var encoded, std::optional<ad::Var> extra);
  ad::Var projected_codes(const std::string& table, const std::string& weight);
  void check_rows(LatentKind kind, const std::vector<int>& rows) const;

  ad::Tape& tape_;
  const Model& model_;
  std::vector<std::optional<ad::Var>> bound_;
  std::vector<std::pair<std::string, ad::Var>> projected_;
};

}  // namespace skinrf
