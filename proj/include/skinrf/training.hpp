#pragma once

// Stage 1: joint fit of the density, color and residual weight networks plus per-frame codes
// with the photometric loss and the weight-consistency loss. Stage 2: per-novel-pose weight
// codes fitted against the frozen canonical weight field.

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "skinrf/autodiff.hpp"
#include "skinrf/blend_weight_field.hpp"
#include "skinrf/model.hpp"
#include "skinrf/optim.hpp"
#include "skinrf/renderer.hpp"
#include "skinrf/scene.hpp"

namespace skinrf {

struct TrainConfig {
  long iterations_stage1 = 5000;
  long iterations_stage2 = 500;
  int ray_batch = 1024;
  int chunk_rays = 128;  // rays per tape; chunk gradients are summed
  int nsf_point_batch = 1024;
  double rgb_weight = 1.0;
  double nsf_weight = 1.0;
  bool rgb_mse = false;  // mean squared error instead of summed per-ray L2 norms
  double lr_start = kLearningRateStart;
  double lr_end = kLearningRateEnd;
  int samples_per_ray = kSamplesPerRay;
  int mask_dilation = 2;  // pixels; rays are drawn from the dilated foreground
  int log_every = 100;
  double bounds_padding = kDefaultBoundsPadding;
  bool train_weight_net_stage2 = false;
  // Stage-1 iterations during which F_dw and the weight codes stay fixed, so the density can
  // settle before the deformation starts to adapt.
  long weight_net_warmup = 0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TraceRow {
  long iteration = 0;
  double lr = 0.0;
  double loss_rgb = 0.0;
  double loss_weights = 0.0;  // L_nsf in stage 1, L_new in stage 2
  long skipped = 0;           // degenerate deformations skipped in the weight loss
};

// CSV with header iteration,lr,<first>,<second>,skipped.
std::string trace_csv(const std::vector<TraceRow>& rows, const std::string& first, const std::string& second);

// Sum over rays of ||predicted - target||_2, or the mean squared error when `mse`.
ad::Var loss_rgb(ad::Var predicted, ad::Var target, bool mse = false);

// Uniform samples inside the context's padded posed box.
std::vector<Vec3> sample_nsf_points(const DeformationContext& ctx, int count, std::mt19937_64& rng);

struct ConsistencyLoss {
  ad::Var loss;      // 1 x 1
  long skipped = 0;  // rows whose deformation could not be inverted
};
// Sum over points of ||w(x) - w_can(T(x))||_1 where w and T come from each row's context.
// With frame contexts this is the stage-1 consistency loss; with novel-pose contexts it is
// the stage-2 loss.
ConsistencyLoss loss_consistency(ModelGraph& graph, ad::Var points, const ContextRows& ctx,
                                 const DeformationContext& canonical);

// One supervised pixel.
struct RayTarget {
  Ray ray;
  int frame = 0;
  Vec3 color = Vec3::Zero();
};

// Per-frame deformation contexts and the pool of supervised pixels of a scene.
class TrainingData {
 public:
  TrainingData(const SceneDataset& scene, const TrainConfig& config);

  const SceneDataset& scene() const { return *scene_; }
  const DeformationContext& context(int frame) const { return contexts_.at(static_cast<std::size_t>(frame)); }
  const DeformationContext& canonical() const { return canonical_; }
  // All frames, indexed by frame; rows of a ContextRows built from it are frame indices.
  const std::vector<const DeformationContext*>& context_table() const { return table_; }
  std::size_t pool_size() const { return pool_.size(); }

  std::vector<RayTarget> sample_rays(int count, std::mt19937_64& rng) const;
  // Frame drawn uniformly from the training frames, then a point inside its box.
  void sample_points(int count, std::mt19937_64& rng, std::vector<int>& frames, std::vector<Vec3>& points) const;

  // Rays of every pixel of one view with its target colors.
  std::vector<RayTarget> view_rays(const Frame& view) const;

 private:
  struct PoolEntry {
    int view;
    int x, y;
  };
  const SceneDataset* scene_;
  std::vector<DeformationContext> contexts_;
  std::vector<const DeformationContext*> table_;
  DeformationContext canonical_;
  std::vector<PoolEntry> pool_;
};

// Photometric loss of `rays` (no gradient), evaluated with midpoint samples.
double evaluate_rgb_loss(const Model& model, const TrainingData& data, const std::vector<RayTarget>& rays,
                         const TrainConfig& config);

struct TrainHooks {
  std::function<void(const TraceRow&)> on_log;
  // Written with the last finite parameters when a non-finite value aborts training.
  std::string failure_checkpoint;
};

struct TrainResult {
  Model model;
  AdamState adam;
  std::vector<TraceRow> trace;
};

Model initial_model(const SceneDataset& scene, ModelConfig config, std::uint64_t seed);
TrainResult train_stage1(const SceneDataset& scene, const ModelConfig& model_config, const TrainConfig& config,
                         const TrainHooks& hooks = {});
// Novel poses and the training frame whose appearance code colors each of them.
struct NovelPoseSet {
  std::vector<Pose> poses;
  std::vector<int> appearance;  // nearest training frame by pose distance
};

// Index of the training frame whose pose is nearest (pose_distance) to `pose`.
int nearest_training_frame(const SceneDataset& scene, const Pose& pose);

// Adds one code per novel pose (initialised from the nearest training frame's code), freezes
// everything else and fits the codes with the stage-2 consistency loss.
TrainResult train_stage2(const Model& stage1, const SceneDataset& scene, const std::vector<Pose>& novel_poses,
                         const TrainConfig& config, NovelPoseSet* novel_out = nullptr, const TrainHooks& hooks = {});

// Deformation context for novel pose `index` of a stage-2 model.
DeformationContext novel_pose_context(const BodyModel& body, const NovelPoseSet& novel, int index,
                                      double padding = kDefaultBoundsPadding);

}  // namespace skinrf
