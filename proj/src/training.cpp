#include "skinrf/training.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include "skinrf/checkpoint.hpp"
#include "skinrf/error.hpp"

namespace skinrf {

void TrainConfig::validate() const {
  if (iterations_stage1 < 0 || iterations_stage2 < 0) throw UsageError("train config: negative iteration count");
  if (ray_batch < 1 || chunk_rays < 1 || nsf_point_batch < 0) throw UsageError("train config: batch sizes must be positive");
  if (samples_per_ray < 1) throw UsageError("train config: samples_per_ray must be positive");
  if (weight_net_warmup < 0) throw UsageError("train config: weight_net_warmup must be non-negative");
  if (log_every < 1) throw UsageError("train config: log_every must be positive");
  if (mask_dilation < 0) throw UsageError("train config: mask_dilation must be non-negative");
  if (!(lr_start > 0.0) || !(lr_end > 0.0)) throw UsageError("train config: learning rates must be positive");
}

std::string trace_csv(const std::vector<TraceRow>& rows, const std::string& first, const std::string& second) {
  std::ostringstream out;
  out << "iteration,lr," << first << "," << second << ",skipped\n" << std::setprecision(17);
  for (const TraceRow& r : rows) {
    out << r.iteration << "," << r.lr << "," << r.loss_rgb << "," << r.loss_weights << "," << r.skipped << "\n";
  }
  return out.str();
}

ad::Var loss_rgb(ad::Var predicted, ad::Var target, bool mse) {
  const ad::Var diff = predicted - target;
  if (mse) return ad::sum(ad::square(diff)) * (1.0 / static_cast<double>(diff.rows() * diff.cols()));
  return ad::sum(ad::row_norm(diff));
}

std::vector<Vec3> sample_nsf_points(const DeformationContext& ctx, int count, std::mt19937_64& rng) {
  if (count <= 0) throw UsageError("sample_nsf_points: count must be positive");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Vec3> pts(static_cast<std::size_t>(count));
  const Vec3 lo = ctx.bounds.min;
  const Vec3 ext = ctx.bounds.extent();
  for (Vec3& p : pts) {
    const double a = u(rng), b = u(rng), c = u(rng);
    p = lo + Vec3(a * ext.x(), b * ext.y(), c * ext.z());
  }
  return pts;
}

ConsistencyLoss loss_consistency(ModelGraph& graph, ad::Var points, const ContextRows& ctx,
                                 const DeformationContext& canonical) {
  ad::Tape& tape = graph.tape();
  const ad::Var w = field_weights(graph, points, ctx);
  std::vector<unsigned char> valid;
  const ad::Var xc = inverse_blend(w, points, ctx, valid);
  const ContextRows canon = ContextRows::single(canonical, valid.size());
  const ad::Var w_can = field_weights(graph, xc, canon);
  ad::Var diff = ad::abs(w - w_can);
  ConsistencyLoss out;
  Eigen::VectorXd keep(static_cast<Eigen::Index>(valid.size()));
  for (std::size_t i = 0; i < valid.size(); ++i) {
    keep[static_cast<Eigen::Index>(i)] = valid[i] ? 1.0 : 0.0;
    if (!valid[i]) ++out.skipped;
  }
  if (out.skipped > 0) diff = ad::mul_col(diff, tape.constant(keep));
  out.loss = ad::sum(diff);
  return out;
}

TrainingData::TrainingData(const SceneDataset& scene, const TrainConfig& config)
    : scene_(&scene), canonical_(DeformationContext::canonical(scene.body, config.bounds_padding)) {
  scene.validate();
  if (scene.split.train_frames.empty() || scene.split.train_cameras.empty()) {
    throw UsageError("training needs at least one training frame and camera");
  }
  for (int f = 0; f < scene.frame_count(); ++f) {
    contexts_.push_back(DeformationContext::make(scene.body, scene.poses[static_cast<std::size_t>(f)], LatentRef::frame(f),
                                                 f, config.bounds_padding));
  }
  for (const DeformationContext& c : contexts_) table_.push_back(&c);

  std::vector<char> train_frame(static_cast<std::size_t>(scene.frame_count()), 0);
  for (const int f : scene.split.train_frames) train_frame[static_cast<std::size_t>(f)] = 1;
  std::vector<char> train_cam(scene.cameras.size(), 0);
  for (const int c : scene.split.train_cameras) train_cam[static_cast<std::size_t>(c)] = 1;
  const int d = config.mask_dilation;
  for (std::size_t v = 0; v < scene.frames.size(); ++v) {
    const Frame& fr = scene.frames[v];
    if (!train_frame[static_cast<std::size_t>(fr.index)] || !train_cam[static_cast<std::size_t>(fr.camera)]) continue;
    for (int y = 0; y < fr.mask.height; ++y) {
      for (int x = 0; x < fr.mask.width; ++x) {
        bool near = false;
        for (int yy = std::max(0, y - d); yy <= std::min(fr.mask.height - 1, y + d) && !near; ++yy) {
          for (int xx = std::max(0, x - d); xx <= std::min(fr.mask.width - 1, x + d) && !near; ++xx) {
            near = fr.mask.at(xx, yy, 0) > 0.5;
          }
        }
        if (near) pool_.push_back({static_cast<int>(v), x, y});
      }
    }
  }
  if (pool_.empty()) throw UsageError("training views contain no foreground pixels");
}

std::vector<RayTarget> TrainingData::sample_rays(int count, std::mt19937_64& rng) const {
  std::uniform_int_distribution<std::size_t> pick(0, pool_.size() - 1);
  std::vector<RayTarget> out(static_cast<std::size_t>(count));
  for (RayTarget& t : out) {
    const PoolEntry& e = pool_[pick(rng)];
    const Frame& fr = scene_->frames[static_cast<std::size_t>(e.view)];
    t.ray = pixel_ray(scene_->cameras[static_cast<std::size_t>(fr.camera)], e.x + 0.5, e.y + 0.5);
    bound_ray(t.ray, context(fr.index).bounds);
    t.frame = fr.index;
    t.color = Vec3(fr.image.at(e.x, e.y, 0), fr.image.at(e.x, e.y, 1), fr.image.at(e.x, e.y, 2));
  }
  return out;
}

void TrainingData::sample_points(int count, std::mt19937_64& rng, std::vector<int>& frames,
                                 std::vector<Vec3>& points) const {
  const auto& train = scene_->split.train_frames;
  std::uniform_int_distribution<std::size_t> pick(0, train.size() - 1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  frames.resize(static_cast<std::size_t>(count));
  points.resize(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const int f = train[pick(rng)];
    const Aabb& box = context(f).bounds;
    const double a = u(rng), b = u(rng), c = u(rng);
    frames[static_cast<std::size_t>(i)] = f;
    points[static_cast<std::size_t>(i)] = box.min + Vec3(a * box.extent().x(), b * box.extent().y(), c * box.extent().z());
  }
}

std::vector<RayTarget> TrainingData::view_rays(const Frame& view) const {
  const Camera& cam = scene_->cameras[static_cast<std::size_t>(view.camera)];
  std::vector<RayTarget> out;
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      RayTarget t;
      t.ray = pixel_ray(cam, x + 0.5, y + 0.5);
      bound_ray(t.ray, context(view.index).bounds);
      t.frame = view.index;
      t.color = Vec3(view.image.at(x, y, 0), view.image.at(x, y, 1), view.image.at(x, y, 2));
      out.push_back(t);
    }
  }
  return out;
}

namespace {

struct ChunkResult {
  double loss = 0.0;
  long skipped = 0;
};

ChunkResult rgb_chunk(const Model& model, const TrainingData& data, std::span<const RayTarget> rays,
                      const TrainConfig& config, std::mt19937_64* rng, std::vector<double>* grads) {
  ad::Tape tape(grads != nullptr);
  ModelGraph graph(tape, model);
  std::vector<Ray> r(rays.size());
  ContextRows rows;
  rows.contexts = data.context_table();
  ad::Matrix target(static_cast<Eigen::Index>(rays.size()), 3);
  for (std::size_t i = 0; i < rays.size(); ++i) {
    r[i] = rays[i].ray;
    rows.rows.push_back(rays[i].frame);
    target.row(static_cast<Eigen::Index>(i)) = rays[i].color.transpose();
  }
  SampleSettings samples{config.samples_per_ray, rng != nullptr};
  const RenderedRays rendered = render_rays(graph, r, rows, samples, rng);
  const ad::Var loss = loss_rgb(rendered.rgb, tape.constant(std::move(target)), config.rgb_mse) * config.rgb_weight;
  if (grads) tape.backward(loss, *grads);
  return {loss.scalar(), 0};
}

ChunkResult consistency_chunk(const Model& model, const std::vector<const DeformationContext*>& table,
                              const DeformationContext& canonical, const std::vector<int>& ctx_rows,
                              const std::vector<Vec3>& points, double weight, std::vector<double>* grads) {
  ad::Tape tape(grads != nullptr);
  ModelGraph graph(tape, model);
  ContextRows rows;
  rows.contexts = table;
  rows.rows = ctx_rows;
  ad::Matrix x(static_cast<Eigen::Index>(points.size()), 3);
  for (std::size_t i = 0; i < points.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = points[i].transpose();
  const ConsistencyLoss c = loss_consistency(graph, tape.constant(std::move(x)), rows, canonical);
  const ad::Var loss = c.loss * weight;
  if (grads) tape.backward(loss, *grads);
  return {loss.scalar(), c.skipped};
}

bool is_deformation_block(const Model& model, BlockId id) {
  const std::string& name = model.params().block(id).name;
  return model.is_weight_net_block(id) || name == "weight_codes" || name == "canonical_code";
}

void set_deformation_trainable(Model& model, bool trainable) {
  for (BlockId id = 0; id < static_cast<BlockId>(model.params().blocks().size()); ++id) {
    if (is_deformation_block(model, id)) model.params().set_trainable(id, trainable);
  }
}

template <typename Step>
void run_loop(TrainResult& state, long iterations, const TrainConfig& config, const TrainHooks& hooks, Step step,
              std::function<void(long)> before = {}) {
  for (long it = 0; it < iterations; ++it) {
    if (before) before(it);
    const double lr = lr_at(it, iterations, config.lr_start, config.lr_end);
    std::vector<double> grads(state.model.params().size(), 0.0);
    TraceRow row;
    row.iteration = it;
    row.lr = lr;
    try {
      step(grads, row);
    } catch (const NumericError& e) {
      if (!hooks.failure_checkpoint.empty()) {
        save_checkpoint(hooks.failure_checkpoint, state.model, &state.adam, it, nullptr);
      }
      throw NumericError(std::string("training aborted at iteration ") + std::to_string(it) + ": " + e.what());
    }
    adam_step(state.model.params(), grads, state.adam, lr);
    if (it % config.log_every == 0 || it + 1 == iterations) {
      state.trace.push_back(row);
      if (hooks.on_log) hooks.on_log(row);
    }
  }
}

}  // namespace

double evaluate_rgb_loss(const Model& model, const TrainingData& data, const std::vector<RayTarget>& rays,
                         const TrainConfig& config) {
  double total = 0.0;
  for (std::size_t begin = 0; begin < rays.size(); begin += static_cast<std::size_t>(config.chunk_rays)) {
    const std::size_t end = std::min(rays.size(), begin + static_cast<std::size_t>(config.chunk_rays));
    total += rgb_chunk(model, data, std::span<const RayTarget>(rays).subspan(begin, end - begin), config, nullptr, nullptr).loss;
  }
  return total;
}

Model initial_model(const SceneDataset& scene, ModelConfig config, std::uint64_t seed) {
  config.part_count = scene.body.skeleton.part_count();
  config.frame_count = scene.frame_count();
  return Model(config, seed);
}

TrainResult train_stage1(const SceneDataset& scene, const ModelConfig& model_config, const TrainConfig& config,
                         const TrainHooks& hooks) {
  config.validate();
  TrainingData data(scene, config);
  TrainResult state{initial_model(scene, model_config, config.seed), {}, {}};
  state.adam = AdamState::for_params(state.model.params().size());
  // Separate streams so changing one batch size does not reshuffle the other.
  std::mt19937_64 ray_rng(config.seed * 2 + 1);
  std::mt19937_64 point_rng(config.seed * 2 + 2);
  const bool deform = state.model.config().deformation;

  run_loop(state, config.iterations_stage1, config, hooks, [&](std::vector<double>& grads, TraceRow& row) {
    const std::vector<RayTarget> rays = data.sample_rays(config.ray_batch, ray_rng);
    for (std::size_t begin = 0; begin < rays.size(); begin += static_cast<std::size_t>(config.chunk_rays)) {
      const std::size_t end = std::min(rays.size(), begin + static_cast<std::size_t>(config.chunk_rays));
      row.loss_rgb += rgb_chunk(state.model, data, std::span<const RayTarget>(rays).subspan(begin, end - begin), config,
                                &ray_rng, &grads)
                          .loss;
    }
    if (deform && config.nsf_point_batch > 0 && config.nsf_weight != 0.0) {
      std::vector<int> frames;
      std::vector<Vec3> points;
      data.sample_points(config.nsf_point_batch, point_rng, frames, points);
      const ChunkResult c = consistency_chunk(state.model, data.context_table(), data.canonical(), frames, points,
                                              config.nsf_weight, &grads);
      row.loss_weights = c.loss;
      row.skipped = c.skipped;
    }
  }, [&](long it) {
    if (!deform || config.weight_net_warmup == 0) return;
    if (it == 0) set_deformation_trainable(state.model, false);
    if (it == config.weight_net_warmup) set_deformation_trainable(state.model, true);
  });
  if (deform) set_deformation_trainable(state.model, true);
  return state;
}

int nearest_training_frame(const SceneDataset& scene, const Pose& pose) {
  int best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  for (const int f : scene.split.train_frames) {
    const double d = pose_distance(pose, scene.poses[static_cast<std::size_t>(f)]);
    if (d < best_d) {
      best_d = d;
      best = f;
    }
  }
  if (best < 0) throw UsageError("scene has no training frames");
  return best;
}

DeformationContext novel_pose_context(const BodyModel& body, const NovelPoseSet& novel, int index, double padding) {
  if (index < 0 || index >= static_cast<int>(novel.poses.size())) {
    throw MissingLatentError("no novel pose " + std::to_string(index));
  }
  return DeformationContext::make(body, novel.poses[static_cast<std::size_t>(index)], LatentRef::novel(index),
                                  novel.appearance[static_cast<std::size_t>(index)], padding);
}

TrainResult train_stage2(const Model& stage1, const SceneDataset& scene, const std::vector<Pose>& novel_poses,
                         const TrainConfig& config, NovelPoseSet* novel_out, const TrainHooks& hooks) {
  config.validate();
  if (novel_poses.empty()) throw UsageError("stage 2 needs at least one novel pose");
  NovelPoseSet novel;
  for (const Pose& p : novel_poses) {
    p.validate(scene.body.skeleton.part_count());
    novel.poses.push_back(p);
    novel.appearance.push_back(nearest_training_frame(scene, p));
  }
  TrainResult state{stage1, {}, {}};
  state.model.add_novel_codes(novel.appearance);
  state.model.freeze_for_stage2(config.train_weight_net_stage2);
  state.adam = AdamState::for_params(state.model.params().size());

  std::vector<DeformationContext> contexts;
  for (int i = 0; i < static_cast<int>(novel.poses.size()); ++i) {
    contexts.push_back(novel_pose_context(scene.body, novel, i, config.bounds_padding));
  }
  std::vector<const DeformationContext*> table;
  for (const DeformationContext& c : contexts) table.push_back(&c);
  const DeformationContext canonical = DeformationContext::canonical(scene.body, config.bounds_padding);
  std::mt19937_64 rng(config.seed * 2 + 3);
  std::uniform_int_distribution<std::size_t> pick(0, contexts.size() - 1);
  std::uniform_real_distribution<double> u(0.0, 1.0);

  run_loop(state, config.iterations_stage2, config, hooks, [&](std::vector<double>& grads, TraceRow& row) {
    std::vector<int> rows(static_cast<std::size_t>(config.nsf_point_batch));
    std::vector<Vec3> points(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      rows[i] = static_cast<int>(pick(rng));
      const Aabb& box = contexts[static_cast<std::size_t>(rows[i])].bounds;
      const double a = u(rng), b = u(rng), c = u(rng);
      points[i] = box.min + Vec3(a * box.extent().x(), b * box.extent().y(), c * box.extent().z());
    }
    const ChunkResult c = consistency_chunk(state.model, table, canonical, rows, points, 1.0, &grads);
    row.loss_weights = c.loss;
    row.skipped = c.skipped;
  });
  if (novel_out) *novel_out = novel;
  return state;
}

}  // namespace skinrf
