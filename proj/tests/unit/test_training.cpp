#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "generators.hpp"
#include "skinrf/checkpoint.hpp"
#include "skinrf/error.hpp"
#include "skinrf/synthetic.hpp"
#include "skinrf/training.hpp"

using namespace skinrf;

namespace {

const SceneDataset& small_scene() {
  static const SceneDataset scene = [] {
    SyntheticConfig c;
    c.body.part_count = 3;
    c.width = 20;
    c.height = 20;
    c.camera_count = 3;
    c.train_camera_count = 2;
    c.train_frames = 4;
    c.test_frames = 2;
    c.seed = 5;
    return generate_synthetic_scene(c);
  }();
  return scene;
}

TrainConfig fast_config() {
  TrainConfig t;
  t.iterations_stage1 = 30;
  t.iterations_stage2 = 20;
  t.ray_batch = 48;
  t.chunk_rays = 16;
  t.nsf_point_batch = 32;
  t.samples_per_ray = 12;
  t.log_every = 10;
  t.lr_start = 5e-3;
  t.lr_end = 1e-3;
  t.seed = 3;
  return t;
}

bool same_values(const ParamStore& a, const ParamStore& b, const std::string& block) {
  const auto x = a.matrix(a.require(block));
  const auto y = b.matrix(b.require(block));
  return std::equal(x.data(), x.data() + x.size(), y.data());
}

}  // namespace

TEST_SUITE("training") {
  TEST_CASE("photometric loss is the summed per-ray norm or the mean square") {
    ad::Tape t(false);
    ad::Matrix p(2, 3), q(2, 3);
    p << 0.1, 0.2, 0.3, 1.0, 1.0, 1.0;
    q << 0.4, 0.6, 0.3, 1.0, 0.0, 1.0;
    const double l2 = loss_rgb(t.constant(p), t.constant(q)).scalar();
    CHECK(l2 == doctest::Approx(0.5 + 1.0).epsilon(1e-15));
    const double mse = loss_rgb(t.constant(p), t.constant(q), true).scalar();
    CHECK(mse == doctest::Approx((0.09 + 0.16 + 1.0) / 6.0).epsilon(1e-15));
  }

  TEST_CASE("consistency loss matches the pointwise definition") {
    const BodyModel body = make_toy_body({.part_count = 3});
    Model m(testgen::tiny_model(3, 2), 61);
    m.params().matrix(m.params().require("weight.out.b")).setConstant(-1.5);
    testgen::Gen g(62);
    const DeformationContext can = DeformationContext::canonical(body);
    const DeformationContext f0 = DeformationContext::make(body, g.pose(3, 0.7, 0.1), LatentRef::frame(0), 0);
    const DeformationContext f1 = DeformationContext::make(body, g.pose(3, 0.7, 0.1), LatentRef::frame(1), 1);
    ContextRows rows;
    rows.contexts = {&f0, &f1};
    ad::Matrix x(16, 3);
    for (int r = 0; r < 16; ++r) {
      rows.rows.push_back(r % 2);
      x.row(r) = (rows.at(static_cast<std::size_t>(r)).bounds.center() + g.vec3(0.3)).transpose();
    }
    double expected = 0.0;
    for (int r = 0; r < 16; ++r) {
      const DeformationContext& c = rows.at(static_cast<std::size_t>(r));
      const Vec3 xr = x.row(r).transpose();
      expected += (observation_weights(m, c, xr) - canonical_weights(m, can, deform_to_canonical(m, c, xr))).lpNorm<1>();
    }
    ad::Tape t(false);
    ModelGraph graph(t, m);
    const ConsistencyLoss l = loss_consistency(graph, t.constant(x), rows, can);
    CHECK(l.skipped == 0);
    CHECK(l.loss.scalar() == doctest::Approx(expected).epsilon(1e-12));

    const ad::LossBuilder builder = [&](ad::Tape& tape, const ParamStore& ps) {
      const Model local(m.config(), ps);
      ModelGraph gr(tape, local);
      return loss_consistency(gr, tape.constant(x), rows, can).loss;
    };
    const ad::GradientCheck r = ad::check_gradient(builder, m.params());
    CHECK(r.checked > 300);
    // The worst coordinates have gradients near the relative floor, where differencing noise
    // is around 1e-5.
    CHECK(r.max_relative_error < 1e-4);
  }

  TEST_CASE("consistency loss vanishes in the rest pose with a code-independent residual") {
    const BodyModel body = make_toy_body({.part_count = 4});
    Model m(testgen::tiny_model(4, 1), 63);
    m.params().matrix(m.params().require("weight.out.w")).setZero();
    const DeformationContext can = DeformationContext::canonical(body);
    const DeformationContext rest = DeformationContext::make(body, Pose::rest(4), LatentRef::frame(0), 0);
    std::mt19937_64 rng(1);
    const std::vector<Vec3> pts = sample_nsf_points(rest, 64, rng);
    ad::Matrix x(64, 3);
    for (int r = 0; r < 64; ++r) x.row(r) = pts[static_cast<std::size_t>(r)].transpose();
    ad::Tape t(false);
    ModelGraph graph(t, m);
    CHECK(loss_consistency(graph, t.constant(x), ContextRows::single(rest, 64), can).loss.scalar() < 1e-12);
  }

  TEST_CASE("consistency samples lie inside the padded box") {
    const DeformationContext& ctx = TrainingData(small_scene(), fast_config()).context(1);
    std::mt19937_64 rng(7);
    for (const Vec3& p : sample_nsf_points(ctx, 500, rng)) CHECK(ctx.bounds.contains(p));
  }

  TEST_CASE("ray pool is the dilated foreground of the training views") {
    const SceneDataset& scene = small_scene();
    TrainConfig cfg = fast_config();
    for (const int dil : {0, 1, 3}) {
      cfg.mask_dilation = dil;
      const TrainingData data(scene, cfg);
      std::size_t expected = 0;
      for (const Frame& f : scene.frames) {
        const bool train = std::count(scene.split.train_frames.begin(), scene.split.train_frames.end(), f.index) &&
                           std::count(scene.split.train_cameras.begin(), scene.split.train_cameras.end(), f.camera);
        if (!train) continue;
        // Separable square dilation: horizontal pass, then vertical.
        const int w = f.mask.width, h = f.mask.height;
        std::vector<int> row(static_cast<std::size_t>(w * h), 0);
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x)
            for (int dx = -dil; dx <= dil; ++dx)
              if (x + dx >= 0 && x + dx < w && f.mask.at(x + dx, y, 0) > 0.5) row[static_cast<std::size_t>(y * w + x)] = 1;
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x) {
            bool on = false;
            for (int dy = -dil; dy <= dil; ++dy) on = on || (y + dy >= 0 && y + dy < h && row[static_cast<std::size_t>((y + dy) * w + x)]);
            expected += on;
          }
      }
      CHECK(data.pool_size() == expected);
    }
  }

  TEST_CASE("sampled rays come from training views and carry their pixel colors") {
    const SceneDataset& scene = small_scene();
    const TrainingData data(scene, fast_config());
    std::mt19937_64 rng(9);
    const std::set<int> frames(scene.split.train_frames.begin(), scene.split.train_frames.end());
    for (const RayTarget& r : data.sample_rays(200, rng)) {
      CHECK(frames.count(r.frame) == 1);
      bool matched = false;
      for (const int cam : scene.split.train_cameras) {
        const Camera& c = scene.cameras[static_cast<std::size_t>(cam)];
        if ((r.ray.origin - c.center()).norm() > 1e-12) continue;
        const Eigen::Vector2d px = c.project(r.ray.origin + r.ray.direction);
        const int x = static_cast<int>(std::floor(px.x())), y = static_cast<int>(std::floor(px.y()));
        const Frame* f = scene.find(r.frame, cam);
        REQUIRE(f != nullptr);
        CHECK((r.color - Vec3(f->image.at(x, y, 0), f->image.at(x, y, 1), f->image.at(x, y, 2))).norm() == 0.0);
        matched = true;
      }
      CHECK(matched);
    }
  }

  TEST_CASE("nearest training frame is the brute-force minimiser") {
    const SceneDataset& scene = small_scene();
    testgen::Gen g(64);
    for (int i = 0; i < 20; ++i) {
      const Pose p = g.pose(3, 1.0, 0.0);
      int best = -1;
      double best_d = 1e300;
      for (const int f : scene.split.train_frames) {
        const double d = pose_distance(p, scene.poses[static_cast<std::size_t>(f)]);
        if (d < best_d) best_d = d, best = f;
      }
      CHECK(nearest_training_frame(scene, p) == best);
    }
    CHECK(nearest_training_frame(scene, scene.poses[2]) == 2);
  }

  TEST_CASE("stage 1 reduces the photometric loss and is reproducible") {
    const SceneDataset& scene = small_scene();
    ModelConfig mc = testgen::tiny_model(3, scene.frame_count());
    TrainConfig cfg = fast_config();
    cfg.iterations_stage1 = 120;
    const TrainingData data(scene, cfg);
    std::mt19937_64 rng(11);
    const auto eval = data.sample_rays(200, rng);
    const double before = evaluate_rgb_loss(initial_model(scene, mc, cfg.seed), data, eval, cfg);
    std::vector<TraceRow> logged;
    TrainHooks hooks;
    hooks.on_log = [&](const TraceRow& r) { logged.push_back(r); };
    const TrainResult a = train_stage1(scene, mc, cfg, hooks);
    const double after = evaluate_rgb_loss(a.model, data, eval, cfg);
    CHECK(after < 0.7 * before);
    REQUIRE(a.trace.size() == 13);  // iterations 0, 10, ..., 110 and the last one
    CHECK(a.trace.front().iteration == 0);
    CHECK(a.trace.back().iteration == 119);
    CHECK(logged.size() == a.trace.size());
    CHECK(a.adam.step_count == 120);
    const TrainResult b = train_stage1(scene, mc, cfg);
    CHECK(std::equal(a.model.params().values().begin(), a.model.params().values().end(), b.model.params().values().begin()));
    cfg.seed = 4;
    const TrainResult c = train_stage1(scene, mc, cfg);
    CHECK_FALSE(std::equal(a.model.params().values().begin(), a.model.params().values().end(), c.model.params().values().begin()));
  }

  TEST_CASE("warmup keeps the weight net and its codes fixed") {
    const SceneDataset& scene = small_scene();
    const ModelConfig mc = testgen::tiny_model(3, scene.frame_count());
    TrainConfig cfg = fast_config();
    cfg.iterations_stage1 = 10;
    cfg.weight_net_warmup = 10;
    const Model init = initial_model(scene, mc, cfg.seed);
    const TrainResult r = train_stage1(scene, mc, cfg);
    for (const ParamBlock& b : init.params().blocks()) {
      const bool fixed = b.name.starts_with("weight.") || b.name == "weight_codes" || b.name == "canonical_code";
      CHECK_MESSAGE(same_values(init.params(), r.model.params(), b.name) == fixed, b.name);
      CHECK(r.model.params().block(r.model.params().require(b.name)).trainable);
    }
  }

  TEST_CASE("ablation without deformation never touches the weight net") {
    const SceneDataset& scene = small_scene();
    ModelConfig mc = testgen::tiny_model(3, scene.frame_count());
    mc.deformation = false;
    TrainConfig cfg = fast_config();
    cfg.iterations_stage1 = 10;
    const Model init = initial_model(scene, mc, cfg.seed);
    const TrainResult r = train_stage1(scene, mc, cfg);
    CHECK(same_values(init.params(), r.model.params(), "weight.out.w"));
    CHECK_FALSE(same_values(init.params(), r.model.params(), "density.sigma.w"));
  }

  TEST_CASE("stage 2 only moves the novel codes") {
    const SceneDataset& scene = small_scene();
    const ModelConfig mc = testgen::tiny_model(3, scene.frame_count());
    TrainConfig cfg = fast_config();
    cfg.iterations_stage1 = 20;
    cfg.iterations_stage2 = 60;
    const TrainResult s1 = train_stage1(scene, mc, cfg);
    std::vector<Pose> novel;
    for (const int f : scene.split.test_frames) novel.push_back(scene.poses[static_cast<std::size_t>(f)]);
    NovelPoseSet set;
    const TrainResult s2 = train_stage2(s1.model, scene, novel, cfg, &set);
    REQUIRE(set.poses.size() == novel.size());
    for (std::size_t i = 0; i < novel.size(); ++i) CHECK(set.appearance[i] == nearest_training_frame(scene, novel[i]));
    for (const ParamBlock& b : s1.model.params().blocks()) CHECK_MESSAGE(same_values(s1.model.params(), s2.model.params(), b.name), b.name);
    CHECK(s2.model.novel_count() == static_cast<int>(novel.size()));
    // Per-batch losses are noisy, so compare the stage-2 loss on one fixed point set.
    std::vector<DeformationContext> ctxs;
    for (int i = 0; i < 2; ++i) ctxs.push_back(novel_pose_context(scene.body, set, i));
    ContextRows rows;
    rows.contexts = {&ctxs[0], &ctxs[1]};
    std::mt19937_64 rng(17);
    std::vector<Vec3> pts;
    for (int i = 0; i < 2; ++i) {
      for (const Vec3& p : sample_nsf_points(ctxs[static_cast<std::size_t>(i)], 300, rng)) {
        pts.push_back(p);
        rows.rows.push_back(i);
      }
    }
    ad::Matrix x(600, 3);
    for (int r = 0; r < 600; ++r) x.row(r) = pts[static_cast<std::size_t>(r)].transpose();
    const DeformationContext can = DeformationContext::canonical(scene.body);
    auto fixed_loss = [&](const Model& m) {
      ad::Tape t(false);
      ModelGraph graph(t, m);
      return loss_consistency(graph, t.constant(x), rows, can).loss.scalar();
    };
    Model start = s1.model;
    start.add_novel_codes(set.appearance);
    CHECK(fixed_loss(s2.model) < fixed_loss(start));
    const DeformationContext ctx = novel_pose_context(scene.body, set, 1);
    CHECK(ctx.latent.kind == LatentKind::kNovel);
    CHECK(ctx.appearance == set.appearance[1]);
    CHECK_THROWS_AS(novel_pose_context(scene.body, set, 2), MissingLatentError);
    CHECK_THROWS_AS(train_stage2(s1.model, scene, {}, cfg), UsageError);
  }

  TEST_CASE("a diverging run stops with NumericError and leaves a checkpoint") {
    const SceneDataset& scene = small_scene();
    const ModelConfig mc = testgen::tiny_model(3, scene.frame_count());
    TrainConfig cfg = fast_config();
    cfg.iterations_stage1 = 200;
    cfg.lr_start = cfg.lr_end = 1e12;
    const auto path = std::filesystem::temp_directory_path() / "skinrf_failure.ckpt";
    std::filesystem::remove(path);
    TrainHooks hooks;
    hooks.failure_checkpoint = path.string();
    CHECK_THROWS_AS(train_stage1(scene, mc, cfg, hooks), NumericError);
    REQUIRE(std::filesystem::exists(path));
    const Checkpoint ck = load_checkpoint(path);
    for (const double v : ck.model.params().values()) CHECK(std::isfinite(v));
    std::filesystem::remove(path);
  }

  TEST_CASE("trace csv and config validation") {
    const std::string csv = trace_csv({{0, 0.5, 1.25, 0.5, 2}}, "loss_rgb", "loss_nsf");
    CHECK(csv.rfind("iteration,lr,loss_rgb,loss_nsf,skipped\n", 0) == 0);
    CHECK(csv.find("\n0,") != std::string::npos);
    TrainConfig bad;
    bad.ray_batch = 0;
    CHECK_THROWS_AS(bad.validate(), UsageError);
    bad = TrainConfig{};
    bad.lr_end = 0.0;
    CHECK_THROWS_AS(bad.validate(), UsageError);
  }
}
