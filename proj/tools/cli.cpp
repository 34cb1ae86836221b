#include "cli.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include "skinrf/checkpoint.hpp"
#include "skinrf/config.hpp"
#include "skinrf/error.hpp"
#include "skinrf/image.hpp"
#include "skinrf/mesh_extraction.hpp"
#include "skinrf/metrics.hpp"
#include "skinrf/scene.hpp"
#include "skinrf/synthetic.hpp"
#include "skinrf/training.hpp"

namespace skinrf {
namespace {

namespace fs = std::filesystem;

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string checkpoint;
  std::string out;
};

RunConfig run_config(const Globals& g) { return g.config.empty() ? RunConfig{} : load_run_config(g.config); }

void require(const std::string& value, const char* flag, const char* command) {
  if (value.empty()) throw UsageError(std::string(command) + " needs " + flag);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write " + path.string());
  out << text;
}

void ensure_parent(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

TrainHooks logging_hooks(const std::string& stage, const std::string& checkpoint_path) {
  TrainHooks hooks;
  hooks.failure_checkpoint = checkpoint_path + ".failed";
  hooks.on_log = [stage](const TraceRow& r) {
    std::fprintf(stderr, "%s it %ld lr %.3g rgb %.6g weights %.6g skipped %ld\n", stage.c_str(), r.iteration, r.lr,
                 r.loss_rgb, r.loss_weights, r.skipped);
  };
  return hooks;
}

bool is_training_frame(const SceneDataset& scene, int frame) {
  for (const int f : scene.split.train_frames) {
    if (f == frame) return true;
  }
  return false;
}

int novel_index_for_pose(const NovelPoseSet& novel, const Pose& pose) {
  for (std::size_t i = 0; i < novel.poses.size(); ++i) {
    if (pose_distance(novel.poses[i], pose) == 0.0) return static_cast<int>(i);
  }
  return -1;
}

// Training frames use their own codes; held-out frames use the novel-pose code fitted for
// the same pose in stage 2.
DeformationContext frame_context(const Checkpoint& ckpt, const SceneDataset& scene, int frame, double padding) {
  if (frame < 0 || frame >= scene.frame_count()) throw UsageError("no frame " + std::to_string(frame));
  if (is_training_frame(scene, frame)) {
    return DeformationContext::make(scene.body, scene.poses[static_cast<std::size_t>(frame)], LatentRef::frame(frame),
                                    frame, padding);
  }
  const int idx = ckpt.novel ? novel_index_for_pose(*ckpt.novel, scene.poses[static_cast<std::size_t>(frame)]) : -1;
  if (idx < 0) {
    throw UsageError("frame " + std::to_string(frame) + " is held out of training; fit its pose with animate-fit first");
  }
  return novel_pose_context(scene.body, *ckpt.novel, idx, padding);
}

Checkpoint open_checkpoint(const Globals& g, const SceneDataset& scene, const char* command) {
  require(g.checkpoint, "--checkpoint", command);
  Checkpoint c = load_checkpoint(g.checkpoint);
  if (c.model.config().part_count != scene.body.skeleton.part_count() ||
      c.model.config().frame_count != scene.frame_count()) {
    throw StructuralError("checkpoint was trained on a different scene (part or frame count differs)");
  }
  return c;
}

const Camera& camera_at(const SceneDataset& scene, int camera) {
  if (camera < 0 || camera >= static_cast<int>(scene.cameras.size())) {
    throw UsageError("no camera " + std::to_string(camera));
  }
  return scene.cameras[static_cast<std::size_t>(camera)];
}

RenderSettings render_settings(const RunConfig& rc, const Globals& g) {
  RenderSettings rs = rc.render;
  if (g.seed) rs.seed = *g.seed;
  return rs;
}

void cmd_synth(const Globals& g) {
  require(g.out, "--out", "synth");
  SyntheticConfig sc = run_config(g).synth;
  if (g.seed) sc.seed = *g.seed;
  const SceneDataset scene = generate_synthetic_scene(sc);
  save_scene(scene, g.out);
  std::printf("wrote %zu views of %d frames to %s\n", scene.frames.size(), scene.frame_count(), g.out.c_str());
}

void cmd_train(const Globals& g, const std::string& scene_dir, long iterations) {
  require(scene_dir, "--scene", "train");
  require(g.out, "--out", "train");
  RunConfig rc = run_config(g);
  if (g.seed) rc.train.seed = *g.seed;
  if (iterations >= 0) rc.train.iterations_stage1 = iterations;
  const SceneDataset scene = load_scene(scene_dir);
  ensure_parent(g.out);
  TrainResult r = train_stage1(scene, rc.model, rc.train, logging_hooks("stage1", g.out));
  save_checkpoint(g.out, r.model, &r.adam, rc.train.iterations_stage1, nullptr);
  write_text(g.out + ".trace.csv", trace_csv(r.trace, "loss_rgb", "loss_nsf"));
  std::printf("wrote %s\n", g.out.c_str());
}

void cmd_animate_fit(const Globals& g, const std::string& scene_dir, const std::string& poses_path, long iterations) {
  require(scene_dir, "--scene", "animate-fit");
  require(g.out, "--out", "animate-fit");
  RunConfig rc = run_config(g);
  if (g.seed) rc.train.seed = *g.seed;
  if (iterations >= 0) rc.train.iterations_stage2 = iterations;
  const SceneDataset scene = load_scene(scene_dir);
  const Checkpoint ckpt = open_checkpoint(g, scene, "animate-fit");
  if (ckpt.model.novel_count() > 0) throw UsageError("checkpoint already holds novel-pose codes");
  std::vector<Pose> poses;
  if (poses_path.empty()) {
    for (const int f : scene.split.test_frames) poses.push_back(scene.poses[static_cast<std::size_t>(f)]);
  } else {
    poses = load_poses(poses_path, scene.body.skeleton.part_count());
  }
  NovelPoseSet novel;
  ensure_parent(g.out);
  TrainResult r = train_stage2(ckpt.model, scene, poses, rc.train, &novel, logging_hooks("stage2", g.out));
  save_checkpoint(g.out, r.model, &r.adam, rc.train.iterations_stage2, &novel);
  write_text(g.out + ".trace.csv", trace_csv(r.trace, "loss_rgb", "loss_new"));
  std::printf("wrote %s with %zu novel poses\n", g.out.c_str(), poses.size());
}

void cmd_render(const Globals& g, const std::string& scene_dir, int camera, int frame, int pose) {
  require(scene_dir, "--scene", "render");
  require(g.out, "--out", "render");
  if ((frame >= 0) == (pose >= 0)) throw UsageError("render needs exactly one of --frame or --pose");
  const RunConfig rc = run_config(g);
  const SceneDataset scene = load_scene(scene_dir);
  const Checkpoint ckpt = open_checkpoint(g, scene, "render");
  DeformationContext ctx = [&] {
    if (frame >= 0) return frame_context(ckpt, scene, frame, rc.train.bounds_padding);
    if (!ckpt.novel) throw UsageError("checkpoint has no novel poses; run animate-fit first");
    return novel_pose_context(scene.body, *ckpt.novel, pose, rc.train.bounds_padding);
  }();
  ensure_parent(g.out);
  write_png(g.out, render_image(ckpt.model, ctx, camera_at(scene, camera), render_settings(rc, g)));
  std::printf("wrote %s\n", g.out.c_str());
}

void cmd_animate(const Globals& g, const std::string& scene_dir, int camera) {
  require(scene_dir, "--scene", "animate");
  require(g.out, "--out", "animate");
  const RunConfig rc = run_config(g);
  const SceneDataset scene = load_scene(scene_dir);
  const Checkpoint ckpt = open_checkpoint(g, scene, "animate");
  if (!ckpt.novel) throw UsageError("checkpoint has no novel poses; run animate-fit first");
  fs::create_directories(g.out);
  const Camera& cam = camera_at(scene, camera);
  for (int i = 0; i < static_cast<int>(ckpt.novel->poses.size()); ++i) {
    const DeformationContext ctx = novel_pose_context(scene.body, *ckpt.novel, i, rc.train.bounds_padding);
    char name[32];
    std::snprintf(name, sizeof(name), "pose_%03d.png", i);
    write_png(fs::path(g.out) / name, render_image(ckpt.model, ctx, cam, render_settings(rc, g)));
  }
  std::printf("wrote %zu frames to %s\n", ckpt.novel->poses.size(), g.out.c_str());
}

void cmd_mesh(const Globals& g, const std::string& scene_dir, int frame, int pose, double voxel, double iso) {
  require(scene_dir, "--scene", "mesh");
  require(g.out, "--out", "mesh");
  RunConfig rc = run_config(g);
  if (voxel > 0.0) rc.mesh.voxel_size = voxel;
  if (!std::isnan(iso)) rc.mesh.iso = iso;
  const SceneDataset scene = load_scene(scene_dir);
  const Checkpoint ckpt = open_checkpoint(g, scene, "mesh");
  const ExtractedMesh canonical = extract_canonical_mesh(ckpt.model, scene.body, rc.mesh);
  if (canonical.mesh.empty()) throw NumericError("no surface at iso " + std::to_string(rc.mesh.iso));
  fs::path out(g.out);
  ensure_parent(out);
  if (frame < 0 && pose < 0) {
    write_extracted_mesh(out, fs::path(out).replace_extension(".weights.json"), canonical, scene.body.part_names);
  } else {
    const Pose& target = [&]() -> const Pose& {
      if (frame >= 0) {
        if (frame >= scene.frame_count()) throw UsageError("no frame " + std::to_string(frame));
        return scene.poses[static_cast<std::size_t>(frame)];
      }
      if (!ckpt.novel || pose >= static_cast<int>(ckpt.novel->poses.size())) throw UsageError("no novel pose " + std::to_string(pose));
      return ckpt.novel->poses[static_cast<std::size_t>(pose)];
    }();
    write_obj(out, repose_mesh(canonical, forward_kinematics(scene.body.skeleton, target)));
  }
  std::printf("wrote %s (%zu vertices)\n", g.out.c_str(), canonical.mesh.vertices.size());
}

void cmd_eval(const Globals& g, const std::string& scene_dir, const std::string& predictions, const std::string& views,
              const std::string& save_dir) {
  require(scene_dir, "--scene", "eval");
  if (predictions.empty() == g.checkpoint.empty()) throw UsageError("eval needs exactly one of --predictions or --checkpoint");
  const RunConfig rc = run_config(g);
  const SceneDataset scene = load_scene(scene_dir);
  std::vector<const Frame*> selected;
  for (const Frame& f : scene.frames) {
    const bool train_frame = is_training_frame(scene, f.index);
    bool train_cam = false;
    for (const int c : scene.split.train_cameras) train_cam = train_cam || c == f.camera;
    if ((views == "novel-view" && train_frame && !train_cam) || (views == "novel-pose" && !train_frame) || views == "all") {
      selected.push_back(&f);
    }
  }
  if (selected.empty()) throw UsageError("no views selected by --views " + views);
  std::optional<Checkpoint> ckpt;
  if (!g.checkpoint.empty()) ckpt = open_checkpoint(g, scene, "eval");
  if (!save_dir.empty()) fs::create_directories(save_dir);

  std::vector<ImageMetrics> rows;
  for (const Frame* f : selected) {
    Image pred;
    if (ckpt) {
      const DeformationContext ctx = frame_context(*ckpt, scene, f->index, rc.train.bounds_padding);
      pred = render_image(ckpt->model, ctx, camera_at(scene, f->camera), render_settings(rc, g)).leading_channels(3);
      // Compare what would be saved, so CLI numbers match re-reading the PNGs.
      pred = quantized(pred);
      if (!save_dir.empty()) {
        // Same layout as the scene, so the directory can be passed back as --predictions.
        const fs::path target = fs::path(save_dir) / f->image_path;
        ensure_parent(target);
        write_png(target, pred);
      }
    } else {
      pred = read_png(fs::path(predictions) / f->image_path, 3);
    }
    if (!pred.same_shape(f->image)) throw SizeError("prediction for " + f->image_path + " has the wrong size");
    rows.push_back({f->image_path, psnr(pred, f->image), ssim(pred, f->image)});
  }
  const MetricReport report = MetricReport::from(std::move(rows));
  if (g.out.empty()) {
    std::cout << report.csv();
  } else {
    ensure_parent(g.out);
    write_text(g.out + ".csv", report.csv());
    write_text(g.out + ".json", report.json());
  }
  std::fprintf(stderr, "%zu views: mean PSNR %.3f dB, mean SSIM %.4f\n", report.images.size(), report.mean_psnr,
               report.mean_ssim);
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Skinned radiance fields of articulated bodies: synthesis, training, rendering, meshing"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);
  Globals g;
  std::uint64_t seed = 0;
  app.add_option("--config", g.config, "JSON run configuration")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "Seed overriding the configuration");
  app.add_option("--checkpoint", g.checkpoint, "Model checkpoint to read");
  app.add_option("--out", g.out, "Output path");
  app.fallthrough();

  std::string scene_dir, poses_path, predictions, views = "novel-view", save_dir;
  long iterations = -1;
  int camera = 0, frame = -1, pose = -1;
  double voxel = 0.0, iso = std::nan("");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic articulated scene into --out");
  auto* train = app.add_subcommand("train", "Stage 1: fit the fields to a scene, checkpoint to --out");
  train->add_option("--scene", scene_dir, "Scene directory")->required();
  train->add_option("--iterations", iterations, "Override the stage-1 iteration count");
  auto* fit = app.add_subcommand("animate-fit", "Stage 2: fit weight codes for novel poses, checkpoint to --out");
  fit->add_option("--scene", scene_dir, "Scene directory")->required();
  fit->add_option("--poses", poses_path, "Pose list JSON (default: the scene's held-out frames)");
  fit->add_option("--iterations", iterations, "Override the stage-2 iteration count");
  auto* render = app.add_subcommand("render", "Render one frame or novel pose from one camera to a PNG");
  render->add_option("--scene", scene_dir, "Scene directory")->required();
  render->add_option("--camera", camera, "Camera index");
  render->add_option("--frame", frame, "Frame index");
  render->add_option("--pose", pose, "Novel pose index");
  auto* animate = app.add_subcommand("animate", "Render every novel pose from one camera into --out");
  animate->add_option("--scene", scene_dir, "Scene directory")->required();
  animate->add_option("--camera", camera, "Camera index");
  auto* mesh = app.add_subcommand("mesh", "Extract the canonical mesh (optionally reposed) as OBJ");
  mesh->add_option("--scene", scene_dir, "Scene directory")->required();
  mesh->add_option("--frame", frame, "Repose to this frame's pose");
  mesh->add_option("--pose", pose, "Repose to this novel pose");
  mesh->add_option("--voxel", voxel, "Voxel size in meters");
  mesh->add_option("--iso", iso, "Density threshold");
  auto* eval = app.add_subcommand("eval", "PSNR/SSIM against held-out images; report to --out.csv/.json");
  eval->add_option("--scene", scene_dir, "Scene directory")->required();
  eval->add_option("--predictions", predictions, "Directory laid out like the scene (images/...)");
  eval->add_option("--views", views, "novel-view, novel-pose or all")
      ->check(CLI::IsMember({"novel-view", "novel-pose", "all"}));
  eval->add_option("--save", save_dir, "Also write the rendered predictions here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  if (seed_opt->count() > 0) g.seed = seed;

  try {
    if (synth->parsed()) cmd_synth(g);
    if (train->parsed()) cmd_train(g, scene_dir, iterations);
    if (fit->parsed()) cmd_animate_fit(g, scene_dir, poses_path, iterations);
    if (render->parsed()) cmd_render(g, scene_dir, camera, frame, pose);
    if (animate->parsed()) cmd_animate(g, scene_dir, camera);
    if (mesh->parsed()) cmd_mesh(g, scene_dir, frame, pose, voxel, iso);
    if (eval->parsed()) cmd_eval(g, scene_dir, predictions, views, save_dir);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}

}  // namespace skinrf
