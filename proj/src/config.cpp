#include "skinrf/config.hpp"

#include <set>

#include "config_json.hpp"
#include "skinrf/error.hpp"

namespace skinrf {
namespace jsonio {
namespace {

// Each struct lists its fields once; the same list drives reading and writing.
template <typename F>
void fields(ModelConfig& c, F&& f) {
  f("part_count", c.part_count);
  f("frame_count", c.frame_count);
  f("latent_dim", c.latent_dim);
  f("density_depth", c.density_depth);
  f("density_width", c.density_width);
  f("color_width", c.color_width);
  f("weight_depth", c.weight_depth);
  f("weight_width", c.weight_width);
  f("skip_layer", c.skip_layer);
  f("position_frequencies", c.position_frequencies);
  f("direction_frequencies", c.direction_frequencies);
  f("density_activation", c.density_activation);
  f("residual_bias", c.residual_bias);
  f("latent_init_stddev", c.latent_init_stddev);
  f("deformation", c.deformation);
}

template <typename F>
void fields(TrainConfig& c, F&& f) {
  f("iterations_stage1", c.iterations_stage1);
  f("iterations_stage2", c.iterations_stage2);
  f("ray_batch", c.ray_batch);
  f("chunk_rays", c.chunk_rays);
  f("nsf_point_batch", c.nsf_point_batch);
  f("rgb_weight", c.rgb_weight);
  f("nsf_weight", c.nsf_weight);
  f("rgb_mse", c.rgb_mse);
  f("lr_start", c.lr_start);
  f("lr_end", c.lr_end);
  f("samples_per_ray", c.samples_per_ray);
  f("mask_dilation", c.mask_dilation);
  f("log_every", c.log_every);
  f("bounds_padding", c.bounds_padding);
  f("train_weight_net_stage2", c.train_weight_net_stage2);
  f("weight_net_warmup", c.weight_net_warmup);
  f("seed", c.seed);
}

template <typename F>
void fields(SyntheticConfig& c, F&& f) {
  f("part_count", c.body.part_count);
  f("cell_size", c.body.cell_size);
  f("blend_radius", c.body.blend_radius);
  f("weight_falloff", c.body.weight_falloff);
  f("width", c.width);
  f("height", c.height);
  f("camera_count", c.camera_count);
  f("train_camera_count", c.train_camera_count);
  f("train_frames", c.train_frames);
  f("test_frames", c.test_frames);
  f("camera_distance", c.camera_distance);
  f("camera_height", c.camera_height);
  f("fov_y", c.fov_y);
  f("density", c.density);
  f("motion", c.motion);
  f("texture", c.texture);
  f("seed", c.seed);
}

template <typename F>
void fields(RenderSettings& c, F&& f) {
  f("batch_rays", c.batch_rays);
  f("threads", c.threads);
  f("samples", c.samples.samples);
  f("stratified", c.samples.stratified);
  f("seed", c.seed);
}

template <typename F>
void fields(MeshConfig& c, F&& f) {
  f("voxel_size", c.voxel_size);
  f("iso", c.iso);
  f("padding", c.padding);
  f("max_grid_bytes", c.max_grid_bytes);
  f("auto_coarsen", c.auto_coarsen);
  f("batch_points", c.batch_points);
}

void read_value(const Reader& r, int& v) { v = r.integer(); }
void read_value(const Reader& r, long& v) { v = static_cast<long>(r.integer64()); }
void read_value(const Reader& r, double& v) { v = r.number(); }
void read_value(const Reader& r, bool& v) { v = r.boolean(); }
void read_value(const Reader& r, std::uint64_t& v) {
  if (!r.raw().is_number_unsigned()) r.fail("expected a non-negative integer");
  v = r.raw().get<std::uint64_t>();
}
void read_value(const Reader& r, DensityActivation& v) {
  const std::string s = r.string();
  if (s == "softplus") {
    v = DensityActivation::kSoftplus;
  } else if (s == "relu") {
    v = DensityActivation::kRelu;
  } else {
    r.fail("expected \"softplus\" or \"relu\", got \"" + s + "\"");
  }
}

json write_value(DensityActivation v) { return v == DensityActivation::kRelu ? "relu" : "softplus"; }
template <typename T>
json write_value(T v) {
  return v;
}

template <typename Config>
json write(const Config& c) {
  json j = json::object();
  fields(const_cast<Config&>(c), [&](const char* key, auto& v) { j[key] = write_value(v); });
  return j;
}

template <typename Config>
void read(const Reader& r, Config& c) {
  if (!r.raw().is_object()) r.fail("expected an object");
  std::set<std::string> known;
  fields(c, [&](const char* key, auto& v) {
    known.insert(key);
    if (r.has(key)) read_value(r[key], v);
  });
  for (const auto& item : r.raw().items()) {
    if (!known.count(item.key())) r.fail("unknown key \"" + item.key() + "\"");
  }
}

}  // namespace

json to_json(const ModelConfig& c) { return write(c); }
json to_json(const TrainConfig& c) { return write(c); }
json to_json(const SyntheticConfig& c) { return write(c); }
json to_json(const RenderSettings& c) { return write(c); }
json to_json(const MeshConfig& c) { return write(c); }

void read_into(const Reader& r, ModelConfig& c) { read(r, c); }
void read_into(const Reader& r, TrainConfig& c) { read(r, c); }
void read_into(const Reader& r, SyntheticConfig& c) { read(r, c); }
void read_into(const Reader& r, RenderSettings& c) { read(r, c); }
void read_into(const Reader& r, MeshConfig& c) { read(r, c); }

}  // namespace jsonio

RunConfig parse_run_config(const std::string& text, const std::string& source) {
  const jsonio::json j = jsonio::parse(text, source);
  const jsonio::Reader r(j, "$");
  if (!j.is_object()) r.fail("expected an object");
  RunConfig c;
  for (const auto& item : j.items()) {
    const std::string& key = item.key();
    if (key == "model") {
      jsonio::read_into(r[key], c.model);
    } else if (key == "train") {
      jsonio::read_into(r[key], c.train);
    } else if (key == "synth") {
      jsonio::read_into(r[key], c.synth);
    } else if (key == "render") {
      jsonio::read_into(r[key], c.render);
    } else if (key == "mesh") {
      jsonio::read_into(r[key], c.mesh);
    } else {
      r.fail("unknown section \"" + key + "\"");
    }
  }
  // Out-of-range values in a file are reported like any other malformed input.
  try {
    c.model.validate();
    c.train.validate();
    c.mesh.validate();
  } catch (const Error& e) {
    throw ParseError(source + ": " + e.what());
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  const jsonio::json j = jsonio::read_file(path.string());
  return parse_run_config(j.dump(), path.string());
}

std::string run_config_json(const RunConfig& c) {
  jsonio::json j;
  j["model"] = jsonio::to_json(c.model);
  j["train"] = jsonio::to_json(c.train);
  j["synth"] = jsonio::to_json(c.synth);
  j["render"] = jsonio::to_json(c.render);
  j["mesh"] = jsonio::to_json(c.mesh);
  return j.dump(2) + "\n";
}

}  // namespace skinrf
