#pragma once

// Run configuration file: one JSON object with optional sections model, train, synth, render
// and mesh. Missing keys keep their defaults; unknown keys are rejected so typos surface.

#include <filesystem>
#include <string>

#include "skinrf/mesh_extraction.hpp"
#include "skinrf/model.hpp"
#include "skinrf/renderer.hpp"
#include "skinrf/synthetic.hpp"
#include "skinrf/training.hpp"

namespace skinrf {

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  SyntheticConfig synth;
  RenderSettings render;
  MeshConfig mesh;
};

RunConfig parse_run_config(const std::string& text, const std::string& source = "config");
RunConfig load_run_config(const std::filesystem::path& path);
std::string run_config_json(const RunConfig& config);

}  // namespace skinrf
