#pragma once

// Binary checkpoint: magic, format version, a JSON header (model config, parameter layout,
// optimizer scalars, iteration, novel poses, payload checksum) and then the raw little-endian
// doubles of the parameters and, when present, the Adam moments.

#include <filesystem>
#include <optional>

#include "skinrf/model.hpp"
#include "skinrf/optim.hpp"
#include "skinrf/training.hpp"

namespace skinrf {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  Model model;
  std::optional<AdamState> adam;
  long iteration = 0;
  std::optional<NovelPoseSet> novel;
};

// Written to a temporary file and renamed, so a crash never leaves a half-written checkpoint.
void save_checkpoint(const std::filesystem::path& path, const Model& model, const AdamState* adam, long iteration,
                     const NovelPoseSet* novel);
// Throws ParseError on a bad magic, version, header, size or checksum, and StructuralError when
// the stored layout does not match the stored model config.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace skinrf
