#pragma once

// JSON binding of the configuration structs, shared by the config file and checkpoints.

#include "json_io.hpp"
#include "skinrf/config.hpp"

namespace skinrf::jsonio {

json to_json(const ModelConfig& c);
json to_json(const TrainConfig& c);
json to_json(const SyntheticConfig& c);
json to_json(const RenderSettings& c);
json to_json(const MeshConfig& c);

// Overwrites the fields present in `r`; unknown keys throw ParseError.
void read_into(const Reader& r, ModelConfig& c);
void read_into(const Reader& r, TrainConfig& c);
void read_into(const Reader& r, SyntheticConfig& c);
void read_into(const Reader& r, RenderSettings& c);
void read_into(const Reader& r, MeshConfig& c);

}  // namespace skinrf::jsonio
