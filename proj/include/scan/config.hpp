#pragma once

// Plain-text configuration: one `key = value` per line, dotted section keys,
// `#` starts a comment. Lists are comma separated.
//
//   voxel.scale = 0.2, 0.2, 0.1
//   attention.heads = 8

#include <filesystem>
#include <string>

#include "scan/pipeline.hpp"

namespace scan {

struct RunConfig {
  PipelineConfig pipeline;
  std::size_t min_points = 0;  // metrics: drop segments smaller than this; 0 disables
};

// Throws ConfigError naming the line for unknown keys or malformed values.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

// Round-trippable dump of every key.
std::string format_config(const RunConfig& cfg);

}  // namespace scan
