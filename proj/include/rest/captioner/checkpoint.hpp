#pragma once

#include <cstdint>
#include <filesystem>

#include <json.hpp>

#include "rest/captioner/model.hpp"

namespace rest {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Binary layout: "RSTC", u32 version, u32 tensor count; per tensor: u32 name
// length, UTF-8 name, u32 rank (2), u32 rows, u32 cols, rows*cols float32.
// All integers little-endian. A sidecar `<path>.json` carries the captioner
// config, the adapter flag, the round number and any `extra` fields.
void save_checkpoint(const ToyCaptioner& model, const std::filesystem::path& path, int round,
                     const nlohmann::json& extra = nlohmann::json::object());

struct LoadedCheckpoint {
  ToyCaptioner model;
  int round = 0;
  nlohmann::json sidecar;
};

// Throws kMissingFile, kParse (bad magic/version/truncation) or kDimMismatch
// (tensor name or shape disagrees with the sidecar config).
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

// FNV-1a over the file bytes.
std::uint64_t file_hash(const std::filesystem::path& path);

nlohmann::json to_json(const CaptionerConfig& c);
CaptionerConfig captioner_config_from_json(const nlohmann::json& j);

}  // namespace rest
