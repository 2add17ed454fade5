#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rest/core/manifest.hpp"
#include "rest/loop/rest_loop.hpp"
#include "rest/synth/synthworld.hpp"

namespace rest {

// A dataset directory: manifest.json, frame_captions.jsonl and world.json.
// world.json names the text encoder:
//   {"kind": "stub", "dim", "seed", "wording_noise"}  or
//   {"kind": "stream", "command", "dim"}
// and optionally the seen/unseen class split and order pairs.
struct WorldDir {
  std::filesystem::path dir;
  DatasetManifest manifest;
  nlohmann::json text_encoder;
  std::vector<std::string> seen_classes;
  std::vector<std::string> unseen_classes;
  std::vector<std::pair<std::string, std::string>> order_pairs;

  std::unique_ptr<TextEncoder> make_text_encoder() const;
  std::unique_ptr<FrameCaptioner> make_captioner() const;
};

// Throws kMissingFile, kParse or kConfig.
WorldDir load_world_dir(const std::filesystem::path& dir);

// A dataset held in memory with its providers.
struct Dataset {
  const DatasetManifest* manifest = nullptr;
  TextEncoder* text = nullptr;
  FrameCaptioner* captioner = nullptr;
  std::vector<std::string> seen_classes;
  std::vector<std::string> unseen_classes;
  std::vector<std::pair<std::string, std::string>> order_pairs;
};

struct SupervisionResult {
  EvalReport rest_unseen;   // generalized protocol
  EvalReport label_unseen;  // generalized protocol
  double label_seen_vocab_fraction = 0.0;  // content words of unseen-video captions
  std::size_t label_content_words = 0;
  std::map<std::string, std::string> label_captions;
};

// REST on every video against a captioner trained on seen-class videos with
// the class name as target. Both are evaluated on unseen-class videos.
SupervisionResult compare_supervision(const Dataset& data, const RestConfig& config,
                                      std::size_t label_epochs);

// Probe accuracy on every order pair, averaged.
double order_pair_probe(const Dataset& data, const RestConfig& config, std::size_t epochs);

struct AblationRow {
  std::string value;
  nlohmann::json metrics;
};

struct Ablation {
  std::string axis;
  std::vector<AblationRow> rows;

  nlohmann::json to_json() const;
  std::string table() const;
};

// Axes: K, H (values are integers), rounds (retrieval rounds at fixed total
// epochs), adapter (on/off), supervision (pseudo/label). Every run shares the
// base config's seed. Throws kConfig for an unknown axis or value.
Ablation run_ablation(const Dataset& data, const nlohmann::json& base_config, const std::string& axis,
                      const std::vector<std::string>& values);

}  // namespace rest
