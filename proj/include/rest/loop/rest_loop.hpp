#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "rest/cache/caption_cache.hpp"
#include "rest/captioner/model.hpp"
#include "rest/captioner/trainer.hpp"
#include "rest/core/manifest.hpp"
#include "rest/core/random.hpp"
#include "rest/core/tokenizer.hpp"
#include "rest/eval/clip_tam.hpp"
#include "rest/similarity/similarity.hpp"
#include "rest/synth/synthworld.hpp"

namespace rest {

struct RestConfig {
  std::size_t K = 3;
  std::size_t H = 2000;
  std::size_t R = 10;             // epochs between retrieval rounds
  std::size_t total_epochs = 60;
  std::size_t beam = 3;
  std::size_t batch_size = 16;
  std::size_t max_caption_tokens = 16;
  double label_smoothing = 0.2;
  bool adapter_enabled = true;
  std::string prompt = "a video of";
  std::vector<std::string> init_prompts = default_prompts();
  OptimizerConfig optimizer;
  int model_dim = 64;
  int ffn_dim = 128;
  int layers = 2;
  std::size_t eval_k = 5;
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  std::size_t rounds() const { return R == 0 ? 0 : total_epochs / R; }
  // Throws kConfig.
  void validate() const;
  // Small world, few epochs.
  static RestConfig synthetic_preset();
};

nlohmann::json to_json(const RestConfig& c);
// Missing keys keep their defaults; unknown keys throw kConfig.
RestConfig rest_config_from_json(const nlohmann::json& j);

// Applies "a.b.c=value" to `config`. The key path must already exist; the
// value is parsed as JSON when possible, otherwise taken as a string.
void apply_override(nlohmann::json& config, std::string_view assignment);

struct Providers {
  TextEncoder* text = nullptr;
  FrameCaptioner* captioner = nullptr;
};

// Per video and frame, the caption of the prompt whose output scores highest
// against the frame embedding (ties: earlier prompt).
std::vector<std::vector<std::string>> initial_frame_captions(const DatasetManifest& manifest,
                                                             FrameCaptioner& captioner,
                                                             const std::vector<std::string>& prompts,
                                                             TextEmbeddingCache& texts);

// Word list of the initial captions plus the prompts.
Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& captions,
                            const std::vector<std::string>& prompts);

std::map<std::string, std::string> manifest_labels(const DatasetManifest& manifest);

struct RestState {
  const DatasetManifest* manifest = nullptr;
  RestConfig config;
  TextEmbeddingCache* texts = nullptr;

  std::vector<UnitEmbedding> videos;  // f_C, computed once
  NeighborIndex index;                // computed once
  std::vector<std::vector<std::string>> initial_captions;
  Vocabulary vocab;
  std::vector<int> prompt_ids;
  ToyCaptioner model;
  OptimizerState optimizer;
  OptimizerConfig schedule;
  Rng rng{0};
  CaptionCache cache;

  int round = 0;
  std::size_t epoch = 0;
  std::vector<nlohmann::json> metrics;
  std::vector<CaptionCache> cache_history;            // [0] = initial
  std::vector<std::vector<std::string>> generated;    // per completed round
  std::size_t video_embedding_passes = 0;
  std::size_t index_builds = 0;
  std::size_t mutations_during_training = 0;

  RelevanceContext relevance() const;
};

// Setup: video embeddings, neighbor index, per-frame initial
// captions, initial caches, fresh captioner.
RestState init_rest(const DatasetManifest& manifest, Providers providers, TextEmbeddingCache& texts,
                    const RestConfig& config);

// `epochs` passes over all videos in seeded order, each supervised by a
// caption drawn uniformly from its cache. Caches are not touched.
void train_phase(RestState& state, std::size_t epochs);

// Generates one caption per video with the frozen model, appends it, refreshes
// every cache from the frozen neighbor index and advances the round.
void retrieval_round(RestState& state);

// Captions of the current model for every video (prompt stripped).
std::vector<std::string> generate_all(const RestState& state);
std::vector<std::string> generate_all(const ToyCaptioner& model, const DatasetManifest& manifest,
                                      const Vocabulary& vocab, const std::string& prompt,
                                      std::size_t beam, std::size_t max_tokens, std::size_t threads);

struct RunArtifacts {
  ToyCaptioner model;
  Vocabulary vocab;
  std::vector<std::vector<std::string>> initial_captions;
  std::vector<CaptionCache> cache_history;
  std::vector<std::vector<std::string>> generated;
  std::vector<nlohmann::json> metrics;
  std::map<std::string, std::string> final_captions;
  std::map<std::string, std::string> init_captions;  // centre-frame initial caption per video
  std::optional<EvalReport> final_eval;
  std::optional<EvalReport> init_eval;
  std::size_t rounds_completed = 0;
  std::size_t epochs_completed = 0;
  std::size_t video_embedding_passes = 0;
  std::size_t index_builds = 0;
  std::size_t mutations_during_training = 0;
  std::vector<std::filesystem::path> checkpoints;
};

struct RunOptions {
  std::optional<std::filesystem::path> run_dir;
  nlohmann::json extra_config = nlohmann::json::object();  // merged into config.json
};

// The full loop. With a run directory it writes config.json, metrics.jsonl,
// caches/round_<n>.jsonl, checkpoints/round_<n>.bin (+ .json), and
// final_captions.jsonl. A non-finite loss or provider failure writes
// checkpoints/abort.bin and caches/abort.jsonl, then rethrows.
RunArtifacts run_rest(const DatasetManifest& manifest, Providers providers, const RestConfig& config,
                      const RunOptions& options = {});

// A captioner trained from scratch on videos whose label is in
// `train_classes`, with the class name as target caption.
struct LabelModel {
  ToyCaptioner model;
  std::vector<double> losses;
};
LabelModel train_label_model(const DatasetManifest& manifest, const Vocabulary& vocab,
                             const std::vector<std::string>& train_classes, const RestConfig& config,
                             std::size_t epochs);

// Supervised probe on one order pair: train on half of the pair's videos with
// class-name captions, classify the generated captions of the other half
// against the two class names.
struct ProbeResult {
  double accuracy = 0.0;
  std::size_t train_videos = 0;
  std::size_t test_videos = 0;
};
ProbeResult adapter_probe(const DatasetManifest& manifest, const std::string& class_a,
                          const std::string& class_b, TextEmbeddingCache& texts,
                          const RestConfig& config, std::size_t epochs);

}  // namespace rest
