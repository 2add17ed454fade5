#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "rest/core/embedding.hpp"
#include "rest/core/manifest.hpp"
#include "rest/similarity/similarity.hpp"

namespace rest {

struct SynthSpec {
  std::size_t classes = 10;
  std::size_t videos = 200;
  std::size_t frames = 8;
  std::size_t dim = 32;          // retriever / text embedding dim
  std::size_t feature_dim = 32;  // captioner input dim
  std::size_t spatial_tokens = 4;
  double noise_sigma = 0.05;     // retriever frame noise
  double feature_noise = 0.3;    // per-frame captioner feature noise
  double video_noise = 0.5;      // per-video captioner feature offset
  double order_pair_fraction = 0.2;
  double p_correct = 0.6;
  // Beta concentration of the per-video caption reliability; 0 makes every
  // frame an independent p_correct draw.
  double clarity_concentration = 0.5;
  // Fraction of videos whose retriever embedding leans towards another class,
  // and the mean weight of that lean.
  double retriever_confusion = 0.0;
  double confusion_strength = 0.8;
  double wording_noise = 0.0;  // see StubTextEncoder
  int unseen_classes = -1;  // -1: ceil(classes / 4)
  std::uint64_t seed = 0;

  std::size_t order_pairs() const;
  std::size_t unseen_count() const;
  // Throws kConfig.
  void validate() const;

  nlohmann::json to_json() const;
  // Unknown keys throw kConfig.
  static SynthSpec from_json(const nlohmann::json& j);
};

// Manual prompts of the initial captioner; the first is also the generation
// prompt.
const std::vector<std::string>& default_prompts();
// Words that never carry class information.
const std::set<std::string>& filler_words();
// Words of `caption` outside the filler set, in order.
std::vector<std::string> content_words(const std::string& caption);

struct SynthWorld {
  SynthSpec spec;
  DatasetManifest manifest;  // labels filled in, classes = class phrases
  std::vector<std::size_t> labels;
  std::vector<std::string> seen_classes;
  std::vector<std::string> unseen_classes;
  std::vector<std::pair<std::size_t, std::size_t>> order_pairs;
  std::vector<double> clarity;             // per video
  std::vector<std::size_t> distractor;     // per video
  std::vector<int> confused_with;          // per video, -1 when clean
  std::uint64_t text_seed = 0;

  const std::vector<std::string>& class_phrases() const { return manifest.classes; }
  std::string ground_truth_caption(std::size_t video) const;
  bool in_order_pair(std::size_t cls) const;
};

// Deterministic in spec.seed; frame data is rounded to float32 so a world
// reloaded from disk is bitwise identical to the in-memory one.
SynthWorld generate_world(const SynthSpec& spec);

// Bag of words: each word maps to a seeded Gaussian unit vector; the caption
// embedding is their normalized sum. Throws kProvider for an empty caption.
class StubTextEncoder : public TextEncoder {
 public:
  // `wording_noise` adds a per-caption random direction of relative size
  // wording_noise to the bag-of-words sum, so different wordings of the same
  // content land at different points.
  StubTextEncoder(std::size_t dim, std::uint64_t seed, double wording_noise = 0.0)
      : dim_(dim), seed_(seed), wording_noise_(wording_noise) {}
  std::size_t dim() const override { return dim_; }
  UnitEmbedding encode(const std::string& caption) override;
  std::vector<double> word_vector(const std::string& word) const;

 private:
  std::size_t dim_;
  std::uint64_t seed_;
  double wording_noise_;
};

// The text encoder a world was generated with.
StubTextEncoder stub_text_encoder(const SynthWorld& world);

// Returns the stored retriever embedding of a frame.
class StubImageEncoder {
 public:
  explicit StubImageEncoder(const SynthWorld& world) : world_(&world) {}
  // Throws kUnknownId.
  const UnitEmbedding& encode(std::size_t video, std::size_t frame) const;

 private:
  const SynthWorld* world_;
};

// Off-the-shelf per-frame captioner.
class FrameCaptioner {
 public:
  virtual ~FrameCaptioner() = default;
  // Throws kUnknownId for an unknown frame or prompt.
  virtual std::string caption(std::size_t video, std::size_t frame, const std::string& prompt) = 0;
};

// With probability given by the video's clarity (mean p_correct) a paraphrase
// of the true class phrase, otherwise of the video's distractor class. The
// correct/distractor draw depends on (seed, video, frame); the wording also
// on the prompt.
class StubInitialCaptioner : public FrameCaptioner {
 public:
  explicit StubInitialCaptioner(const SynthWorld& world) : world_(&world) {}
  std::string caption(std::size_t video, std::size_t frame, const std::string& prompt) override;

 private:
  const SynthWorld* world_;
};

// Per-frame, per-prompt captions read from `frame_captions.jsonl`:
// {"id", "frames": [{prompt: caption, ...}, ...]}, records in manifest order.
class FileFrameCaptioner : public FrameCaptioner {
 public:
  FileFrameCaptioner(const std::filesystem::path& path, const DatasetManifest& manifest);
  std::string caption(std::size_t video, std::size_t frame, const std::string& prompt) override;

 private:
  std::vector<std::vector<nlohmann::json>> frames_;
};

// Writes manifest.json + blobs, frame_captions.jsonl (every default prompt)
// and world.json into `dir`.
void save_world(const SynthWorld& world, const std::filesystem::path& dir);

}  // namespace rest
