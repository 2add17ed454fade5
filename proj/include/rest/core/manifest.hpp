#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "rest/core/embedding.hpp"

namespace rest {

// Captioner-side input for one video: T frames of S spatial tokens plus one
// class token per frame, each of feature_dim values. Row-major storage:
// spatial[(t * S + s) * dim + c], cls[t * dim + c].
struct FrameFeatureTensor {
  std::size_t frames = 0;
  std::size_t spatial = 0;
  std::size_t dim = 0;
  std::vector<double> spatial_values;
  std::vector<double> cls_values;

  FrameFeatureTensor() = default;
  FrameFeatureTensor(std::size_t t, std::size_t s, std::size_t d)
      : frames(t), spatial(s), dim(d), spatial_values(t * s * d, 0.0), cls_values(t * d, 0.0) {}

  double& at(std::size_t t, std::size_t s, std::size_t c) {
    return spatial_values[(t * spatial + s) * dim + c];
  }
  double at(std::size_t t, std::size_t s, std::size_t c) const {
    return spatial_values[(t * spatial + s) * dim + c];
  }
  double& cls(std::size_t t, std::size_t c) { return cls_values[t * dim + c]; }
  double cls(std::size_t t, std::size_t c) const { return cls_values[t * dim + c]; }

  // Throws kDimMismatch when buffer sizes disagree with the shape, kNumeric on
  // non-finite values.
  void validate() const;
};

struct VideoRecord {
  std::string id;
  std::size_t frame_count = 0;
  std::string embedding_file;
  std::string feature_file;
  std::optional<std::string> label;  // evaluation only

  std::vector<UnitEmbedding> frame_embeddings;  // retriever space, length T
  FrameFeatureTensor features;                  // captioner space
};

struct DatasetManifest {
  std::size_t dim = 0;
  std::size_t feature_dim = 0;
  std::size_t spatial_tokens = 0;
  std::vector<std::string> classes;
  std::vector<VideoRecord> records;
  std::filesystem::path root;
  // Non-fatal findings (e.g. embeddings renormalized on load).
  std::vector<std::string> warnings;

  std::size_t size() const noexcept { return records.size(); }
  std::optional<std::size_t> index_of(const std::string& id) const;

 private:
  std::unordered_map<std::string, std::size_t> index_;
  friend DatasetManifest load_manifest(const std::filesystem::path& path);
  friend void finalize_manifest(DatasetManifest& manifest);
};

// Rebuilds the id lookup and checks the invariants of an in-memory manifest.
void finalize_manifest(DatasetManifest& manifest);

// Reads the JSON manifest and every referenced blob. Feature blobs hold
// T * (S + 1) rows per video: for each frame, S spatial tokens then the class
// token. Errors: kMissingFile (manifest), kMissingBlob, kDimMismatch,
// kDuplicateId, kParse.
DatasetManifest load_manifest(const std::filesystem::path& path);

// Writes the manifest JSON and the blobs it references (paths relative to
// the manifest's directory).
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

}  // namespace rest
