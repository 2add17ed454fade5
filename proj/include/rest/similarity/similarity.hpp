#pragma once

#include <cstddef>
#include <filesystem>
#include <mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "rest/core/embedding.hpp"

namespace rest {

// Cosine similarity of two videos in the frozen retriever space.
double video_video_similarity(const UnitEmbedding& video_a, const UnitEmbedding& video_b);
// Cosine similarity of a video and a caption embedding.
double video_text_similarity(const UnitEmbedding& video, const UnitEmbedding& text);

struct Neighbor {
  std::size_t index = 0;
  double score = 0.0;

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

// Per-video list of the H most similar videos, itself first.
class NeighborIndex {
 public:
  NeighborIndex() = default;
  NeighborIndex(std::vector<std::vector<Neighbor>> rows, std::size_t h)
      : rows_(std::move(rows)), h_(h) {}

  std::size_t size() const noexcept { return rows_.size(); }
  std::size_t h() const noexcept { return h_; }
  // Throws kUnknownId for an out-of-range row.
  std::span<const Neighbor> neighbors(std::size_t video) const;

  // `video_id` -> [[id, score], ...]
  void dump_json(const std::filesystem::path& path, std::span<const std::string> ids) const;

 private:
  std::vector<std::vector<Neighbor>> rows_;
  std::size_t h_ = 0;
};

// Exact blocked search. Row i holds i first, then the H-1 highest-scoring
// other videos (ties by ascending index); length min(H, N).
NeighborIndex build_neighbor_index(std::span<const UnitEmbedding> embeddings, std::size_t h,
                                   std::size_t threads = 1);

// Stand-in for a frozen text encoder.
class TextEncoder {
 public:
  virtual ~TextEncoder() = default;
  virtual std::size_t dim() const = 0;
  // Throws kProvider (or any rest::Error) on failure.
  virtual UnitEmbedding encode(const std::string& caption) = 0;
};

// Memoizes text embeddings so each distinct caption reaches the encoder once
// per run. Misses are serialized through one writer lock.
class TextEmbeddingCache {
 public:
  explicit TextEmbeddingCache(TextEncoder& encoder) : encoder_(&encoder) {}

  // The provider is invoked only for captions not yet cached, once each even
  // when repeated within the batch. Provider errors are rethrown with the
  // caption named.
  std::vector<UnitEmbedding> embed_batch(std::span<const std::string> captions);
  UnitEmbedding embed(const std::string& caption);

  std::size_t provider_calls() const noexcept { return provider_calls_; }
  std::size_t size() const;
  std::size_t dim() const { return encoder_->dim(); }

 private:
  TextEncoder* encoder_;
  mutable std::mutex mutex_;
  std::unordered_map<std::string, UnitEmbedding> entries_;
  std::size_t provider_calls_ = 0;
};

}  // namespace rest
