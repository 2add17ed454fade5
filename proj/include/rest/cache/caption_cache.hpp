#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "rest/core/embedding.hpp"
#include "rest/similarity/similarity.hpp"

namespace rest {

// Captions longer than this are cut at a word boundary on ingestion.
inline constexpr std::size_t kMaxCaptionWords = 30;

enum class Origin { kInit, kSelfGenerated, kRetrieved };

const char* to_string(Origin origin) noexcept;
Origin origin_from_string(const std::string& s);  // throws kParse

struct ScoredCaption {
  std::string text;
  UnitEmbedding embedding;  // empty after load_caches until rehydrated
  double relevance = 0.0;   // against the owning video
  Origin origin = Origin::kInit;
  int round = 0;
};

// Equality over the persisted fields (text, relevance, origin, round).
bool same_record(const ScoredCaption& a, const ScoredCaption& b);

// Lowercased, punctuation-free, single-spaced, at most kMaxCaptionWords words.
std::string canonical_caption(std::string_view text);

// Frozen retriever-side inputs needed to score captions.
struct RelevanceContext {
  std::span<const UnitEmbedding> videos;  // f_C per video
  TextEmbeddingCache* texts = nullptr;
  std::size_t threads = 1;
};

// Per-video ordered pseudo-caption lists.
class CaptionCache {
 public:
  CaptionCache() = default;
  CaptionCache(std::vector<std::string> ids, std::size_t k);

  std::size_t size() const noexcept { return lists_.size(); }
  std::size_t k() const noexcept { return k_; }
  const std::vector<std::string>& ids() const noexcept { return ids_; }
  const std::string& id(std::size_t i) const { return ids_.at(i); }
  // Throws kUnknownId.
  std::size_t index_of(const std::string& id) const;

  const std::vector<ScoredCaption>& entries(std::size_t i) const;
  void set_entries(std::size_t i, std::vector<ScoredCaption> entries);

  // Counts every write (set_entries, append, refresh).
  std::size_t mutation_count() const noexcept { return mutations_; }

  friend bool operator==(const CaptionCache& a, const CaptionCache& b);

 private:
  std::vector<std::string> ids_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::vector<ScoredCaption>> lists_;
  std::size_t k_ = 0;
  std::size_t mutations_ = 0;
};

// Initial pools are each video's per-frame captions (deduplicated), followed
// by one retrieval refresh against a snapshot of all initial pools so every
// list ends with at most K entries. Throws kInvalidArgument for a video
// without captions.
CaptionCache init_caches(const std::vector<std::string>& ids,
                         const std::vector<std::vector<std::string>>& per_frame_captions,
                         const NeighborIndex& index, std::size_t k, const RelevanceContext& ctx);

// Concatenation of the lists of video i's neighbors, neighbor order preserved.
std::vector<ScoredCaption> build_candidate_pool(std::size_t video, const NeighborIndex& index,
                                                const CaptionCache& cache);

// Top-K of dedup(resident list ++ pool) by relevance against video i,
// descending, ties by insertion order. Resident entries keep their origin and
// round; newcomers become kRetrieved stamped with `round`. Returns the new list
// without writing it.
std::vector<ScoredCaption> select_top_k(std::size_t video, std::span<const ScoredCaption> resident,
                                        std::span<const ScoredCaption> pool, std::size_t k,
                                        int round, const RelevanceContext& ctx);

// Applies select_top_k to video i and stores the result.
const std::vector<ScoredCaption>& refresh_cache(std::size_t video,
                                                std::span<const ScoredCaption> pool,
                                                CaptionCache& cache, int round,
                                                const RelevanceContext& ctx);

// Rebuilds every pool from one frozen snapshot, then refreshes every video.
void refresh_all(CaptionCache& cache, const NeighborIndex& index, int round,
                 const RelevanceContext& ctx);

// Adds a self-generated caption to video i (length may reach K+1). A caption
// already resident is re-stamped instead of duplicated. Empty captions are
// skipped with a warning; returns whether anything changed.
bool append_generated(CaptionCache& cache, std::size_t video, const std::string& caption,
                      int round, const RelevanceContext& ctx);

// Fills in embeddings (and checks relevance) for captions read from disk.
void rehydrate(CaptionCache& cache, const RelevanceContext& ctx);

// JSON Lines: {"id", "captions": [{"text", "score", "origin", "round"}]}.
void save_caches(const CaptionCache& cache, const std::filesystem::path& path);
// Throws kParse naming the offending line.
CaptionCache load_caches(const std::filesystem::path& path, std::size_t k);

}  // namespace rest
