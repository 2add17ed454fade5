#include "rest/cache/caption_cache.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <unordered_set>

#include <json.hpp>

#include "rest/core/error.hpp"
#include "rest/core/log.hpp"
#include "rest/core/parallel.hpp"
#include "rest/core/tokenizer.hpp"

namespace rest {

using nlohmann::json;

const char* to_string(Origin origin) noexcept {
  switch (origin) {
    case Origin::kInit: return "init";
    case Origin::kSelfGenerated: return "self_generated";
    case Origin::kRetrieved: return "retrieved";
  }
  return "init";
}

Origin origin_from_string(const std::string& s) {
  if (s == "init") return Origin::kInit;
  if (s == "self_generated") return Origin::kSelfGenerated;
  if (s == "retrieved") return Origin::kRetrieved;
  throw Error(ErrorCode::kParse, "unknown caption origin '" + s + "'");
}

bool same_record(const ScoredCaption& a, const ScoredCaption& b) {
  return a.text == b.text && a.relevance == b.relevance && a.origin == b.origin &&
         a.round == b.round;
}

std::string canonical_caption(std::string_view text) {
  return truncate_words(text, kMaxCaptionWords);
}

CaptionCache::CaptionCache(std::vector<std::string> ids, std::size_t k)
    : ids_(std::move(ids)), lists_(ids_.size()), k_(k) {
  if (k_ < 1) throw Error(ErrorCode::kInvalidArgument, "cache size K must be >= 1");
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (!index_.emplace(ids_[i], i).second) {
      throw Error(ErrorCode::kDuplicateId, "duplicate id: " + ids_[i]);
    }
  }
}

std::size_t CaptionCache::index_of(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw Error(ErrorCode::kUnknownId, "unknown video id: " + id);
  return it->second;
}

const std::vector<ScoredCaption>& CaptionCache::entries(std::size_t i) const {
  if (i >= lists_.size()) {
    throw Error(ErrorCode::kUnknownId, "no cache for video index " + std::to_string(i));
  }
  return lists_[i];
}

void CaptionCache::set_entries(std::size_t i, std::vector<ScoredCaption> entries) {
  if (i >= lists_.size()) {
    throw Error(ErrorCode::kUnknownId, "no cache for video index " + std::to_string(i));
  }
  lists_[i] = std::move(entries);
  ++mutations_;
}

bool operator==(const CaptionCache& a, const CaptionCache& b) {
  if (a.ids_ != b.ids_ || a.lists_.size() != b.lists_.size()) return false;
  for (std::size_t i = 0; i < a.lists_.size(); ++i) {
    const auto& x = a.lists_[i];
    const auto& y = b.lists_[i];
    if (x.size() != y.size()) return false;
    for (std::size_t j = 0; j < x.size(); ++j) {
      if (!same_record(x[j], y[j])) return false;
    }
  }
  return true;
}

namespace {

void require_video(const RelevanceContext& ctx, std::size_t video) {
  if (video >= ctx.videos.size()) {
    throw Error(ErrorCode::kUnknownId, "no video embedding for index " + std::to_string(video));
  }
}

}  // namespace

std::vector<ScoredCaption> build_candidate_pool(std::size_t video, const NeighborIndex& index,
                                                const CaptionCache& cache) {
  std::vector<ScoredCaption> pool;
  for (const auto& n : index.neighbors(video)) {
    const auto& list = cache.entries(n.index);
    pool.insert(pool.end(), list.begin(), list.end());
  }
  return pool;
}

std::vector<ScoredCaption> select_top_k(std::size_t video, std::span<const ScoredCaption> resident,
                                        std::span<const ScoredCaption> pool, std::size_t k,
                                        int round, const RelevanceContext& ctx) {
  require_video(ctx, video);
  const UnitEmbedding& f = ctx.videos[video];

  std::vector<ScoredCaption> merged;
  merged.reserve(resident.size() + pool.size());
  std::unordered_map<std::string, std::size_t> position;
  auto offer = [&](const ScoredCaption& c, bool is_resident) {
    ScoredCaption entry = c;
    entry.relevance = video_text_similarity(f, entry.embedding);
    if (!is_resident) {
      entry.origin = Origin::kRetrieved;
      entry.round = round;
    }
    auto [it, inserted] = position.emplace(entry.text, merged.size());
    if (inserted) {
      merged.push_back(std::move(entry));
    } else if (entry.relevance > merged[it->second].relevance) {
      merged[it->second] = std::move(entry);
    }
  };
  for (const auto& c : resident) offer(c, true);
  for (const auto& c : pool) offer(c, false);

  std::stable_sort(merged.begin(), merged.end(), [](const auto& a, const auto& b) {
    return a.relevance > b.relevance;
  });
  if (merged.size() > k) merged.resize(k);
  return merged;
}

const std::vector<ScoredCaption>& refresh_cache(std::size_t video,
                                                std::span<const ScoredCaption> pool,
                                                CaptionCache& cache, int round,
                                                const RelevanceContext& ctx) {
  auto updated = select_top_k(video, cache.entries(video), pool, cache.k(), round, ctx);
  cache.set_entries(video, std::move(updated));
  return cache.entries(video);
}

void refresh_all(CaptionCache& cache, const NeighborIndex& index, int round,
                 const RelevanceContext& ctx) {
  const CaptionCache snapshot = cache;
  std::vector<std::vector<ScoredCaption>> next(cache.size());
  parallel_for(cache.size(), ctx.threads, [&](std::size_t i) {
    const auto pool = build_candidate_pool(i, index, snapshot);
    next[i] = select_top_k(i, snapshot.entries(i), pool, cache.k(), round, ctx);
  });
  for (std::size_t i = 0; i < cache.size(); ++i) cache.set_entries(i, std::move(next[i]));
}

CaptionCache init_caches(const std::vector<std::string>& ids,
                         const std::vector<std::vector<std::string>>& per_frame_captions,
                         const NeighborIndex& index, std::size_t k, const RelevanceContext& ctx) {
  if (per_frame_captions.size() != ids.size()) {
    throw Error(ErrorCode::kInvalidArgument, "per-frame captions missing for some videos");
  }
  if (!ctx.texts) throw Error(ErrorCode::kInvalidArgument, "relevance context has no text cache");
  CaptionCache cache(ids, k);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    require_video(ctx, i);
    std::vector<std::string> texts;
    std::unordered_set<std::string> seen;
    for (const auto& raw : per_frame_captions[i]) {
      auto text = canonical_caption(raw);
      if (text.empty()) continue;
      if (seen.insert(text).second) texts.push_back(std::move(text));
    }
    if (texts.empty()) {
      throw Error(ErrorCode::kInvalidArgument, "video " + ids[i] + " has no initial captions");
    }
    const auto embeddings = ctx.texts->embed_batch(texts);
    std::vector<ScoredCaption> pool;
    for (std::size_t j = 0; j < texts.size(); ++j) {
      pool.push_back({texts[j], embeddings[j], video_text_similarity(ctx.videos[i], embeddings[j]),
                      Origin::kInit, 0});
    }
    cache.set_entries(i, std::move(pool));
  }
  refresh_all(cache, index, 0, ctx);
  return cache;
}

bool append_generated(CaptionCache& cache, std::size_t video, const std::string& caption,
                      int round, const RelevanceContext& ctx) {
  const std::string text = canonical_caption(caption);
  if (text.empty()) {
    log::warning("empty generated caption for video " + cache.id(video) + " skipped");
    return false;
  }
  require_video(ctx, video);
  auto entries = cache.entries(video);
  for (auto& e : entries) {
    if (e.text == text) {
      e.origin = Origin::kSelfGenerated;
      e.round = round;
      cache.set_entries(video, std::move(entries));
      return true;
    }
  }
  const UnitEmbedding emb = ctx.texts->embed(text);
  entries.push_back(
      {text, emb, video_text_similarity(ctx.videos[video], emb), Origin::kSelfGenerated, round});
  cache.set_entries(video, std::move(entries));
  return true;
}

void rehydrate(CaptionCache& cache, const RelevanceContext& ctx) {
  for (std::size_t i = 0; i < cache.size(); ++i) {
    auto entries = cache.entries(i);
    for (auto& e : entries) {
      if (e.embedding.empty()) e.embedding = ctx.texts->embed(e.text);
    }
    cache.set_entries(i, std::move(entries));
  }
}

void save_caches(const CaptionCache& cache, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kMissingFile, "cannot write cache file " + path.string());
  for (std::size_t i = 0; i < cache.size(); ++i) {
    json rec;
    rec["id"] = cache.id(i);
    rec["captions"] = json::array();
    for (const auto& c : cache.entries(i)) {
      rec["captions"].push_back(
          {{"text", c.text}, {"score", c.relevance}, {"origin", to_string(c.origin)}, {"round", c.round}});
    }
    out << rec.dump() << "\n";
  }
}

CaptionCache load_caches(const std::filesystem::path& path, std::size_t k) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kMissingFile, "missing cache file " + path.string());
  std::vector<std::string> ids;
  std::vector<std::vector<ScoredCaption>> lists;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json rec = json::parse(line);
      ids.push_back(rec.at("id").get<std::string>());
      std::vector<ScoredCaption> list;
      for (const auto& c : rec.at("captions")) {
        ScoredCaption sc;
        sc.text = c.at("text").get<std::string>();
        sc.relevance = c.at("score").get<double>();
        sc.origin = origin_from_string(c.at("origin").get<std::string>());
        sc.round = c.at("round").get<int>();
        list.push_back(std::move(sc));
      }
      lists.push_back(std::move(list));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kParse, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(ErrorCode::kParse, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  CaptionCache cache(std::move(ids), k);
  for (std::size_t i = 0; i < lists.size(); ++i) cache.set_entries(i, std::move(lists[i]));
  return cache;
}

}  // namespace rest
