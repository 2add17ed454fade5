#include "rest/similarity/similarity.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "rest/core/error.hpp"
#include "rest/core/parallel.hpp"

namespace rest {

double video_video_similarity(const UnitEmbedding& video_a, const UnitEmbedding& video_b) {
  return video_a.dot(video_b);
}

double video_text_similarity(const UnitEmbedding& video, const UnitEmbedding& text) {
  return video.dot(text);
}

std::span<const Neighbor> NeighborIndex::neighbors(std::size_t video) const {
  if (video >= rows_.size()) {
    throw Error(ErrorCode::kUnknownId, "no neighbor row for video index " + std::to_string(video));
  }
  return rows_[video];
}

void NeighborIndex::dump_json(const std::filesystem::path& path,
                              std::span<const std::string> ids) const {
  nlohmann::json doc = nlohmann::json::object();
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    auto row = nlohmann::json::array();
    for (const auto& n : rows_[i]) row.push_back({ids[n.index], n.score});
    doc[ids[i]] = row;
  }
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kMissingFile, "cannot write " + path.string());
  out << doc.dump(1) << "\n";
}

namespace {

constexpr std::size_t kBlock = 64;

bool ranks_before(const Neighbor& a, const Neighbor& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.index < b.index;
}

}  // namespace

NeighborIndex build_neighbor_index(std::span<const UnitEmbedding> embeddings, std::size_t h,
                                   std::size_t threads) {
  if (h < 1) throw Error(ErrorCode::kInvalidArgument, "neighbor count H must be >= 1");
  const std::size_t n = embeddings.size();
  if (n == 0) throw Error(ErrorCode::kInvalidArgument, "cannot index zero videos");
  const std::size_t d = embeddings.front().dim();
  for (const auto& e : embeddings) {
    if (e.dim() != d) throw Error(ErrorCode::kDimMismatch, "embedding dims differ in index build");
  }

  // Contiguous copy so the inner kernel streams over flat memory.
  std::vector<double> table(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(embeddings[i].values().begin(), embeddings[i].values().end(), table.begin() + i * d);
  }

  const std::size_t keep = std::min(h, n);
  std::vector<std::vector<Neighbor>> rows(n);
  const std::size_t row_blocks = (n + kBlock - 1) / kBlock;

  parallel_for(row_blocks, threads, [&](std::size_t rb) {
    const std::size_t r0 = rb * kBlock;
    const std::size_t r1 = std::min(n, r0 + kBlock);
    std::vector<double> scores((r1 - r0) * n);
    for (std::size_t c0 = 0; c0 < n; c0 += kBlock) {
      const std::size_t c1 = std::min(n, c0 + kBlock);
      for (std::size_t i = r0; i < r1; ++i) {
        const double* a = &table[i * d];
        for (std::size_t j = c0; j < c1; ++j) {
          const double* b = &table[j * d];
          double s = 0.0;
          for (std::size_t k = 0; k < d; ++k) s += a[k] * b[k];
          scores[(i - r0) * n + j] = s;
        }
      }
    }
    std::vector<Neighbor> others;
    others.reserve(n);
    for (std::size_t i = r0; i < r1; ++i) {
      others.clear();
      for (std::size_t j = 0; j < n; ++j) {
        if (j != i) others.push_back({j, scores[(i - r0) * n + j]});
      }
      const std::size_t take = keep - 1;
      std::partial_sort(others.begin(), others.begin() + static_cast<std::ptrdiff_t>(take),
                        others.end(), ranks_before);
      auto& row = rows[i];
      row.reserve(keep);
      row.push_back({i, scores[(i - r0) * n + i]});
      row.insert(row.end(), others.begin(), others.begin() + static_cast<std::ptrdiff_t>(take));
    }
  });
  return NeighborIndex(std::move(rows), h);
}

std::vector<UnitEmbedding> TextEmbeddingCache::embed_batch(std::span<const std::string> captions) {
  std::lock_guard lock(mutex_);
  std::vector<UnitEmbedding> out;
  out.reserve(captions.size());
  for (const auto& caption : captions) {
    auto it = entries_.find(caption);
    if (it == entries_.end()) {
      ++provider_calls_;
      try {
        it = entries_.emplace(caption, encoder_->encode(caption)).first;
      } catch (const Error& e) {
        throw Error(e.code(), "text encoder failed on caption '" + caption + "': " + e.what());
      }
      if (it->second.dim() != encoder_->dim()) {
        throw Error(ErrorCode::kDimMismatch, "text encoder returned wrong dim for '" + caption + "'");
      }
    }
    out.push_back(it->second);
  }
  return out;
}

UnitEmbedding TextEmbeddingCache::embed(const std::string& caption) {
  return embed_batch(std::span<const std::string>(&caption, 1)).front();
}

std::size_t TextEmbeddingCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

}  // namespace rest
