#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace rest {

// L2-normalized real vector. All retriever-space similarity math runs on
// these, so every dot product below is a cosine similarity.
class UnitEmbedding {
 public:
  UnitEmbedding() = default;

  // Throws ErrorCode::kDegenerate for an all-zero (or non-finite) input.
  static UnitEmbedding normalize(std::span<const double> values);
  // Accepts values that are already unit norm within `tolerance`; they are
  // stored as given, without renormalizing.
  static UnitEmbedding from_unit(std::vector<double> values, double tolerance = 1e-6);

  std::size_t dim() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }
  std::span<const double> values() const noexcept { return values_; }
  double operator[](std::size_t i) const noexcept { return values_[i]; }

  // Throws kDimMismatch on unequal dims.
  double dot(const UnitEmbedding& other) const;

  friend bool operator==(const UnitEmbedding&, const UnitEmbedding&) = default;

 private:
  explicit UnitEmbedding(std::vector<double> values) : values_(std::move(values)) {}
  std::vector<double> values_;
};

UnitEmbedding l2_normalize(std::span<const double> v);

// Video feature: normalized elementwise sum of the frame embeddings.
UnitEmbedding aggregate_video_embedding(std::span<const UnitEmbedding> frames);

double l2_norm(std::span<const double> v);

}  // namespace rest
