#include "rest/core/embedding.hpp"

#include <cmath>
#include <string>

#include "rest/core/error.hpp"

namespace rest {

double l2_norm(std::span<const double> v) {
  double sum = 0.0;
  for (double x : v) sum += x * x;
  return std::sqrt(sum);
}

UnitEmbedding UnitEmbedding::normalize(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorCode::kDegenerate, "degenerate embedding: empty vector");
  const double norm = l2_norm(values);
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw Error(ErrorCode::kDegenerate, "degenerate embedding: zero or non-finite norm");
  }
  std::vector<double> out(values.begin(), values.end());
  for (double& x : out) x /= norm;
  return UnitEmbedding(std::move(out));
}

UnitEmbedding UnitEmbedding::from_unit(std::vector<double> values, double tolerance) {
  const double norm = l2_norm(values);
  if (values.empty() || !std::isfinite(norm) || std::abs(norm - 1.0) > tolerance) {
    throw Error(ErrorCode::kDegenerate,
                "embedding is not unit norm (norm = " + std::to_string(norm) + ")");
  }
  return UnitEmbedding(std::move(values));
}

double UnitEmbedding::dot(const UnitEmbedding& other) const {
  if (other.dim() != dim()) {
    throw Error(ErrorCode::kDimMismatch, "dot product of embeddings with dims " +
                                             std::to_string(dim()) + " and " +
                                             std::to_string(other.dim()));
  }
  double sum = 0.0;
  for (std::size_t k = 0; k < values_.size(); ++k) sum += values_[k] * other.values_[k];
  return sum;
}

UnitEmbedding l2_normalize(std::span<const double> v) { return UnitEmbedding::normalize(v); }

UnitEmbedding aggregate_video_embedding(std::span<const UnitEmbedding> frames) {
  if (frames.empty()) throw Error(ErrorCode::kInvalidArgument, "no frames to aggregate");
  const std::size_t d = frames.front().dim();
  std::vector<double> sum(d, 0.0);
  for (const auto& f : frames) {
    if (f.dim() != d) throw Error(ErrorCode::kDimMismatch, "frame embedding dims differ");
    for (std::size_t k = 0; k < d; ++k) sum[k] += f[k];
  }
  return UnitEmbedding::normalize(sum);
}

}  // namespace rest
