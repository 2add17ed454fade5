#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "rest/core/embedding.hpp"
#include "rest/similarity/similarity.hpp"

namespace rest {

// Class names and their text-encoder embeddings, in table order.
class ClassEmbeddingTable {
 public:
  // Throws kDuplicateId on repeated names.
  ClassEmbeddingTable(std::vector<std::string> names, TextEmbeddingCache& texts);

  std::size_t size() const noexcept { return names_.size(); }
  const std::vector<std::string>& names() const noexcept { return names_; }
  const UnitEmbedding& embedding(std::size_t c) const { return embeddings_.at(c); }
  // Throws kUnknownId.
  std::size_t index_of(const std::string& name) const;

 private:
  std::vector<std::string> names_;
  std::vector<UnitEmbedding> embeddings_;
  std::map<std::string, std::size_t> index_;
};

struct ClassRanking {
  bool abstain = false;              // empty caption
  std::vector<std::size_t> classes;  // table indices, best first
  std::vector<double> scores;        // aligned with `classes`
  double margin = 0.0;               // best minus runner-up score

  std::size_t top() const { return classes.front(); }
};

// Ranks classes by w_c . t for the caption embedding t, ties by class index.
ClassRanking clip_tam_classify(const std::string& caption, const ClassEmbeddingTable& table,
                               TextEmbeddingCache& texts);

struct VideoEvaluation {
  std::string video;
  std::string label;
  std::string caption;
  std::string predicted;  // "abstain" for empty captions
  int rank = -1;          // 0-based position of the label; -1 when abstaining
  double margin = 0.0;
};

struct EvalReport {
  std::size_t k = 5;
  std::size_t videos = 0;
  double top1 = 0.0;
  double topk = 0.0;
  double top1_std = 0.0;  // across splits
  double topk_std = 0.0;
  std::size_t splits = 0;
  std::vector<VideoEvaluation> per_video;

  // Fraction of videos whose label ranks within the first `k` classes.
  double accuracy_at(std::size_t k) const;
  nlohmann::json to_json() const;
  std::string summary_table() const;
};

// Top-1 / top-k CLIP-TAM accuracy. `splits` partitions the labeled video ids
// for mean +- std reporting; empty means one split over all labeled videos.
// Throws kUnknownId for a label absent from the table and kInvalidArgument for
// a labeled video without prediction.
EvalReport evaluate_topk(const std::map<std::string, std::string>& predicted_captions,
                         const std::map<std::string, std::string>& labels,
                         const ClassEmbeddingTable& table, TextEmbeddingCache& texts,
                         std::size_t k = 5,
                         const std::vector<std::vector<std::string>>& splits = {});

// Unseen-labeled videos classified against the union of seen and unseen class
// names. Throws kInvalidArgument when the class sets overlap.
EvalReport generalized_eval(const std::map<std::string, std::string>& predicted_captions,
                            const std::map<std::string, std::string>& labels,
                            const std::vector<std::string>& seen_classes,
                            const std::vector<std::string>& unseen_classes,
                            TextEmbeddingCache& texts, std::size_t k = 5);

}  // namespace rest
