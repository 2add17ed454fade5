#include "rest/eval/clip_tam.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

#include "rest/cache/caption_cache.hpp"
#include "rest/core/error.hpp"

namespace rest {

ClassEmbeddingTable::ClassEmbeddingTable(std::vector<std::string> names, TextEmbeddingCache& texts)
    : names_(std::move(names)) {
  for (std::size_t c = 0; c < names_.size(); ++c) {
    if (!index_.emplace(names_[c], c).second) {
      throw Error(ErrorCode::kDuplicateId, "duplicate class name: " + names_[c]);
    }
  }
  embeddings_ = texts.embed_batch(names_);
}

std::size_t ClassEmbeddingTable::index_of(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error(ErrorCode::kUnknownId, "class not in table: " + name);
  return it->second;
}

ClassRanking clip_tam_classify(const std::string& caption, const ClassEmbeddingTable& table,
                               TextEmbeddingCache& texts) {
  ClassRanking r;
  const std::string text = canonical_caption(caption);
  if (text.empty() || table.size() == 0) {
    r.abstain = true;
    return r;
  }
  const UnitEmbedding t = texts.embed(text);
  std::vector<double> score(table.size());
  for (std::size_t c = 0; c < table.size(); ++c) score[c] = table.embedding(c).dot(t);
  r.classes.resize(table.size());
  std::iota(r.classes.begin(), r.classes.end(), std::size_t{0});
  std::stable_sort(r.classes.begin(), r.classes.end(),
                   [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
  for (std::size_t c : r.classes) r.scores.push_back(score[c]);
  r.margin = r.scores.size() > 1 ? r.scores[0] - r.scores[1] : 0.0;
  return r;
}

double EvalReport::accuracy_at(std::size_t kk) const {
  if (per_video.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& v : per_video) {
    if (v.rank >= 0 && static_cast<std::size_t>(v.rank) < kk) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(per_video.size());
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["k"] = k;
  j["videos"] = videos;
  j["top1"] = top1;
  j["topk"] = topk;
  j["top1_std"] = top1_std;
  j["topk_std"] = topk_std;
  j["splits"] = splits;
  j["per_video"] = nlohmann::json::array();
  for (const auto& v : per_video) {
    j["per_video"].push_back({{"id", v.video},
                              {"label", v.label},
                              {"caption", v.caption},
                              {"predicted", v.predicted},
                              {"rank", v.rank},
                              {"margin", v.margin}});
  }
  return j;
}

std::string EvalReport::summary_table() const {
  std::ostringstream out;
  out << std::fixed << std::setprecision(2);
  out << "videos  top-1            top-" << k << "\n";
  out << std::setw(6) << videos << "  " << std::setw(6) << 100.0 * top1 << " +- " << std::setw(5)
      << 100.0 * top1_std << "  " << std::setw(6) << 100.0 * topk << " +- " << std::setw(5)
      << 100.0 * topk_std << "\n";
  return out.str();
}

namespace {

void mean_std(const std::vector<double>& xs, double& mean, double& sd) {
  mean = 0.0;
  sd = 0.0;
  if (xs.empty()) return;
  mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  if (xs.size() < 2) return;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

}  // namespace

EvalReport evaluate_topk(const std::map<std::string, std::string>& predicted_captions,
                         const std::map<std::string, std::string>& labels,
                         const ClassEmbeddingTable& table, TextEmbeddingCache& texts,
                         std::size_t k, const std::vector<std::vector<std::string>>& splits) {
  EvalReport report;
  report.k = k;
  std::map<std::string, std::size_t> position;
  for (const auto& [video, label] : labels) {
    auto it = predicted_captions.find(video);
    if (it == predicted_captions.end()) {
      throw Error(ErrorCode::kInvalidArgument, "no prediction for labeled video " + video);
    }
    const std::size_t truth = table.index_of(label);
    const ClassRanking r = clip_tam_classify(it->second, table, texts);
    VideoEvaluation v;
    v.video = video;
    v.label = label;
    v.caption = it->second;
    if (r.abstain) {
      v.predicted = "abstain";
    } else {
      v.predicted = table.names()[r.top()];
      v.margin = r.margin;
      v.rank = static_cast<int>(std::find(r.classes.begin(), r.classes.end(), truth) - r.classes.begin());
    }
    position[video] = report.per_video.size();
    report.per_video.push_back(std::move(v));
  }
  report.videos = report.per_video.size();
  report.top1 = report.accuracy_at(1);
  report.topk = report.accuracy_at(k);

  std::vector<std::vector<std::string>> groups = splits;
  if (groups.empty()) {
    groups.emplace_back();
    for (const auto& [video, label] : labels) groups.back().push_back(video);
  }
  std::vector<double> s1, sk;
  for (const auto& g : groups) {
    std::size_t n = 0, h1 = 0, hk = 0;
    for (const auto& video : g) {
      auto it = position.find(video);
      if (it == position.end()) continue;
      const int rank = report.per_video[it->second].rank;
      ++n;
      if (rank == 0) ++h1;
      if (rank >= 0 && static_cast<std::size_t>(rank) < k) ++hk;
    }
    if (n == 0) continue;
    s1.push_back(static_cast<double>(h1) / static_cast<double>(n));
    sk.push_back(static_cast<double>(hk) / static_cast<double>(n));
  }
  report.splits = s1.size();
  double m1 = 0.0, mk = 0.0;
  mean_std(s1, m1, report.top1_std);
  mean_std(sk, mk, report.topk_std);
  if (!splits.empty()) {
    report.top1 = m1;
    report.topk = mk;
  }
  return report;
}

EvalReport generalized_eval(const std::map<std::string, std::string>& predicted_captions,
                            const std::map<std::string, std::string>& labels,
                            const std::vector<std::string>& seen_classes,
                            const std::vector<std::string>& unseen_classes,
                            TextEmbeddingCache& texts, std::size_t k) {
  const std::set<std::string> seen(seen_classes.begin(), seen_classes.end());
  const std::set<std::string> unseen(unseen_classes.begin(), unseen_classes.end());
  for (const auto& c : unseen) {
    if (seen.count(c)) {
      throw Error(ErrorCode::kInvalidArgument, "class '" + c + "' is both seen and unseen");
    }
  }
  std::vector<std::string> all = seen_classes;
  all.insert(all.end(), unseen_classes.begin(), unseen_classes.end());
  std::map<std::string, std::string> unseen_labels;
  for (const auto& [video, label] : labels) {
    if (unseen.count(label)) unseen_labels.emplace(video, label);
  }
  if (unseen_labels.empty()) {
    EvalReport empty;
    empty.k = k;
    return empty;
  }
  const ClassEmbeddingTable table(std::move(all), texts);
  return evaluate_topk(predicted_captions, unseen_labels, table, texts, k);
}

}  // namespace rest
