#include "rest/captioner/generate.hpp"

#include <algorithm>

#include "rest/core/error.hpp"

namespace rest {

bool is_generatable(int id) noexcept {
  return id != Vocabulary::kBos && id != Vocabulary::kPad && id != Vocabulary::kUnk;
}

namespace {

struct Hypothesis {
  std::vector<int> tokens;  // generated part only
  double sum = 0.0;
  double mean() const { return sum / static_cast<double>(tokens.size()); }
};

bool better(const Hypothesis& a, const Hypothesis& b) {
  const double ma = a.mean();
  const double mb = b.mean();
  if (ma != mb) return ma > mb;
  return a.tokens < b.tokens;
}

Eigen::RowVectorXd next_log_probs(const VisualTokens& visual, const ToyCaptioner& model,
                                  const std::vector<int>& prefix, const std::vector<int>& generated) {
  std::vector<int> seq = prefix;
  seq.insert(seq.end(), generated.begin(), generated.end());
  const Mat logits = decode_logits(visual, seq, model);
  return log_softmax(logits.row(logits.rows() - 1));
}

}  // namespace

double sequence_score(const VisualTokens& visual, const ToyCaptioner& model,
                      const std::vector<int>& prefix, const std::vector<int>& generated) {
  if (generated.empty()) throw Error(ErrorCode::kInvalidArgument, "empty generated sequence");
  std::vector<int> seq = prefix;
  seq.insert(seq.end(), generated.begin(), generated.end());
  const Mat logits = decode_logits(visual, seq, model);
  double sum = 0.0;
  for (std::size_t j = 0; j < generated.size(); ++j) {
    const auto row = static_cast<Eigen::Index>(prefix.size() + j - 1);
    sum += log_softmax(logits.row(row))(generated[j]);
  }
  return sum / static_cast<double>(generated.size());
}

GenerationResult beam_search(const VisualTokens& visual, const ToyCaptioner& model,
                             const std::vector<int>& prefix, int beam, int max_len) {
  if (beam < 1) throw Error(ErrorCode::kInvalidArgument, "beam width must be >= 1");
  if (max_len < 1) throw Error(ErrorCode::kInvalidArgument, "max_len must be >= 1");
  if (prefix.empty() || prefix.front() != Vocabulary::kBos) {
    throw Error(ErrorCode::kInvalidArgument, "generation prefix must start with BOS");
  }
  const int vocab = static_cast<int>(model.params.tok_emb.rows());
  const int limit = std::min<int>(max_len, static_cast<int>(model.params.pos_emb.rows()) -
                                               static_cast<int>(prefix.size()) + 1);

  std::vector<Hypothesis> alive{Hypothesis{}};
  std::vector<Hypothesis> finished;
  std::vector<Hypothesis> candidates;
  for (int step = 0; step < limit && !alive.empty(); ++step) {
    candidates.clear();
    for (const auto& h : alive) {
      const Eigen::RowVectorXd lp = next_log_probs(visual, model, prefix, h.tokens);
      for (int v = 0; v < vocab; ++v) {
        if (!is_generatable(v)) continue;
        Hypothesis c = h;
        c.tokens.push_back(v);
        c.sum += lp(v);
        candidates.push_back(std::move(c));
      }
    }
    const auto keep = std::min<std::size_t>(static_cast<std::size_t>(beam), candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep),
                      candidates.end(), better);
    alive.clear();
    for (std::size_t i = 0; i < keep; ++i) {
      if (candidates[i].tokens.back() == Vocabulary::kEos) {
        finished.push_back(std::move(candidates[i]));
      } else {
        alive.push_back(std::move(candidates[i]));
      }
    }
  }

  GenerationResult out;
  const std::vector<Hypothesis>& pool = finished.empty() ? alive : finished;
  if (pool.empty()) return out;
  const auto best = std::min_element(pool.begin(), pool.end(), better);
  out.score = best->mean();
  out.complete = !finished.empty();
  out.tokens = best->tokens;
  if (out.complete) out.tokens.pop_back();
  return out;
}

Caption generate(const VisualTokens& visual, const ToyCaptioner& model, const Vocabulary& vocab,
                 const std::string& prompt, int beam, int max_len) {
  std::vector<int> prefix{Vocabulary::kBos};
  const auto prompt_ids = tokenize(prompt, vocab).ids;
  prefix.insert(prefix.end(), prompt_ids.begin(), prompt_ids.end());
  const GenerationResult r = beam_search(visual, model, prefix, beam, max_len);
  TokenSequence seq{r.tokens, vocab.size()};
  return {detokenize(seq, vocab), r.score, r.complete};
}

}  // namespace rest
