#pragma once

#include <limits>
#include <string>
#include <vector>

#include "rest/captioner/model.hpp"
#include "rest/captioner/network.hpp"
#include "rest/core/tokenizer.hpp"

namespace rest {

struct GenerationResult {
  std::vector<int> tokens;  // generated ids after the prompt, EOS excluded
  double score = -std::numeric_limits<double>::infinity();  // mean log-prob per generated token
  bool complete = false;    // false: no hypothesis reached EOS within max_len
};

// Ids the decoder may emit: everything except BOS, PAD and UNK.
bool is_generatable(int id) noexcept;

// Mean log-probability per generated token (EOS counted) of `generated`
// continuing `prefix`.
double sequence_score(const VisualTokens& visual, const ToyCaptioner& model,
                      const std::vector<int>& prefix, const std::vector<int>& generated);

// Beam search seeded with `prefix` (BOS followed by the prompt). At each step
// every live hypothesis is extended by every generatable token; the `beam`
// best candidates by mean log-probability survive (ties by lexicographically
// smaller token sequence), and those ending in EOS are retired as finished.
// Returns the best finished hypothesis, or the best partial one with
// complete = false.
GenerationResult beam_search(const VisualTokens& visual, const ToyCaptioner& model,
                             const std::vector<int>& prefix, int beam, int max_len);

struct Caption {
  std::string text;
  double score = 0.0;
  bool complete = false;
};

// Encodes nothing: takes ready visual tokens. The prompt is stripped from the
// returned text.
Caption generate(const VisualTokens& visual, const ToyCaptioner& model, const Vocabulary& vocab,
                 const std::string& prompt, int beam, int max_len);

}  // namespace rest
