#pragma once

#include <span>
#include <vector>

#include "rest/captioner/model.hpp"
#include "rest/core/manifest.hpp"
#include "rest/core/tokenizer.hpp"

namespace rest {

// (S + 1) x model_dim: averaged spatial tokens, then the averaged class token,
// projected into the decoder width.
struct VisualTokens {
  Mat values;
  Eigen::Index rows() const { return values.rows(); }
};

// Residual depthwise temporal filter over the spatial tokens:
//   out[t,s,c] = z[t,s,c] + sum_{o in -1..1} kernel[o+1,c] * z[t+o,s,c]
// with zero padding at the temporal borders. Class tokens are copied through.
FrameFeatureTensor temporal_adapter(const FrameFeatureTensor& z, const Mat& kernel);

// Frame-averaging pooled inputs kept for the adapter gradient.
struct EncoderCache {
  Mat pooled;     // (S + 1) x feature_dim, the rows that enter the projection
  Mat mean_prev;  // S x feature_dim: mean over t of z[t-1] (zero padded)
  Mat mean_cur;   // S x feature_dim: mean over t of z[t]
  Mat mean_next;  // S x feature_dim: mean over t of z[t+1] (zero padded)
};

// Adapter (if enabled) on the spatial tokens, average over T, project to the
// decoder width. Uses the closed form of the time-averaged filter, which only
// needs the frame sum and the two border frames.
VisualTokens encode_video(const FrameFeatureTensor& frames, const ToyCaptioner& model,
                          EncoderCache* cache = nullptr);

// Accumulates encoder parameter gradients from the gradient w.r.t. the visual
// tokens.
void encode_video_backward(const ToyCaptioner& model, const EncoderCache& cache,
                           const Mat& d_visual, CaptionerParams& grads);

struct LayerNormCache {
  Mat xhat;
  Eigen::VectorXd inv_std;
};

struct BlockCache {
  LayerNormCache ln1, ln2, ln3;
  Mat h1, q1, k1, v1, p1, a1;
  Mat h2, q2, k2, v2, p2, a2;
  Mat h3, u, g;
};

struct DecoderCache {
  std::vector<int> tokens;
  const Mat* visual = nullptr;
  std::vector<BlockCache> blocks;
  LayerNormCache lnf;
  Mat hf;
};

// Logits (len(tokens) x V); row i predicts token i + 1. Throws
// kInvalidArgument when the sequence is empty, does not start with BOS, or
// exceeds the positional table.
Mat decode_logits(const VisualTokens& visual, std::span<const int> tokens,
                  const ToyCaptioner& model, DecoderCache* cache = nullptr);

// Backward through the decoder. Accumulates into `grads` and into `d_visual`
// (same shape as the visual tokens).
void decode_backward(const ToyCaptioner& model, const DecoderCache& cache, const Mat& d_logits,
                     CaptionerParams& grads, Mat& d_visual);

struct LossResult {
  double loss = 0.0;
  Mat d_logits;  // same shape as the logits
};

// Label-smoothed cross entropy summed over the positions that predict caption
// tokens and EOS. y = [BOS, prompt (P), caption (M), EOS]; row i of `logits`
// predicts y[i + 1], so rows P .. P + M are scored. PAD targets are skipped.
// Throws kInvalidArgument if y is longer than the logits.
LossResult lm_loss(const Mat& logits, const TokenSequence& y, int prompt_len, double smoothing);

// Row-wise log-softmax.
Eigen::RowVectorXd log_softmax(const Eigen::Ref<const Eigen::RowVectorXd>& row);

}  // namespace rest
