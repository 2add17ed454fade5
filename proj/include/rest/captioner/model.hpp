#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace rest {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr int kMaxSequenceLength = 64;

struct CaptionerConfig {
  int vocab_size = 0;
  int feature_dim = 32;
  int model_dim = 64;
  int ffn_dim = 128;
  int layers = 2;
  int max_len = kMaxSequenceLength;
  std::uint64_t seed = 0;
};

// One decoder block: causal self-attention, cross-attention to the visual
// tokens, feed-forward; each sub-layer pre-normalized and residual.
struct DecoderBlock {
  Mat ln1_g, ln1_b, wq, wk, wv, wo;
  Mat ln2_g, ln2_b, cq, ck, cv, co;
  Mat ln3_g, ln3_b, w1, b1, w2, b2;
};

struct CaptionerParams {
  Mat adapter_kernel;  // 3 x feature_dim; row r is the tap at temporal offset r - 1
  Mat enc_proj;        // feature_dim x model_dim
  Mat enc_bias;        // 1 x model_dim
  Mat tok_emb;         // vocab x model_dim
  Mat pos_emb;         // max_len x model_dim
  std::vector<DecoderBlock> blocks;
  Mat lnf_g, lnf_b;
  Mat out_proj;  // model_dim x vocab
  Mat out_bias;  // 1 x vocab

  // Same shapes, all zeros.
  CaptionerParams zeros_like() const;
};

// Calls f(name, tensor) for every parameter tensor in a fixed order. Works on
// const and non-const parameter sets.
template <typename Params, typename F>
void for_each_tensor(Params& p, F&& f) {
  f("adapter_kernel", p.adapter_kernel);
  f("enc_proj", p.enc_proj);
  f("enc_bias", p.enc_bias);
  f("tok_emb", p.tok_emb);
  f("pos_emb", p.pos_emb);
  for (std::size_t l = 0; l < p.blocks.size(); ++l) {
    auto& b = p.blocks[l];
    const std::string pre = "block" + std::to_string(l) + ".";
    f(pre + "ln1_g", b.ln1_g);
    f(pre + "ln1_b", b.ln1_b);
    f(pre + "wq", b.wq);
    f(pre + "wk", b.wk);
    f(pre + "wv", b.wv);
    f(pre + "wo", b.wo);
    f(pre + "ln2_g", b.ln2_g);
    f(pre + "ln2_b", b.ln2_b);
    f(pre + "cq", b.cq);
    f(pre + "ck", b.ck);
    f(pre + "cv", b.cv);
    f(pre + "co", b.co);
    f(pre + "ln3_g", b.ln3_g);
    f(pre + "ln3_b", b.ln3_b);
    f(pre + "w1", b.w1);
    f(pre + "b1", b.b1);
    f(pre + "w2", b.w2);
    f(pre + "b2", b.b2);
  }
  f("lnf_g", p.lnf_g);
  f("lnf_b", p.lnf_b);
  f("out_proj", p.out_proj);
  f("out_bias", p.out_bias);
}

// Trainable captioner: parameters plus the switches that shape its forward
// pass.
struct ToyCaptioner {
  CaptionerConfig config;
  CaptionerParams params;
  bool adapter_enabled = true;

  // Seeded initialization. The adapter kernel starts at exactly zero, so the
  // encoder begins as the frame-averaging image model.
  static ToyCaptioner create(const CaptionerConfig& config, bool adapter_enabled = true);
};

double squared_norm(const CaptionerParams& p);
std::size_t parameter_count(const CaptionerParams& p);

}  // namespace rest
