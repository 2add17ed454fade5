#include "rest/captioner/model.hpp"

#include <cmath>

#include "rest/core/error.hpp"
#include "rest/core/random.hpp"

namespace rest {

CaptionerParams CaptionerParams::zeros_like() const {
  CaptionerParams out = *this;
  for_each_tensor(out, [](const std::string&, Mat& m) { m.setZero(); });
  return out;
}

namespace {

Mat gaussian(Rng& rng, int rows, int cols, double stddev) {
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = stddev * rng.normal();
  return m;
}

Mat ones(int cols) { return Mat::Ones(1, cols); }
Mat zeros(int rows, int cols) { return Mat::Zero(rows, cols); }

}  // namespace

ToyCaptioner ToyCaptioner::create(const CaptionerConfig& c, bool adapter_enabled) {
  if (c.vocab_size < 5 || c.feature_dim < 1 || c.model_dim < 1 || c.ffn_dim < 1 || c.layers < 1 ||
      c.max_len < 2 || c.max_len > kMaxSequenceLength) {
    throw Error(ErrorCode::kConfig, "invalid captioner dimensions");
  }
  Rng rng(mix_seed(c.seed, 0xC0FFEEull));
  const int d = c.model_dim;
  const double proj = 1.0 / std::sqrt(static_cast<double>(d));

  ToyCaptioner model;
  model.config = c;
  model.adapter_enabled = adapter_enabled;
  auto& p = model.params;
  p.adapter_kernel = zeros(3, c.feature_dim);
  p.enc_proj = gaussian(rng, c.feature_dim, d, 1.0 / std::sqrt(static_cast<double>(c.feature_dim)));
  p.enc_bias = zeros(1, d);
  p.tok_emb = gaussian(rng, c.vocab_size, d, 1.0);
  p.pos_emb = gaussian(rng, c.max_len, d, 0.1);
  for (int l = 0; l < c.layers; ++l) {
    DecoderBlock b;
    b.ln1_g = ones(d);
    b.ln1_b = zeros(1, d);
    b.wq = gaussian(rng, d, d, proj);
    b.wk = gaussian(rng, d, d, proj);
    b.wv = gaussian(rng, d, d, proj);
    b.wo = gaussian(rng, d, d, proj / std::sqrt(2.0 * c.layers));
    b.ln2_g = ones(d);
    b.ln2_b = zeros(1, d);
    b.cq = gaussian(rng, d, d, proj);
    b.ck = gaussian(rng, d, d, proj);
    b.cv = gaussian(rng, d, d, proj);
    b.co = gaussian(rng, d, d, proj / std::sqrt(2.0 * c.layers));
    b.ln3_g = ones(d);
    b.ln3_b = zeros(1, d);
    b.w1 = gaussian(rng, d, c.ffn_dim, proj);
    b.b1 = zeros(1, c.ffn_dim);
    b.w2 = gaussian(rng, c.ffn_dim, d,
                    1.0 / std::sqrt(static_cast<double>(c.ffn_dim) * 2.0 * c.layers));
    b.b2 = zeros(1, d);
    p.blocks.push_back(std::move(b));
  }
  p.lnf_g = ones(d);
  p.lnf_b = zeros(1, d);
  p.out_proj = gaussian(rng, d, c.vocab_size, proj);
  p.out_bias = zeros(1, c.vocab_size);
  return model;
}

double squared_norm(const CaptionerParams& p) {
  double sum = 0.0;
  for_each_tensor(p, [&](const std::string&, const Mat& m) { sum += m.squaredNorm(); });
  return sum;
}

std::size_t parameter_count(const CaptionerParams& p) {
  std::size_t n = 0;
  for_each_tensor(p, [&](const std::string&, const Mat& m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

}  // namespace rest
