#include "rest/captioner/network.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "rest/core/error.hpp"

namespace rest {

FrameFeatureTensor temporal_adapter(const FrameFeatureTensor& z, const Mat& kernel) {
  z.validate();
  if (z.frames < 1) throw Error(ErrorCode::kDimMismatch, "temporal adapter needs at least one frame");
  if (kernel.rows() != 3 || kernel.cols() != static_cast<Eigen::Index>(z.dim)) {
    throw Error(ErrorCode::kDimMismatch, "adapter kernel must be 3 x feature_dim");
  }
  FrameFeatureTensor out = z;
  const auto frames = static_cast<long>(z.frames);
  for (long t = 0; t < frames; ++t) {
    for (std::size_t s = 0; s < z.spatial; ++s) {
      for (std::size_t c = 0; c < z.dim; ++c) {
        double acc = 0.0;
        for (long o = -1; o <= 1; ++o) {
          const long src = t + o;
          if (src < 0 || src >= frames) continue;
          acc += kernel(o + 1, static_cast<Eigen::Index>(c)) *
                 z.at(static_cast<std::size_t>(src), s, c);
        }
        out.at(static_cast<std::size_t>(t), s, c) = z.at(static_cast<std::size_t>(t), s, c) + acc;
      }
    }
  }
  return out;
}

VisualTokens encode_video(const FrameFeatureTensor& frames, const ToyCaptioner& model,
                          EncoderCache* cache) {
  const auto& p = model.params;
  const auto d_in = static_cast<Eigen::Index>(frames.dim);
  if (frames.frames < 1 || d_in != p.enc_proj.rows()) {
    throw Error(ErrorCode::kDimMismatch, "frame features do not match the encoder input width");
  }
  if (frames.spatial_values.size() != frames.frames * frames.spatial * frames.dim ||
      frames.cls_values.size() != frames.frames * frames.dim) {
    throw Error(ErrorCode::kDimMismatch, "frame feature tensor buffers disagree with its shape");
  }
  const auto s_tokens = static_cast<Eigen::Index>(frames.spatial);
  const auto t_frames = static_cast<Eigen::Index>(frames.frames);
  const double inv_t = 1.0 / static_cast<double>(frames.frames);

  using ConstMap = Eigen::Map<const Mat>;
  const ConstMap spatial(frames.spatial_values.data(), t_frames * s_tokens, d_in);
  const ConstMap cls(frames.cls_values.data(), t_frames, d_in);

  Mat sum = Mat::Zero(s_tokens, d_in);
  for (Eigen::Index t = 0; t < t_frames; ++t) sum += spatial.middleRows(t * s_tokens, s_tokens);

  Mat pooled(s_tokens + 1, d_in);
  Mat mean_cur = sum * inv_t;
  Mat mean_prev, mean_next;
  if (model.adapter_enabled) {
    // Time average of z[t-1] drops the last frame; of z[t+1] drops the first.
    mean_prev = (sum - spatial.middleRows((t_frames - 1) * s_tokens, s_tokens)) * inv_t;
    mean_next = (sum - spatial.topRows(s_tokens)) * inv_t;
    const auto& k = p.adapter_kernel;
    pooled.topRows(s_tokens) =
        mean_cur + ((mean_prev.array().rowwise() * k.row(0).array()) +
                    (mean_cur.array().rowwise() * k.row(1).array()) +
                    (mean_next.array().rowwise() * k.row(2).array()))
                       .matrix();
  } else {
    pooled.topRows(s_tokens) = mean_cur;
  }
  pooled.row(s_tokens) = cls.colwise().sum() * inv_t;

  VisualTokens out;
  out.values.noalias() = pooled * p.enc_proj;
  out.values.rowwise() += p.enc_bias.row(0);
  if (cache) {
    cache->pooled = std::move(pooled);
    cache->mean_cur = std::move(mean_cur);
    cache->mean_prev = std::move(mean_prev);
    cache->mean_next = std::move(mean_next);
  }
  return out;
}

void encode_video_backward(const ToyCaptioner& model, const EncoderCache& cache,
                           const Mat& d_visual, CaptionerParams& grads) {
  const auto& p = model.params;
  grads.enc_proj.noalias() += cache.pooled.transpose() * d_visual;
  grads.enc_bias += d_visual.colwise().sum();
  if (!model.adapter_enabled) return;
  const Eigen::Index s_tokens = cache.mean_cur.rows();
  const Mat d_pooled = d_visual * p.enc_proj.transpose();
  const auto d_spatial = d_pooled.topRows(s_tokens).array();
  grads.adapter_kernel.row(0) += (d_spatial * cache.mean_prev.array()).colwise().sum().matrix();
  grads.adapter_kernel.row(1) += (d_spatial * cache.mean_cur.array()).colwise().sum().matrix();
  grads.adapter_kernel.row(2) += (d_spatial * cache.mean_next.array()).colwise().sum().matrix();
}

namespace {

constexpr double kLayerNormEps = 1e-5;
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)

Mat layer_norm(const Mat& x, const Mat& g, const Mat& b, LayerNormCache* cache) {
  const Eigen::Index n = x.rows();
  const double d = static_cast<double>(x.cols());
  Mat xhat(n, x.cols());
  Eigen::VectorXd inv(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mu = x.row(i).sum() / d;
    const double var = (x.row(i).array() - mu).square().sum() / d;
    inv(i) = 1.0 / std::sqrt(var + kLayerNormEps);
    xhat.row(i) = (x.row(i).array() - mu) * inv(i);
  }
  Mat y = (xhat.array().rowwise() * g.row(0).array()).rowwise() + b.row(0).array();
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv);
  }
  return y;
}

Mat layer_norm_backward(const Mat& dy, const LayerNormCache& c, const Mat& g, Mat& dg, Mat& db) {
  dg += (dy.array() * c.xhat.array()).colwise().sum().matrix();
  db += dy.colwise().sum();
  const Mat dxhat = (dy.array().rowwise() * g.row(0).array()).matrix();
  const double d = static_cast<double>(dy.cols());
  Mat dx(dy.rows(), dy.cols());
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    const double mean_d = dxhat.row(i).sum() / d;
    const double mean_dx = dxhat.row(i).dot(c.xhat.row(i)) / d;
    dx.row(i) = (dxhat.row(i).array() - mean_d - c.xhat.row(i).array() * mean_dx) * c.inv_std(i);
  }
  return dx;
}

// Softmax over each row; with `causal`, row i only sees columns 0..i.
void softmax_rows(Mat& scores, bool causal) {
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    const Eigen::Index width = causal ? i + 1 : scores.cols();
    auto row = scores.row(i);
    const double mx = row.head(width).maxCoeff();
    double total = 0.0;
    for (Eigen::Index j = 0; j < width; ++j) {
      row(j) = std::exp(row(j) - mx);
      total += row(j);
    }
    for (Eigen::Index j = 0; j < width; ++j) row(j) /= total;
    for (Eigen::Index j = width; j < scores.cols(); ++j) row(j) = 0.0;
  }
}

// dS = P * (dP - rowsum(dP * P))
Mat softmax_backward(const Mat& p, const Mat& dp) {
  const Eigen::VectorXd dot = (dp.array() * p.array()).rowwise().sum();
  return (p.array() * (dp.array().colwise() - dot.array())).matrix();
}

double gelu(double u) { return 0.5 * u * (1.0 + std::tanh(kGeluC * (u + 0.044715 * u * u * u))); }

double gelu_grad(double u) {
  const double t = std::tanh(kGeluC * (u + 0.044715 * u * u * u));
  return 0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * 0.044715 * u * u);
}

}  // namespace

Mat decode_logits(const VisualTokens& visual, std::span<const int> tokens,
                  const ToyCaptioner& model, DecoderCache* cache) {
  const auto& p = model.params;
  const auto n = static_cast<Eigen::Index>(tokens.size());
  if (n == 0 || tokens[0] != Vocabulary::kBos) {
    throw Error(ErrorCode::kInvalidArgument, "decoder input must start with BOS");
  }
  if (n > p.pos_emb.rows()) {
    throw Error(ErrorCode::kInvalidArgument,
                "sequence length " + std::to_string(n) + " exceeds maximum " +
                    std::to_string(p.pos_emb.rows()));
  }
  if (visual.values.cols() != p.tok_emb.cols()) {
    throw Error(ErrorCode::kDimMismatch, "visual tokens do not match the decoder width");
  }
  const Eigen::Index d = p.tok_emb.cols();
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  const Mat& vis = visual.values;

  Mat x(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int id = tokens[static_cast<std::size_t>(i)];
    if (id < 0 || id >= p.tok_emb.rows()) {
      throw Error(ErrorCode::kInvalidArgument, "token id out of range: " + std::to_string(id));
    }
    x.row(i) = p.tok_emb.row(id) + p.pos_emb.row(i);
  }

  if (cache) {
    cache->tokens.assign(tokens.begin(), tokens.end());
    cache->visual = &visual.values;
    cache->blocks.assign(p.blocks.size(), BlockCache{});
  }
  BlockCache scratch;
  for (std::size_t l = 0; l < p.blocks.size(); ++l) {
    const auto& b = p.blocks[l];
    BlockCache& c = cache ? cache->blocks[l] : scratch;

    c.h1 = layer_norm(x, b.ln1_g, b.ln1_b, &c.ln1);
    c.q1.noalias() = c.h1 * b.wq;
    c.k1.noalias() = c.h1 * b.wk;
    c.v1.noalias() = c.h1 * b.wv;
    c.p1.noalias() = c.q1 * c.k1.transpose();
    c.p1 *= scale;
    softmax_rows(c.p1, true);
    c.a1.noalias() = c.p1 * c.v1;
    x.noalias() += c.a1 * b.wo;

    c.h2 = layer_norm(x, b.ln2_g, b.ln2_b, &c.ln2);
    c.q2.noalias() = c.h2 * b.cq;
    c.k2.noalias() = vis * b.ck;
    c.v2.noalias() = vis * b.cv;
    c.p2.noalias() = c.q2 * c.k2.transpose();
    c.p2 *= scale;
    softmax_rows(c.p2, false);
    c.a2.noalias() = c.p2 * c.v2;
    x.noalias() += c.a2 * b.co;

    c.h3 = layer_norm(x, b.ln3_g, b.ln3_b, &c.ln3);
    c.u.noalias() = c.h3 * b.w1;
    c.u.rowwise() += b.b1.row(0);
    c.g = c.u.unaryExpr([](double v) { return gelu(v); });
    x.noalias() += c.g * b.w2;
    x.rowwise() += b.b2.row(0);
  }

  LayerNormCache lnf;
  Mat hf = layer_norm(x, p.lnf_g, p.lnf_b, &lnf);
  Mat logits = hf * p.out_proj;
  logits.rowwise() += p.out_bias.row(0);
  if (cache) {
    cache->lnf = std::move(lnf);
    cache->hf = std::move(hf);
  }
  return logits;
}

void decode_backward(const ToyCaptioner& model, const DecoderCache& cache, const Mat& d_logits,
                     CaptionerParams& grads, Mat& d_visual) {
  const auto& p = model.params;
  const Eigen::Index d = p.tok_emb.cols();
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  const Mat& vis = *cache.visual;
  if (d_visual.rows() != vis.rows() || d_visual.cols() != vis.cols()) {
    d_visual = Mat::Zero(vis.rows(), vis.cols());
  }

  grads.out_proj.noalias() += cache.hf.transpose() * d_logits;
  grads.out_bias += d_logits.colwise().sum();
  const Mat d_hf = d_logits * p.out_proj.transpose();
  Mat dx = layer_norm_backward(d_hf, cache.lnf, p.lnf_g, grads.lnf_g, grads.lnf_b);

  for (std::size_t li = p.blocks.size(); li-- > 0;) {
    const auto& b = p.blocks[li];
    auto& gb = grads.blocks[li];
    const auto& c = cache.blocks[li];

    // feed-forward
    gb.w2.noalias() += c.g.transpose() * dx;
    gb.b2 += dx.colwise().sum();
    Mat du = dx * b.w2.transpose();
    du.array() *= c.u.unaryExpr([](double v) { return gelu_grad(v); }).array();
    gb.w1.noalias() += c.h3.transpose() * du;
    gb.b1 += du.colwise().sum();
    dx += layer_norm_backward(du * b.w1.transpose(), c.ln3, b.ln3_g, gb.ln3_g, gb.ln3_b);

    // cross-attention
    gb.co.noalias() += c.a2.transpose() * dx;
    {
      const Mat da = dx * b.co.transpose();
      const Mat dp = da * c.v2.transpose();
      Mat dv = c.p2.transpose() * da;
      Mat ds = softmax_backward(c.p2, dp) * scale;
      const Mat dq = ds * c.k2;
      const Mat dk = ds.transpose() * c.q2;
      gb.cq.noalias() += c.h2.transpose() * dq;
      gb.ck.noalias() += vis.transpose() * dk;
      gb.cv.noalias() += vis.transpose() * dv;
      d_visual.noalias() += dk * b.ck.transpose();
      d_visual.noalias() += dv * b.cv.transpose();
      dx += layer_norm_backward(dq * b.cq.transpose(), c.ln2, b.ln2_g, gb.ln2_g, gb.ln2_b);
    }

    // causal self-attention
    gb.wo.noalias() += c.a1.transpose() * dx;
    {
      const Mat da = dx * b.wo.transpose();
      const Mat dp = da * c.v1.transpose();
      const Mat dv = c.p1.transpose() * da;
      const Mat ds = softmax_backward(c.p1, dp) * scale;
      const Mat dq = ds * c.k1;
      const Mat dk = ds.transpose() * c.q1;
      gb.wq.noalias() += c.h1.transpose() * dq;
      gb.wk.noalias() += c.h1.transpose() * dk;
      gb.wv.noalias() += c.h1.transpose() * dv;
      Mat dh = dq * b.wq.transpose();
      dh.noalias() += dk * b.wk.transpose();
      dh.noalias() += dv * b.wv.transpose();
      dx += layer_norm_backward(dh, c.ln1, b.ln1_g, gb.ln1_g, gb.ln1_b);
    }
  }

  for (std::size_t i = 0; i < cache.tokens.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    grads.tok_emb.row(cache.tokens[i]) += dx.row(row);
    grads.pos_emb.row(row) += dx.row(row);
  }
}

Eigen::RowVectorXd log_softmax(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  const double mx = row.maxCoeff();
  const double lse = mx + std::log((row.array() - mx).exp().sum());
  return row.array() - lse;
}

LossResult lm_loss(const Mat& logits, const TokenSequence& y, int prompt_len, double smoothing) {
  const auto n = static_cast<Eigen::Index>(y.ids.size());
  if (prompt_len < 0 || n < prompt_len + 2) {
    throw Error(ErrorCode::kInvalidArgument, "target sequence shorter than BOS + prompt + EOS");
  }
  if (n > logits.rows()) {
    throw Error(ErrorCode::kInvalidArgument, "target sequence (" + std::to_string(n) +
                                                 ") longer than logits (" +
                                                 std::to_string(logits.rows()) + ")");
  }
  if (smoothing < 0.0 || smoothing >= 1.0) {
    throw Error(ErrorCode::kInvalidArgument, "label smoothing must lie in [0, 1)");
  }
  const Eigen::Index vocab = logits.cols();
  const double off = smoothing / static_cast<double>(vocab);
  LossResult out;
  out.d_logits = Mat::Zero(logits.rows(), vocab);
  for (Eigen::Index i = prompt_len; i + 1 < n; ++i) {
    const int target = y.ids[static_cast<std::size_t>(i + 1)];
    if (target == Vocabulary::kPad) continue;
    if (target < 0 || target >= vocab) {
      throw Error(ErrorCode::kInvalidArgument, "target id out of range: " + std::to_string(target));
    }
    const Eigen::RowVectorXd logp = log_softmax(logits.row(i));
    out.loss += -(1.0 - smoothing) * logp(target) - off * logp.sum();
    auto grad = out.d_logits.row(i);
    grad = logp.array().exp();
    grad.array() -= off;
    grad(target) -= 1.0 - smoothing;
  }
  return out;
}

}  // namespace rest
