#include "rest/captioner/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "rest/cache/caption_cache.hpp"
#include "rest/core/error.hpp"
#include "rest/core/parallel.hpp"
#include "rest/core/random.hpp"

namespace rest {

OptimizerState OptimizerState::for_model(const CaptionerParams& params) {
  OptimizerState s;
  s.m = params.zeros_like();
  s.v = params.zeros_like();
  return s;
}

double scheduled_lr(const OptimizerConfig& c, std::size_t step) {
  const double total = static_cast<double>(std::max<std::size_t>(1, c.total_steps));
  const double progress = std::min(1.0, static_cast<double>(step) / total);
  return c.lr_min + 0.5 * (c.lr - c.lr_min) * (1.0 + std::cos(std::numbers::pi * progress));
}

void adamw_update(CaptionerParams& params, const CaptionerParams& grads, OptimizerState& state,
                  const OptimizerConfig& c) {
  const double lr = scheduled_lr(c, state.step);
  ++state.step;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));

  std::vector<Mat*> p_list, m_list, v_list;
  std::vector<const Mat*> g_list;
  for_each_tensor(params, [&](const std::string&, Mat& m) { p_list.push_back(&m); });
  for_each_tensor(state.m, [&](const std::string&, Mat& m) { m_list.push_back(&m); });
  for_each_tensor(state.v, [&](const std::string&, Mat& m) { v_list.push_back(&m); });
  for_each_tensor(grads, [&](const std::string&, const Mat& m) { g_list.push_back(&m); });

  for (std::size_t i = 0; i < p_list.size(); ++i) {
    auto p = p_list[i]->array();
    auto m = m_list[i]->array();
    auto v = v_list[i]->array();
    const auto g = g_list[i]->array();
    m = c.beta1 * m + (1.0 - c.beta1) * g;
    v = c.beta2 * v + (1.0 - c.beta2) * g.square();
    p -= lr * ((m / bc1) / ((v / bc2).sqrt() + c.eps) + c.weight_decay * p);
  }
}

TokenSequence build_target(const std::vector<int>& prompt_ids, std::string_view caption,
                           const Vocabulary& vocab) {
  TokenSequence seq;
  seq.vocab_size = vocab.size();
  seq.ids.push_back(Vocabulary::kBos);
  seq.ids.insert(seq.ids.end(), prompt_ids.begin(), prompt_ids.end());
  const auto words = tokenize(canonical_caption(caption), vocab);
  seq.ids.insert(seq.ids.end(), words.ids.begin(), words.ids.end());
  seq.ids.push_back(Vocabulary::kEos);
  return seq;
}

LossAndGrad loss_and_gradient(const ToyCaptioner& model, std::span<const TrainingExample> batch,
                              double smoothing, std::size_t threads) {
  LossAndGrad out;
  out.grads = model.params.zeros_like();
  if (batch.empty()) return out;
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  // Per-example buffers summed in batch order keep the result independent of
  // the thread count.
  std::vector<CaptionerParams> grads(batch.size());
  std::vector<double> losses(batch.size(), 0.0);
  parallel_for(batch.size(), threads, [&](std::size_t i) {
    const auto& ex = batch[i];
    if (!ex.frames) throw Error(ErrorCode::kInvalidArgument, "training example without frames");
    grads[i] = model.params.zeros_like();
    EncoderCache enc;
    const VisualTokens visual = encode_video(*ex.frames, model, &enc);
    DecoderCache dec;
    const Mat logits = decode_logits(visual, ex.target.ids, model, &dec);
    LossResult lr = lm_loss(logits, ex.target, ex.prompt_len, smoothing);
    losses[i] = lr.loss * inv_b;
    lr.d_logits *= inv_b;
    Mat d_visual;
    decode_backward(model, dec, lr.d_logits, grads[i], d_visual);
    encode_video_backward(model, enc, d_visual, grads[i]);
  });
  std::vector<Mat*> total;
  for_each_tensor(out.grads, [&](const std::string&, Mat& m) { total.push_back(&m); });
  for (std::size_t i = 0; i < batch.size(); ++i) {
    out.loss += losses[i];
    std::size_t t = 0;
    for_each_tensor(grads[i], [&](const std::string&, const Mat& m) { *total[t++] += m; });
  }
  return out;
}

double train_step(ToyCaptioner& model, std::span<const TrainingExample> batch,
                  OptimizerState& state, const OptimizerConfig& config, double smoothing,
                  std::size_t threads) {
  LossAndGrad lg = loss_and_gradient(model, batch, smoothing, threads);
  if (!std::isfinite(lg.loss)) {
    std::ostringstream msg;
    msg << "non-finite loss " << lg.loss << " at step " << state.step << "; batch:";
    for (const auto& ex : batch) msg << " " << ex.tag;
    msg << "; parameter norms:";
    for_each_tensor(model.params, [&](const std::string& name, const Mat& m) {
      msg << " " << name << "=" << m.norm();
    });
    throw Error(ErrorCode::kNumeric, msg.str());
  }
  adamw_update(model.params, lg.grads, state, config);
  return lg.loss;
}

std::size_t few_shot_epochs(std::size_t shots) {
  if (shots == 0) return 30;
  return std::max<std::size_t>(400 / shots, 30);
}

std::vector<double> finetune_supervised(ToyCaptioner& model, std::span<const LabeledVideo> data,
                                        const std::vector<int>& prompt_ids,
                                        const Vocabulary& vocab, const FinetuneConfig& config) {
  std::vector<double> losses;
  if (config.epochs == 0 || data.empty()) return losses;
  const int prompt_len = static_cast<int>(prompt_ids.size());
  std::vector<TrainingExample> examples;
  for (const auto& item : data) {
    examples.push_back({item.frames, build_target(prompt_ids, item.caption, vocab), prompt_len, item.tag});
  }
  const std::size_t batch = std::max<std::size_t>(1, config.batch_size);
  const std::size_t steps_per_epoch = (examples.size() + batch - 1) / batch;
  OptimizerConfig opt = config.optimizer;
  opt.total_steps = steps_per_epoch * config.epochs;
  OptimizerState state = OptimizerState::for_model(model.params);
  Rng rng(mix_seed(config.seed, 0xF17E7u));

  std::vector<std::size_t> order(examples.size());
  for (std::size_t e = 0; e < config.epochs; ++e) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      std::vector<TrainingExample> mb;
      for (std::size_t j = start; j < std::min(order.size(), start + batch); ++j) {
        mb.push_back(examples[order[j]]);
      }
      epoch_loss += train_step(model, mb, state, opt, config.label_smoothing, config.threads) *
                    static_cast<double>(mb.size());
    }
    losses.push_back(epoch_loss / static_cast<double>(order.size()));
  }
  return losses;
}

}  // namespace rest
