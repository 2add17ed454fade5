#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rest/captioner/model.hpp"
#include "rest/captioner/network.hpp"
#include "rest/core/manifest.hpp"
#include "rest/core/tokenizer.hpp"

namespace rest {

// Decoupled-weight-decay Adam with a cosine learning-rate schedule.
struct OptimizerConfig {
  double lr = 3e-3;
  double lr_min = 3e-6;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-8;
  double weight_decay = 1e-3;
  std::size_t total_steps = 1;  // schedule length; steps beyond it stay at lr_min
};

struct OptimizerState {
  std::size_t step = 0;
  CaptionerParams m;
  CaptionerParams v;

  static OptimizerState for_model(const CaptionerParams& params);
};

double scheduled_lr(const OptimizerConfig& config, std::size_t step);

void adamw_update(CaptionerParams& params, const CaptionerParams& grads, OptimizerState& state,
                  const OptimizerConfig& config);

struct TrainingExample {
  const FrameFeatureTensor* frames = nullptr;
  TokenSequence target;  // [BOS, prompt, caption, EOS]
  int prompt_len = 0;
  std::string tag;       // video id, for diagnostics
};

// [BOS] + prompt + caption (at most kMaxCaptionWords words) + [EOS].
TokenSequence build_target(const std::vector<int>& prompt_ids, std::string_view caption,
                           const Vocabulary& vocab);

struct LossAndGrad {
  double loss = 0.0;
  CaptionerParams grads;
};

// Mean loss over the examples and its gradient w.r.t. every parameter.
LossAndGrad loss_and_gradient(const ToyCaptioner& model, std::span<const TrainingExample> batch,
                              double smoothing, std::size_t threads = 1);

// One optimizer update on the batch; returns the mean loss. Throws kNumeric,
// with parameter norms and batch ids in the message, if the loss is not
// finite.
double train_step(ToyCaptioner& model, std::span<const TrainingExample> batch,
                  OptimizerState& state, const OptimizerConfig& config, double smoothing,
                  std::size_t threads = 1);

struct FinetuneConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  OptimizerConfig optimizer;
  double label_smoothing = 0.2;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

// Epoch rule for few-shot finetuning with `shots` examples per class.
std::size_t few_shot_epochs(std::size_t shots);

struct LabeledVideo {
  const FrameFeatureTensor* frames = nullptr;
  std::string caption;  // class name used as the target caption
  std::string tag;
};

// Supervised training with fixed captions (class names); returns per-epoch
// mean losses.
std::vector<double> finetune_supervised(ToyCaptioner& model, std::span<const LabeledVideo> data,
                                        const std::vector<int>& prompt_ids,
                                        const Vocabulary& vocab, const FinetuneConfig& config);

}  // namespace rest
