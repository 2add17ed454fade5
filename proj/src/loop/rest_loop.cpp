#include "rest/loop/rest_loop.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "rest/captioner/checkpoint.hpp"
#include "rest/captioner/generate.hpp"
#include "rest/captioner/network.hpp"
#include "rest/core/error.hpp"
#include "rest/core/log.hpp"
#include "rest/core/parallel.hpp"

namespace rest {

using nlohmann::json;

void RestConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::kConfig, m); };
  if (K < 1) fail("K must be >= 1");
  if (H < 1) fail("H must be >= 1");
  if (R < 1) fail("R must be >= 1");
  if (total_epochs < R) fail("total_epochs must be >= R");
  if (beam < 1) fail("beam must be >= 1");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (max_caption_tokens < 1) fail("max_caption_tokens must be >= 1");
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) fail("label_smoothing must be in [0, 1)");
  if (init_prompts.empty()) fail("init_prompts must not be empty");
  if (model_dim < 1 || ffn_dim < 1 || layers < 1) fail("model dims must be positive");
  if (!(optimizer.lr >= 0.0) || !(optimizer.lr_min >= 0.0)) fail("learning rates must be >= 0");
  if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0) ||
      !(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0)) {
    fail("optimizer betas must be in [0, 1)");
  }
  if (eval_k < 1) fail("eval_k must be >= 1");
}

RestConfig RestConfig::synthetic_preset() {
  RestConfig c;
  c.H = 20;
  c.R = 10;
  c.total_epochs = 30;
  return c;
}

json to_json(const RestConfig& c) {
  return {{"seed", c.seed},
          {"threads", c.threads},
          {"rest",
           {{"K", c.K},
            {"H", c.H},
            {"R", c.R},
            {"total_epochs", c.total_epochs},
            {"beam", c.beam},
            {"batch_size", c.batch_size},
            {"max_caption_tokens", c.max_caption_tokens},
            {"label_smoothing", c.label_smoothing},
            {"adapter", c.adapter_enabled},
            {"prompt", c.prompt},
            {"init_prompts", c.init_prompts}}},
          {"optimizer",
           {{"lr", c.optimizer.lr},
            {"lr_min", c.optimizer.lr_min},
            {"beta1", c.optimizer.beta1},
            {"beta2", c.optimizer.beta2},
            {"eps", c.optimizer.eps},
            {"weight_decay", c.optimizer.weight_decay}}},
          {"model", {{"model_dim", c.model_dim}, {"ffn_dim", c.ffn_dim}, {"layers", c.layers}}},
          {"eval", {{"k", c.eval_k}}}};
}

namespace {

void reject_unknown(const json& given, const json& schema, const std::string& prefix) {
  if (!given.is_object()) {
    throw Error(ErrorCode::kConfig, "config section '" + prefix + "' must be an object");
  }
  for (const auto& [k, v] : given.items()) {
    const std::string path = prefix.empty() ? k : prefix + "." + k;
    if (!schema.contains(k)) throw Error(ErrorCode::kConfig, "unknown config key: " + path);
    if (schema.at(k).is_object()) reject_unknown(v, schema.at(k), path);
  }
}

}  // namespace

RestConfig rest_config_from_json(const json& j) {
  RestConfig c;
  reject_unknown(j, to_json(c), "");
  try {
    auto get = [](const json& obj, const char* k, auto& field) {
      if (obj.contains(k)) field = obj.at(k).get<std::decay_t<decltype(field)>>();
    };
    get(j, "seed", c.seed);
    get(j, "threads", c.threads);
    if (j.contains("rest")) {
      const json& r = j.at("rest");
      get(r, "K", c.K);
      get(r, "H", c.H);
      get(r, "R", c.R);
      get(r, "total_epochs", c.total_epochs);
      get(r, "beam", c.beam);
      get(r, "batch_size", c.batch_size);
      get(r, "max_caption_tokens", c.max_caption_tokens);
      get(r, "label_smoothing", c.label_smoothing);
      get(r, "adapter", c.adapter_enabled);
      get(r, "prompt", c.prompt);
      get(r, "init_prompts", c.init_prompts);
    }
    if (j.contains("optimizer")) {
      const json& o = j.at("optimizer");
      get(o, "lr", c.optimizer.lr);
      get(o, "lr_min", c.optimizer.lr_min);
      get(o, "beta1", c.optimizer.beta1);
      get(o, "beta2", c.optimizer.beta2);
      get(o, "eps", c.optimizer.eps);
      get(o, "weight_decay", c.optimizer.weight_decay);
    }
    if (j.contains("model")) {
      const json& m = j.at("model");
      get(m, "model_dim", c.model_dim);
      get(m, "ffn_dim", c.ffn_dim);
      get(m, "layers", c.layers);
    }
    if (j.contains("eval")) get(j.at("eval"), "k", c.eval_k);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

void apply_override(json& config, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw Error(ErrorCode::kConfig, "override must look like key=value: " + std::string(assignment));
  }
  const std::string path(assignment.substr(0, eq));
  const std::string raw(assignment.substr(eq + 1));
  json* node = &config;
  std::size_t start = 0;
  for (;;) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node->is_object() || !node->contains(key)) {
      throw Error(ErrorCode::kConfig, "unknown config key: " + path);
    }
    node = &(*node)[key];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;
  }
  if (node->is_object() && !value.is_object()) {
    throw Error(ErrorCode::kConfig, "cannot replace config section " + path + " with a value");
  }
  *node = std::move(value);
}

std::vector<std::vector<std::string>> initial_frame_captions(const DatasetManifest& manifest,
                                                             FrameCaptioner& captioner,
                                                             const std::vector<std::string>& prompts,
                                                             TextEmbeddingCache& texts) {
  std::vector<std::vector<std::string>> out(manifest.size());
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    const auto& rec = manifest.records[i];
    for (std::size_t t = 0; t < rec.frame_count; ++t) {
      std::string best;
      double best_score = -std::numeric_limits<double>::infinity();
      for (const auto& p : prompts) {
        const std::string text = canonical_caption(captioner.caption(i, t, p));
        if (text.empty()) continue;
        const double s = video_text_similarity(rec.frame_embeddings[t], texts.embed(text));
        if (s > best_score) {
          best_score = s;
          best = text;
        }
      }
      if (!best.empty()) out[i].push_back(std::move(best));
    }
  }
  return out;
}

Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& captions,
                            const std::vector<std::string>& prompts) {
  std::vector<std::string> corpus(prompts.begin(), prompts.end());
  for (const auto& v : captions) corpus.insert(corpus.end(), v.begin(), v.end());
  return Vocabulary::from_corpus(corpus);
}

std::map<std::string, std::string> manifest_labels(const DatasetManifest& manifest) {
  std::map<std::string, std::string> out;
  for (const auto& r : manifest.records) {
    if (r.label) out[r.id] = *r.label;
  }
  return out;
}

RelevanceContext RestState::relevance() const {
  return RelevanceContext{videos, texts, config.threads};
}

namespace {

std::size_t steps_per_epoch(std::size_t n, std::size_t batch) { return (n + batch - 1) / batch; }

std::vector<std::string> ids_of(const DatasetManifest& m) {
  std::vector<std::string> ids;
  for (const auto& r : m.records) ids.push_back(r.id);
  return ids;
}

json cache_stats(const CaptionCache& cache) {
  double sum = 0.0, lo = 1.0;
  std::size_t n = 0, init = 0, self = 0, retrieved = 0;
  for (std::size_t i = 0; i < cache.size(); ++i) {
    for (const auto& e : cache.entries(i)) {
      sum += e.relevance;
      lo = std::min(lo, e.relevance);
      ++n;
      (e.origin == Origin::kInit ? init : e.origin == Origin::kSelfGenerated ? self : retrieved)++;
    }
  }
  return {{"mean_relevance", n ? sum / static_cast<double>(n) : 0.0},
          {"min_relevance", n ? lo : 0.0},
          {"entries", n},
          {"origins", {{"init", init}, {"self_generated", self}, {"retrieved", retrieved}}}};
}

CaptionerConfig captioner_config(const RestConfig& c, const DatasetManifest& m, int vocab_size) {
  CaptionerConfig cc;
  cc.vocab_size = vocab_size;
  cc.feature_dim = static_cast<int>(m.feature_dim);
  cc.model_dim = c.model_dim;
  cc.ffn_dim = c.ffn_dim;
  cc.layers = c.layers;
  cc.max_len = kMaxSequenceLength;
  cc.seed = mix_seed(c.seed, 0x30DE1u);
  return cc;
}

std::vector<int> prompt_ids_of(const std::string& prompt, const Vocabulary& vocab) {
  return tokenize(prompt, vocab).ids;
}

}  // namespace

RestState init_rest(const DatasetManifest& manifest, Providers providers, TextEmbeddingCache& texts,
                    const RestConfig& config) {
  config.validate();
  if (!providers.captioner) throw Error(ErrorCode::kInvalidArgument, "no frame captioner");
  if (manifest.size() == 0) throw Error(ErrorCode::kInvalidArgument, "empty dataset");
  if (texts.dim() != manifest.dim) {
    throw Error(ErrorCode::kDimMismatch, "text encoder dim " + std::to_string(texts.dim()) +
                                             " differs from video embedding dim " +
                                             std::to_string(manifest.dim));
  }
  RestState s;
  s.manifest = &manifest;
  s.config = config;
  s.texts = &texts;
  s.rng = Rng(mix_seed(config.seed, 0x7A1Bu));

  s.videos.reserve(manifest.size());
  for (const auto& r : manifest.records) s.videos.push_back(aggregate_video_embedding(r.frame_embeddings));
  ++s.video_embedding_passes;
  s.index = build_neighbor_index(s.videos, config.H, config.threads);
  ++s.index_builds;

  s.initial_captions = initial_frame_captions(manifest, *providers.captioner, config.init_prompts, texts);
  std::vector<std::string> prompts = config.init_prompts;
  prompts.push_back(config.prompt);
  s.vocab = build_vocabulary(s.initial_captions, prompts);
  s.prompt_ids = prompt_ids_of(config.prompt, s.vocab);

  s.cache = init_caches(ids_of(manifest), s.initial_captions, s.index, config.K, s.relevance());
  s.cache_history.push_back(s.cache);

  s.model = ToyCaptioner::create(captioner_config(config, manifest, s.vocab.size()), config.adapter_enabled);
  s.optimizer = OptimizerState::for_model(s.model.params);
  s.schedule = config.optimizer;
  s.schedule.total_steps = steps_per_epoch(manifest.size(), config.batch_size) * config.total_epochs;

  json rec = cache_stats(s.cache);
  rec["type"] = "round";
  rec["round"] = 0;
  rec["epoch"] = 0;
  s.metrics.push_back(std::move(rec));
  return s;
}

void train_phase(RestState& s, std::size_t epochs) {
  const std::size_t n = s.manifest->size();
  for (std::size_t i = 0; i < n; ++i) {
    if (s.cache.entries(i).empty()) {
      throw Error(ErrorCode::kInvalidArgument, "empty caption cache for video " + s.cache.id(i));
    }
  }
  const std::size_t mutations_before = s.cache.mutation_count();
  const int prompt_len = static_cast<int>(s.prompt_ids.size());
  std::vector<std::size_t> order(n);
  for (std::size_t e = 0; e < epochs; ++e) {
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    s.rng.shuffle(order);
    const double lr = scheduled_lr(s.schedule, s.optimizer.step);
    double total = 0.0;
    for (std::size_t start = 0; start < n; start += s.config.batch_size) {
      std::vector<TrainingExample> batch;
      for (std::size_t j = start; j < std::min(n, start + s.config.batch_size); ++j) {
        const std::size_t v = order[j];
        const auto& entries = s.cache.entries(v);
        const auto& pick = entries[s.rng.below(entries.size())];
        batch.push_back({&s.manifest->records[v].features, build_target(s.prompt_ids, pick.text, s.vocab),
                         prompt_len, s.manifest->records[v].id});
      }
      total += train_step(s.model, batch, s.optimizer, s.schedule, s.config.label_smoothing,
                          s.config.threads) *
               static_cast<double>(batch.size());
    }
    ++s.epoch;
    s.metrics.push_back({{"type", "epoch"},
                         {"epoch", s.epoch},
                         {"round", s.round},
                         {"loss", total / static_cast<double>(n)},
                         {"lr", lr}});
  }
  s.mutations_during_training += s.cache.mutation_count() - mutations_before;
}

std::vector<std::string> generate_all(const ToyCaptioner& model, const DatasetManifest& manifest,
                                      const Vocabulary& vocab, const std::string& prompt,
                                      std::size_t beam, std::size_t max_tokens, std::size_t threads) {
  std::vector<std::string> out(manifest.size());
  std::vector<char> complete(manifest.size(), 1);
  parallel_for(manifest.size(), threads, [&](std::size_t i) {
    const VisualTokens visual = encode_video(manifest.records[i].features, model);
    const Caption c = generate(visual, model, vocab, prompt, static_cast<int>(beam),
                               static_cast<int>(max_tokens) + 1);
    out[i] = c.text;
    complete[i] = c.complete;
  });
  const auto partial = std::count(complete.begin(), complete.end(), 0);
  if (partial > 0) {
    log::warning(std::to_string(partial) + " generated caption(s) did not reach EOS");
  }
  return out;
}

std::vector<std::string> generate_all(const RestState& s) {
  return generate_all(s.model, *s.manifest, s.vocab, s.config.prompt, s.config.beam,
                      s.config.max_caption_tokens, s.config.threads);
}

void retrieval_round(RestState& s) {
  const int round = s.round + 1;
  const auto captions = generate_all(s);
  const RelevanceContext ctx = s.relevance();
  std::size_t appended = 0, empty = 0;
  for (std::size_t i = 0; i < captions.size(); ++i) {
    if (canonical_caption(captions[i]).empty()) {
      ++empty;
      log::warning("empty generated caption for video " + s.cache.id(i) + " skipped");
      continue;
    }
    if (append_generated(s.cache, i, captions[i], round, ctx)) ++appended;
  }
  refresh_all(s.cache, s.index, round, ctx);
  s.round = round;
  s.generated.push_back(captions);
  s.cache_history.push_back(s.cache);

  json rec = cache_stats(s.cache);
  rec["type"] = "round";
  rec["round"] = round;
  rec["epoch"] = s.epoch;
  rec["appended"] = appended;
  rec["empty_generations"] = empty;
  rec["text_cache_size"] = s.texts->size();
  s.metrics.push_back(std::move(rec));
}

namespace {

void write_jsonl_line(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw Error(ErrorCode::kMissingFile, "cannot write " + path.string());
  out << j.dump() << "\n";
}

std::map<std::string, std::string> by_id(const DatasetManifest& m, const std::vector<std::string>& v) {
  std::map<std::string, std::string> out;
  for (std::size_t i = 0; i < m.size(); ++i) out[m.records[i].id] = v[i];
  return out;
}

}  // namespace

RunArtifacts run_rest(const DatasetManifest& manifest, Providers providers, const RestConfig& config,
                      const RunOptions& options) {
  if (!providers.text) throw Error(ErrorCode::kInvalidArgument, "no text encoder");
  TextEmbeddingCache texts(*providers.text);
  RestState s = init_rest(manifest, providers, texts, config);

  namespace fs = std::filesystem;
  std::optional<fs::path> dir = options.run_dir;
  std::size_t metrics_written = 0;
  auto flush_metrics = [&] {
    if (!dir) return;
    for (; metrics_written < s.metrics.size(); ++metrics_written) {
      write_jsonl_line(*dir / "metrics.jsonl", s.metrics[metrics_written]);
    }
  };
  auto checkpoint_extra = [&] {
    return json{{"vocab", s.vocab.words()}, {"prompt", config.prompt}, {"epoch", s.epoch}};
  };
  RunArtifacts out;
  if (dir) {
    fs::create_directories(*dir / "caches");
    fs::create_directories(*dir / "checkpoints");
    fs::remove(*dir / "metrics.jsonl");
    json frozen = to_json(config);
    frozen.update(options.extra_config);
    std::ofstream(*dir / "config.json", std::ios::trunc) << frozen.dump(2) << "\n";
    save_caches(s.cache, *dir / "caches" / "round_0.jsonl");
    flush_metrics();
  }

  try {
    for (std::size_t r = 0; r < config.rounds(); ++r) {
      train_phase(s, config.R);
      retrieval_round(s);
      if (dir) {
        const std::string name = "round_" + std::to_string(s.round);
        save_caches(s.cache, *dir / "caches" / (name + ".jsonl"));
        const fs::path ckpt = *dir / "checkpoints" / (name + ".bin");
        save_checkpoint(s.model, ckpt, s.round, checkpoint_extra());
        out.checkpoints.push_back(ckpt);
      }
      flush_metrics();
    }
    const std::size_t leftover = config.total_epochs - config.rounds() * config.R;
    if (leftover > 0) train_phase(s, leftover);
  } catch (const Error& e) {
    if (dir && (e.code() == ErrorCode::kNumeric || e.code() == ErrorCode::kProvider)) {
      save_checkpoint(s.model, *dir / "checkpoints" / "abort.bin", s.round,
                      json{{"vocab", s.vocab.words()}, {"prompt", config.prompt}, {"epoch", s.epoch},
                           {"reason", e.what()}});
      save_caches(s.cache, *dir / "caches" / "abort.jsonl");
      flush_metrics();
    }
    throw;
  }

  std::vector<std::string> final_captions;
  if (config.total_epochs == config.rounds() * config.R && !s.generated.empty()) {
    final_captions = s.generated.back();
  } else {
    final_captions = generate_all(s);
  }

  out.final_captions = by_id(manifest, final_captions);
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    const auto& frames = s.initial_captions[i];
    out.init_captions[manifest.records[i].id] = frames.empty() ? "" : frames[frames.size() / 2];
  }
  const auto labels = manifest_labels(manifest);
  json final_rec = {{"type", "final"}, {"rounds", s.round}, {"epochs", s.epoch}};
  if (!labels.empty() && manifest.classes.size() >= 2) {
    const ClassEmbeddingTable table(manifest.classes, texts);
    out.final_eval = evaluate_topk(out.final_captions, labels, table, texts, config.eval_k);
    out.init_eval = evaluate_topk(out.init_captions, labels, table, texts, config.eval_k);
    final_rec["top1"] = out.final_eval->top1;
    final_rec["topk"] = out.final_eval->topk;
    final_rec["init_top1"] = out.init_eval->top1;
    final_rec["init_topk"] = out.init_eval->topk;
  }
  final_rec["text_provider_calls"] = texts.provider_calls();
  s.metrics.push_back(std::move(final_rec));

  if (dir) {
    const fs::path ckpt = *dir / "checkpoints" / "final.bin";
    save_checkpoint(s.model, ckpt, s.round, checkpoint_extra());
    out.checkpoints.push_back(ckpt);
    std::ofstream fc(*dir / "final_captions.jsonl", std::ios::trunc);
    for (const auto& [id, text] : out.final_captions) fc << json{{"id", id}, {"caption", text}}.dump() << "\n";
    flush_metrics();
  }

  out.model = std::move(s.model);
  out.vocab = std::move(s.vocab);
  out.initial_captions = std::move(s.initial_captions);
  out.cache_history = std::move(s.cache_history);
  out.generated = std::move(s.generated);
  out.metrics = std::move(s.metrics);
  out.rounds_completed = static_cast<std::size_t>(s.round);
  out.epochs_completed = s.epoch;
  out.video_embedding_passes = s.video_embedding_passes;
  out.index_builds = s.index_builds;
  out.mutations_during_training = s.mutations_during_training;
  return out;
}

LabelModel train_label_model(const DatasetManifest& manifest, const Vocabulary& vocab,
                             const std::vector<std::string>& train_classes, const RestConfig& config,
                             std::size_t epochs) {
  const std::set<std::string> allowed(train_classes.begin(), train_classes.end());
  std::vector<LabeledVideo> data;
  for (const auto& r : manifest.records) {
    if (r.label && allowed.count(*r.label)) data.push_back({&r.features, *r.label, r.id});
  }
  LabelModel out;
  out.model = ToyCaptioner::create(captioner_config(config, manifest, vocab.size()), config.adapter_enabled);
  FinetuneConfig fc;
  fc.epochs = epochs;
  fc.batch_size = config.batch_size;
  fc.optimizer = config.optimizer;
  fc.label_smoothing = config.label_smoothing;
  fc.seed = config.seed;
  fc.threads = config.threads;
  out.losses = finetune_supervised(out.model, data, prompt_ids_of(config.prompt, vocab), vocab, fc);
  return out;
}

ProbeResult adapter_probe(const DatasetManifest& manifest, const std::string& class_a,
                          const std::string& class_b, TextEmbeddingCache& texts,
                          const RestConfig& config, std::size_t epochs) {
  std::vector<std::size_t> videos;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    const auto& l = manifest.records[i].label;
    if (l && (*l == class_a || *l == class_b)) videos.push_back(i);
  }
  if (videos.size() < 4) throw Error(ErrorCode::kInvalidArgument, "order pair has too few videos");
  Rng rng(mix_seed(config.seed, 0x9B0Bu));
  // Stratified split: alternate members of each class go to train and test.
  std::vector<std::size_t> train, test;
  for (const auto* cls : {&class_a, &class_b}) {
    std::vector<std::size_t> members;
    for (std::size_t v : videos) {
      if (*manifest.records[v].label == *cls) members.push_back(v);
    }
    rng.shuffle(members);
    for (std::size_t j = 0; j < members.size(); ++j) (j % 2 == 0 ? train : test).push_back(members[j]);
  }
  const Vocabulary vocab = Vocabulary::from_corpus({config.prompt, class_a, class_b});
  std::vector<LabeledVideo> data;
  for (std::size_t v : train) {
    data.push_back({&manifest.records[v].features, *manifest.records[v].label, manifest.records[v].id});
  }
  ToyCaptioner model =
      ToyCaptioner::create(captioner_config(config, manifest, vocab.size()), config.adapter_enabled);
  FinetuneConfig fc;
  fc.epochs = epochs;
  fc.batch_size = config.batch_size;
  fc.optimizer = config.optimizer;
  fc.label_smoothing = config.label_smoothing;
  fc.seed = config.seed;
  fc.threads = config.threads;
  finetune_supervised(model, data, prompt_ids_of(config.prompt, vocab), vocab, fc);

  const ClassEmbeddingTable table({class_a, class_b}, texts);
  std::size_t hits = 0;
  std::vector<std::string> captions(test.size());
  parallel_for(test.size(), config.threads, [&](std::size_t j) {
    const VisualTokens visual = encode_video(manifest.records[test[j]].features, model);
    captions[j] = generate(visual, model, vocab, config.prompt, static_cast<int>(config.beam),
                           static_cast<int>(config.max_caption_tokens) + 1)
                      .text;
  });
  for (std::size_t j = 0; j < test.size(); ++j) {
    const ClassRanking r = clip_tam_classify(captions[j], table, texts);
    if (!r.abstain && table.names()[r.top()] == *manifest.records[test[j]].label) ++hits;
  }
  ProbeResult out;
  out.train_videos = train.size();
  out.test_videos = test.size();
  out.accuracy = static_cast<double>(hits) / static_cast<double>(test.size());
  return out;
}

}  // namespace rest
