// End-to-end acceptance checks. One line per criterion; exit status is the
// number of failing criteria (capped at 1).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "rest/cache/caption_cache.hpp"
#include "rest/captioner/checkpoint.hpp"
#include "rest/captioner/generate.hpp"
#include "rest/captioner/network.hpp"
#include "rest/captioner/trainer.hpp"
#include "rest/cli/experiments.hpp"
#include "rest/core/log.hpp"
#include "rest/loop/rest_loop.hpp"
#include "rest/synth/synthworld.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace rest;
using namespace rest::oracle;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void report(int n, bool ok, const std::string& detail) {
  std::printf("criterion %d: %s  %s\n", n, ok ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string pct(double x) { return fmt("%.1f", 100.0 * x); }

// ---- criterion 1 ---------------------------------------------------------

struct KernelErrors {
  double lm_loss = 0, adapter = 0, similarity = 0, beam = 0, refresh = 0, pool = 0, decoder = 0;
  bool beam_tokens = true, refresh_order = true, pool_order = true;
};

void kernel_oracles() {
  KernelErrors e;
  Rng rng(101);

  for (int trial = 0; trial < 200; ++trial) {
    const int vocab = 6 + static_cast<int>(rng.below(8));
    const int prompt = static_cast<int>(rng.below(3));
    TokenSequence y;
    y.vocab_size = vocab;
    y.ids.push_back(Vocabulary::kBos);
    for (int i = 0, n = prompt + static_cast<int>(rng.below(5)); i < n; ++i) {
      y.ids.push_back(rng.below(5) == 0 ? Vocabulary::kPad : 4 + static_cast<int>(rng.below(vocab - 4)));
    }
    y.ids.push_back(Vocabulary::kEos);
    Mat logits(static_cast<Eigen::Index>(y.ids.size()), vocab);
    for (Eigen::Index i = 0; i < logits.size(); ++i) logits.data()[i] = 3.0 * rng.normal();
    const double eps = 0.05 * static_cast<double>(rng.below(6));
    e.lm_loss = std::max(e.lm_loss, std::abs(lm_loss(logits, y, prompt, eps).loss -
                                              lm_loss_ref(logits, y.ids, prompt, eps)));
  }

  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t t = 1 + rng.below(9), s = 1 + rng.below(4), d = 1 + rng.below(6);
    auto z = random_frames(rng, t, s, d);
    Mat k(3, static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < k.size(); ++i) k.data()[i] = rng.normal();
    const auto got = temporal_adapter(z, k);
    const auto want = adapter_ref(z, k);
    for (std::size_t i = 0; i < got.spatial_values.size(); ++i) {
      e.adapter = std::max(e.adapter, std::abs(got.spatial_values[i] - want.spatial_values[i]));
    }
    for (std::size_t i = 0; i < got.cls_values.size(); ++i) {
      e.adapter = std::max(e.adapter, std::abs(got.cls_values[i] - want.cls_values[i]));
    }
  }

  auto random_unit = [&](std::size_t d) {
    std::vector<double> v(d);
    for (auto& x : v) x = rng.normal();
    return UnitEmbedding::normalize(v);
  };
  for (std::size_t n : {1u, 5u, 40u, 130u}) {
    std::vector<UnitEmbedding> emb;
    for (std::size_t i = 0; i < n; ++i) emb.push_back(random_unit(7));
    for (std::size_t h : {1u, 4u, 25u, 200u}) {
      const auto index = build_neighbor_index(emb, h, 2);
      for (std::size_t i = 0; i < n; ++i) {
        const auto row = index.neighbors(i);
        const auto want = oracle_row(emb, i, h);
        if (row.size() != want.size()) e.similarity = 1e300;
        for (std::size_t j = 0; j < std::min(row.size(), want.size()); ++j) {
          if (row[j].index != want[j].index) e.similarity = 1e300;
          e.similarity = std::max(e.similarity, std::abs(row[j].score - want[j].score));
        }
      }
    }
    for (std::size_t i = 0; i + 1 < n; ++i) {
      double dot = 0.0;
      for (std::size_t c = 0; c < 7; ++c) dot += emb[i][c] * emb[i + 1][c];
      e.similarity = std::max(e.similarity, std::abs(video_video_similarity(emb[i], emb[i + 1]) - dot));
      e.similarity = std::max(e.similarity, std::abs(video_text_similarity(emb[i], emb[i + 1]) - dot));
    }
    std::vector<double> mean(7, 0.0);
    for (const auto& f : emb)
      for (std::size_t c = 0; c < 7; ++c) mean[c] += f[c];
    double norm = 0.0;
    for (double x : mean) norm += x * x;
    norm = std::sqrt(norm);
    if (norm > 1e-6) {
      const auto agg = aggregate_video_embedding(emb);
      for (std::size_t c = 0; c < 7; ++c) e.similarity = std::max(e.similarity, std::abs(agg[c] - mean[c] / norm));
    }
  }

  {
    auto model = ToyCaptioner::create(tiny_config(7, 4));
    for (int trial = 0; trial < 20; ++trial) {
      randomize(model.params, rng, 0.5);
      const auto vis = encode_video(random_frames(rng, 3, 2, 4), model);
      const std::vector<int> prefix{Vocabulary::kBos, 4};
      const auto want = exhaustive_best(vis, model, prefix, 4);
      const auto got = beam_search(vis, model, prefix, 1000, 4);
      auto full = got.tokens;
      full.push_back(Vocabulary::kEos);
      if (!got.complete || full != want.tokens) e.beam_tokens = false;
      e.beam = std::max(e.beam, std::abs(got.score - want.score));
    }
  }

  {
    StubTextEncoder encoder(8, 5);
    TextEmbeddingCache texts(encoder);
    const std::vector<std::string> words{"red", "dog", "runs", "cat", "jumps", "blue", "car", "sits"};
    auto caption = [&] {
      std::string s = words[rng.below(words.size())];
      for (std::size_t i = 0, n = rng.below(3); i < n; ++i) s += " " + words[rng.below(words.size())];
      return s;
    };
    std::vector<UnitEmbedding> videos;
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < 12; ++i) {
      videos.push_back(random_unit(8));
      ids.push_back("v" + std::to_string(i));
    }
    const RelevanceContext ctx{videos, &texts, 1};
    auto scored = [&](const std::string& text, std::size_t owner) {
      const auto emb = texts.embed(text);
      return ScoredCaption{text, emb, videos[owner].dot(emb), Origin::kInit, 0};
    };
    for (int trial = 0; trial < 300; ++trial) {
      const std::size_t v = rng.below(videos.size());
      std::vector<ScoredCaption> resident, pool;
      for (std::size_t i = 0, n = rng.below(5); i < n; ++i) resident.push_back(scored(caption(), v));
      for (std::size_t i = 0, n = rng.below(20); i < n; ++i) pool.push_back(scored(caption(), rng.below(12)));
      const std::size_t k = 1 + rng.below(5);
      const auto got = select_top_k(v, resident, pool, k, 1, ctx);
      const auto want = oracle_top_k(videos[v], resident, pool, k);
      if (got.size() != want.size()) e.refresh_order = false;
      for (std::size_t j = 0; j < std::min(got.size(), want.size()); ++j) {
        if (got[j].text != want[j].first) e.refresh_order = false;
        e.refresh = std::max(e.refresh, std::abs(got[j].relevance - want[j].second));
      }
    }
    CaptionCache cache(ids, 3);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      std::vector<ScoredCaption> list;
      for (std::size_t j = 0, n = 1 + rng.below(3); j < n; ++j) list.push_back(scored(caption(), i));
      cache.set_entries(i, list);
    }
    const auto index = build_neighbor_index(videos, 4);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      std::vector<ScoredCaption> want;
      for (const auto& nb : oracle_row(videos, i, 4)) {
        for (const auto& c : cache.entries(nb.index)) want.push_back(c);
      }
      const auto got = build_candidate_pool(i, index, cache);
      if (got.size() != want.size()) e.pool_order = false;
      for (std::size_t j = 0; j < std::min(got.size(), want.size()); ++j) {
        if (got[j].text != want[j].text) e.pool_order = false;
        e.pool = std::max(e.pool, std::abs(got[j].relevance - want[j].relevance));
      }
    }
  }

  for (int layers : {1, 2}) {
    auto cfg = tiny_config(12, 4);
    cfg.layers = layers;
    auto model = ToyCaptioner::create(cfg);
    for (int trial = 0; trial < 10; ++trial) {
      randomize(model.params, rng, 0.2);
      const auto vis = encode_video(random_frames(rng, 1 + rng.below(5), 2, 4), model);
      std::vector<int> tokens{Vocabulary::kBos};
      for (std::size_t i = 0, n = 1 + rng.below(8); i < n; ++i) tokens.push_back(4 + static_cast<int>(rng.below(8)));
      const Mat got = decode_logits(vis, tokens, model);
      const Rows want = decoder_ref(vis.values, tokens, model.params);
      for (std::size_t i = 0; i < want.size(); ++i)
        for (std::size_t j = 0; j < want[i].size(); ++j)
          e.decoder = std::max(e.decoder, std::abs(got(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) - want[i][j]));
    }
  }

  const double kernel_max = std::max({e.lm_loss, e.adapter, e.similarity, e.beam, e.refresh, e.pool});
  const bool ok = kernel_max <= 1e-9 && e.decoder <= 1e-6 && e.beam_tokens && e.refresh_order && e.pool_order;
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "max err lm_loss %.1e adapter %.1e similarity %.1e beam %.1e refresh %.1e pool %.1e (<= 1e-9), "
                "decoder %.1e (<= 1e-6); beam tokens %s, refresh order %s, pool order %s",
                e.lm_loss, e.adapter, e.similarity, e.beam, e.refresh, e.pool, e.decoder,
                e.beam_tokens ? "ok" : "MISMATCH", e.refresh_order ? "ok" : "MISMATCH",
                e.pool_order ? "ok" : "MISMATCH");
  report(1, ok, buf);
}

// ---- criterion 2 ---------------------------------------------------------

void gradient_check() {
  const auto t0 = Clock::now();
  Rng rng(202);
  auto cfg = tiny_config(12, 4);
  cfg.layers = 1;
  cfg.model_dim = 8;
  auto model = ToyCaptioner::create(cfg, true);
  randomize(model.params, rng, 0.1);
  std::vector<FrameFeatureTensor> frames{random_frames(rng, 4, 2, 4), random_frames(rng, 3, 2, 4),
                                         random_frames(rng, 5, 2, 4)};
  std::vector<TrainingExample> batch{
      {&frames[0], {{Vocabulary::kBos, 4, 5, 7, 9, Vocabulary::kEos}, 12}, 2, "a"},
      {&frames[1], {{Vocabulary::kBos, 4, 11, 6, Vocabulary::kEos}, 12}, 1, "b"},
      {&frames[2], {{Vocabulary::kBos, 8, 10, Vocabulary::kPad, 6, Vocabulary::kEos}, 12}, 1, "c"}};

  const auto analytic = loss_and_gradient(model, batch, 0.1);
  std::vector<std::pair<std::string, Mat*>> params;
  for_each_tensor(model.params, [&](const std::string& name, Mat& m) { params.emplace_back(name, &m); });
  std::vector<const Mat*> grads;
  for_each_tensor(analytic.grads, [&](const std::string&, const Mat& m) { grads.push_back(&m); });

  const double h = 1e-5;
  double worst = 0.0;
  std::string worst_name;
  for (std::size_t t = 0; t < params.size(); ++t) {
    Mat& m = *params[t].second;
    Mat numeric(m.rows(), m.cols());
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      const double saved = m.data()[i];
      m.data()[i] = saved + h;
      const double up = loss_and_gradient(model, batch, 0.1).loss;
      m.data()[i] = saved - h;
      const double down = loss_and_gradient(model, batch, 0.1).loss;
      m.data()[i] = saved;
      numeric.data()[i] = (up - down) / (2 * h);
    }
    const double scale = std::max(numeric.norm(), grads[t]->norm());
    const double rel = scale < 1e-10 ? 0.0 : (numeric - *grads[t]).norm() / scale;
    if (rel >= worst) {
      worst = rel;
      worst_name = params[t].first;
    }
  }
  const double secs = seconds_since(t0);
  report(2, worst <= 1e-4 && secs < 60.0,
         "max rel err " + fmt("%.2e", worst) + " (" + worst_name + ") over " + std::to_string(params.size()) +
             " tensors, " + fmt("%.2f", secs) + " s");
}

// ---- criterion 3 ---------------------------------------------------------

void adapter_identity() {
  Rng rng(303);
  auto on = ToyCaptioner::create(tiny_config(12, 6), true);
  auto off = on;
  off.adapter_enabled = false;
  bool ok = on.params.adapter_kernel.cwiseAbs().maxCoeff() == 0.0;
  int exact = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto z = random_frames(rng, 1 + rng.below(8), 1 + rng.below(4), 6);
    const auto adapted = temporal_adapter(z, on.params.adapter_kernel);
    const bool same = adapted.spatial_values == z.spatial_values && adapted.cls_values == z.cls_values &&
                      (encode_video(z, on).values.array() == encode_video(z, off).values.array()).all();
    exact += same;
  }
  ok = ok && exact == 100;
  report(3, ok, std::to_string(exact) + "/100 inputs bit-identical with zero kernel");
}

// ---- end-to-end runs -----------------------------------------------------

struct SeedRuns {
  SynthWorld world;
  RunArtifacts h1, h20, k1, k5, one_round;
  double run_seconds_h1 = 0, run_seconds_h20 = 0;
};

RestConfig preset(int seed) {
  RestConfig c = RestConfig::synthetic_preset();
  c.seed = static_cast<std::uint64_t>(seed);
  return c;
}

bool own_captions_only(const RunArtifacts& run, std::string* why) {
  for (std::size_t r = 0; r < run.cache_history.size(); ++r) {
    const auto& cache = run.cache_history[r];
    for (std::size_t i = 0; i < cache.size(); ++i) {
      std::set<std::string> own;
      for (const auto& c : run.initial_captions[i]) own.insert(canonical_caption(c));
      for (std::size_t g = 0; g < r && g < run.generated.size(); ++g) own.insert(canonical_caption(run.generated[g][i]));
      for (const auto& e : cache.entries(i)) {
        if (e.origin == Origin::kRetrieved || !own.count(e.text)) {
          *why = cache.id(i) + " round " + std::to_string(r) + ": \"" + e.text + "\"";
          return false;
        }
      }
    }
  }
  return true;
}

std::vector<std::string> dir_files(const std::filesystem::path& dir) {
  std::vector<std::string> out;
  for (const auto& f : std::filesystem::recursive_directory_iterator(dir)) {
    if (f.is_regular_file()) out.push_back(std::filesystem::relative(f.path(), dir).string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

int main() {
  rest::log::set_level(rest::log::Level::kError);
  const auto start = Clock::now();

  kernel_oracles();
  gradient_check();
  adapter_identity();

  constexpr int kSeeds = 3;
  std::vector<SeedRuns> runs(kSeeds);
  rest::test::TempDir dirs;
  double c5_seconds = 0.0;
  for (int seed = 0; seed < kSeeds; ++seed) {
    SeedRuns& s = runs[static_cast<std::size_t>(seed)];
    SynthSpec spec;
    spec.seed = static_cast<std::uint64_t>(seed);
    s.world = generate_world(spec);
    StubTextEncoder text = stub_text_encoder(s.world);
    StubInitialCaptioner captioner(s.world);
    const Providers providers{&text, &captioner};

    RestConfig c = preset(seed);
    RunOptions opts;
    if (seed == 0) opts.run_dir = dirs / "determinism_a";
    auto t0 = Clock::now();
    s.h20 = run_rest(s.world.manifest, providers, c, opts);
    s.run_seconds_h20 = seconds_since(t0);

    c.H = 1;
    t0 = Clock::now();
    s.h1 = run_rest(s.world.manifest, providers, c);
    s.run_seconds_h1 = seconds_since(t0);
    c5_seconds += s.run_seconds_h1 + s.run_seconds_h20;

    c = preset(seed);
    c.K = 1;
    s.k1 = run_rest(s.world.manifest, providers, c);
    c.K = 5;
    s.k5 = run_rest(s.world.manifest, providers, c);

    c = preset(seed);
    c.R = c.total_epochs;
    s.one_round = run_rest(s.world.manifest, providers, c);
    std::printf("  seed %d runs done (%.0f s elapsed)\n", seed, seconds_since(start));
    std::fflush(stdout);
  }

  // 4
  {
    bool ok = true;
    std::string why;
    std::size_t checked = 0;
    for (const auto& s : runs) {
      ok = ok && s.h1.rounds_completed == 3 && own_captions_only(s.h1, &why);
      for (const auto& c : s.h1.cache_history) checked += c.size();
    }
    report(4, ok, ok ? "H=1: " + std::to_string(checked) + " cache lists over 3 seeds x 4 snapshots hold only own captions"
                     : "foreign caption at " + why);
  }

  // 5
  {
    bool ok = c5_seconds < 15 * 60;
    std::string detail;
    for (int seed = 0; seed < kSeeds; ++seed) {
      const auto& s = runs[static_cast<std::size_t>(seed)];
      const double h1 = s.h1.final_eval->top1, h20 = s.h20.final_eval->top1, init = s.h20.init_eval->top1;
      ok = ok && h20 >= h1 + 0.05 && h1 > init && h20 > init;
      detail += "seed " + std::to_string(seed) + ": H20 " + pct(h20) + " H1 " + pct(h1) + " init " + pct(init) + "; ";
    }
    report(5, ok, detail + fmt("%.0f s", c5_seconds));
  }

  // 6
  {
    bool ok = true;
    std::string detail;
    for (int seed = 0; seed < kSeeds; ++seed) {
      const auto& s = runs[static_cast<std::size_t>(seed)];
      const double k1 = s.k1.final_eval->top1, k3 = s.h20.final_eval->top1, k5 = s.k5.final_eval->top1;
      ok = ok && k3 >= k1 + 0.01 && std::abs(k5 - k3) <= 0.02;
      detail += "seed " + std::to_string(seed) + ": K1 " + pct(k1) + " K3 " + pct(k3) + " K5 " + pct(k5) + "; ";
    }
    report(6, ok, detail);
  }

  // 7
  {
    bool ok = true;
    std::string detail;
    for (int seed = 0; seed < kSeeds; ++seed) {
      const auto& s = runs[static_cast<std::size_t>(seed)];
      const double r3 = s.h20.final_eval->top1, r1 = s.one_round.final_eval->top1;
      ok = ok && s.h20.rounds_completed == 3 && s.one_round.rounds_completed == 1 && r3 >= r1 + 0.02;
      detail += "seed " + std::to_string(seed) + ": 3 rounds " + pct(r3) + " 1 round " + pct(r1) + "; ";
    }
    report(7, ok, detail + "30 epochs each");
  }

  // 8: the probe world drops the per-video feature offset
  {
    bool ok = true;
    std::string detail;
    constexpr std::size_t kProbeEpochs = 300;
    for (int seed = 0; seed < kSeeds; ++seed) {
      SynthSpec spec;
      spec.seed = static_cast<std::uint64_t>(seed);
      spec.video_noise = 0.0;
      const SynthWorld w = generate_world(spec);
      StubTextEncoder text = stub_text_encoder(w);
      StubInitialCaptioner captioner(w);
      Dataset d{&w.manifest, &text, &captioner, w.seen_classes, w.unseen_classes, {}};
      for (const auto& [a, b] : w.order_pairs) d.order_pairs.emplace_back(w.class_phrases()[a], w.class_phrases()[b]);
      RestConfig c = preset(seed);
      c.adapter_enabled = true;
      const double on = order_pair_probe(d, c, kProbeEpochs);
      c.adapter_enabled = false;
      const double off = order_pair_probe(d, c, kProbeEpochs);
      ok = ok && on >= off + 0.20;
      detail += "seed " + std::to_string(seed) + ": on " + pct(on) + " off " + pct(off) + "; ";
    }
    report(8, ok, detail + std::to_string(kProbeEpochs) + " epochs");
  }

  // 9
  {
    bool ok = true;
    std::string detail;
    for (int seed = 0; seed < kSeeds; ++seed) {
      const auto& s = runs[static_cast<std::size_t>(seed)];
      StubTextEncoder text = stub_text_encoder(s.world);
      StubInitialCaptioner captioner(s.world);
      Dataset d{&s.world.manifest, &text, &captioner, s.world.seen_classes, s.world.unseen_classes, {}};
      const RestConfig c = preset(seed);
      const auto r = compare_supervision(d, c, c.total_epochs);
      ok = ok && r.rest_unseen.top1 > r.label_unseen.top1 && r.label_seen_vocab_fraction >= 0.9 &&
           r.label_content_words > 0;
      detail += "seed " + std::to_string(seed) + ": REST " + pct(r.rest_unseen.top1) + " label " +
                pct(r.label_unseen.top1) + " seen-vocab " + pct(r.label_seen_vocab_fraction) + "% of " +
                std::to_string(r.label_content_words) + " words; ";
    }
    report(9, ok, detail);
  }

  // 10
  {
    SynthSpec spec;
    const SynthWorld w = generate_world(spec);
    StubTextEncoder text = stub_text_encoder(w);
    StubInitialCaptioner captioner(w);
    RunOptions opts;
    opts.run_dir = dirs / "determinism_b";
    const auto run = run_rest(w.manifest, {&text, &captioner}, preset(0), opts);
    const auto a = dirs / "determinism_a";
    const auto b = dirs / "determinism_b";
    const auto files_a = dir_files(a);
    bool ok = files_a == dir_files(b) &&
              rest::test::read_text(a / "metrics.jsonl") == rest::test::read_text(b / "metrics.jsonl") &&
              run.final_captions == runs[0].h20.final_captions;
    std::size_t checkpoints = 0;
    for (const auto& f : files_a) {
      if (f.rfind("checkpoints", 0) != 0) continue;
      ++checkpoints;
      ok = ok && file_hash(a / f) == file_hash(b / f);
    }
    ok = ok && checkpoints > 0;
    report(10, ok, "metrics.jsonl identical, " + std::to_string(checkpoints) + " checkpoint files hash-equal, " +
                       std::to_string(files_a.size()) + " files compared");
  }

  // 11: on the captions of the H=20 runs
  {
    bool perm = true, mono = true, gen = true;
    for (int seed = 0; seed < kSeeds; ++seed) {
      const auto& s = runs[static_cast<std::size_t>(seed)];
      StubTextEncoder text = stub_text_encoder(s.world);
      TextEmbeddingCache texts(text);
      const auto& names = s.world.class_phrases();
      const ClassEmbeddingTable table(names, texts);
      Rng rng(static_cast<std::uint64_t>(1100 + seed));
      for (int p = 0; p < 10; ++p) {
        auto shuffled = names;
        rng.shuffle(shuffled);
        const ClassEmbeddingTable other(shuffled, texts);
        for (const auto& [id, caption] : s.h20.final_captions) {
          const auto a = clip_tam_classify(caption, table, texts);
          const auto b = clip_tam_classify(caption, other, texts);
          if (a.abstain != b.abstain || (!a.abstain && names[a.top()] != shuffled[b.top()])) perm = false;
        }
      }
      const auto labels = manifest_labels(s.world.manifest);
      const auto rep = evaluate_topk(s.h20.final_captions, labels, table, texts, 5);
      for (std::size_t k = 1; k < names.size(); ++k) mono = mono && rep.accuracy_at(k) <= rep.accuracy_at(k + 1);

      std::map<std::string, std::string> unseen_labels;
      for (const auto& [id, l] : labels) {
        if (std::find(s.world.unseen_classes.begin(), s.world.unseen_classes.end(), l) != s.world.unseen_classes.end()) {
          unseen_labels[id] = l;
        }
      }
      const ClassEmbeddingTable unseen_table(s.world.unseen_classes, texts);
      for (const auto* captions : {&s.h20.final_captions, &s.h1.final_captions, &s.h20.init_captions}) {
        const auto standard = evaluate_topk(*captions, unseen_labels, unseen_table, texts, 2);
        const auto general = generalized_eval(*captions, labels, s.world.seen_classes, s.world.unseen_classes, texts, 2);
        gen = gen && general.videos == standard.videos && general.top1 <= standard.top1 && general.topk <= standard.topk;
      }
    }
    report(11, perm && mono && gen,
           std::string("argmax permutation-invariant: ") + (perm ? "yes" : "NO") + ", top-k monotone: " +
               (mono ? "yes" : "NO") + ", generalized <= standard: " + (gen ? "yes" : "NO"));
  }

  std::printf("acceptance: %d failing criteria, %.0f s\n", failures, seconds_since(start));
  return failures == 0 ? 0 : 1;
}
