#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>

#include "rest/core/error.hpp"
#include "rest/core/random.hpp"
#include "rest/core/tokenizer.hpp"
#include "rest/eval/clip_tam.hpp"
#include "rest/loop/rest_loop.hpp"
#include "rest/similarity/similarity.hpp"
#include "rest/synth/synthworld.hpp"
#include "test_util.hpp"

using namespace rest;

namespace {

SynthSpec small_spec(std::uint64_t seed = 3) {
  SynthSpec s;
  s.classes = 6;
  s.videos = 60;
  s.frames = 4;
  s.dim = 16;
  s.feature_dim = 8;
  s.spatial_tokens = 2;
  s.order_pair_fraction = 0.4;
  s.seed = seed;
  return s;
}

bool contains_phrase(const std::string& caption, const std::string& phrase) {
  return (" " + normalize_text(caption) + " ").find(" " + phrase + " ") != std::string::npos;
}

std::vector<UnitEmbedding> video_embeddings(const SynthWorld& w) {
  std::vector<UnitEmbedding> out;
  for (const auto& r : w.manifest.records) out.push_back(aggregate_video_embedding(r.frame_embeddings));
  return out;
}

std::string file_bytes(const std::filesystem::path& p) { return rest::test::read_text(p); }

}  // namespace

TEST_CASE("spec validation and json round trip") {
  SynthSpec s;
  CHECK_NOTHROW(s.validate());
  CHECK(s.order_pairs() == 1);
  CHECK(s.unseen_count() == 3);
  auto back = SynthSpec::from_json(s.to_json());
  CHECK(back.to_json() == s.to_json());
  CHECK_ERROR_CODE(SynthSpec::from_json({{"clases", 3}}), ErrorCode::kConfig);
  CHECK_ERROR_CODE(SynthSpec::from_json({{"classes", "ten"}}), ErrorCode::kConfig);

  auto bad = [](auto mutate) {
    SynthSpec b;
    mutate(b);
    CHECK_ERROR_CODE(generate_world(b), ErrorCode::kConfig);
  };
  bad([](SynthSpec& b) { b.classes = 1; });
  bad([](SynthSpec& b) { b.videos = 5; });
  bad([](SynthSpec& b) { b.p_correct = 1.5; });
  bad([](SynthSpec& b) { b.order_pair_fraction = -0.1; });
  bad([](SynthSpec& b) { b.noise_sigma = -1.0; });
  bad([](SynthSpec& b) { b.unseen_classes = 10; });
  bad([](SynthSpec& b) { b.classes = 200; });
}

TEST_CASE("world layout: splits, pairs, labels, ground truth") {
  SynthSpec s;
  auto w = generate_world(s);
  CHECK(w.manifest.size() == 200);
  CHECK(w.class_phrases().size() == 10);
  CHECK(w.unseen_classes.size() == 3);
  CHECK(w.seen_classes.size() == 7);
  for (const auto& u : w.unseen_classes) {
    CHECK(std::find(w.seen_classes.begin(), w.seen_classes.end(), u) == w.seen_classes.end());
  }
  REQUIRE(w.order_pairs.size() == 1);
  const auto [a, b] = w.order_pairs[0];
  CHECK(w.in_order_pair(a));
  CHECK_FALSE(w.in_order_pair(9));
  // a pair shares its noun, everything else has disjoint words
  auto wa = split_words(w.class_phrases()[a]);
  auto wb = split_words(w.class_phrases()[b]);
  CHECK(wa.back() == wb.back());
  CHECK(wa.front() != wb.front());
  std::set<std::string> words;
  std::size_t total = 0;
  for (std::size_t c = 0; c < 10; ++c) {
    if (c == b) continue;
    for (auto& x : split_words(w.class_phrases()[c])) words.insert(x), ++total;
  }
  CHECK(words.size() == total);
  for (const auto& x : words) CHECK(filler_words().count(x) == 0);

  std::vector<int> per_class(10, 0);
  for (std::size_t i = 0; i < 200; ++i) {
    ++per_class[w.labels[i]];
    CHECK(w.manifest.records[i].label == w.class_phrases()[w.labels[i]]);
    CHECK(w.ground_truth_caption(i) == "a person is " + w.class_phrases()[w.labels[i]]);
    CHECK(w.distractor[i] != w.labels[i]);
    CHECK(w.clarity[i] >= 0.0);
    CHECK(w.clarity[i] <= 1.0);
  }
  for (int n : per_class) CHECK(n == 20);
  CHECK(w.manifest.records[7].id == "vid007");
}

TEST_CASE("fixed seed gives a bitwise identical world; a new seed does not") {
  auto a = generate_world(small_spec(5));
  auto b = generate_world(small_spec(5));
  auto c = generate_world(small_spec(6));
  REQUIRE(a.manifest.size() == b.manifest.size());
  bool differs = false;
  for (std::size_t i = 0; i < a.manifest.size(); ++i) {
    const auto& ra = a.manifest.records[i];
    const auto& rb = b.manifest.records[i];
    CHECK(ra.frame_embeddings == rb.frame_embeddings);
    CHECK(ra.features.spatial_values == rb.features.spatial_values);
    CHECK(ra.features.cls_values == rb.features.cls_values);
    CHECK(ra.label == rb.label);
    differs = differs || ra.frame_embeddings != c.manifest.records[i].frame_embeddings;
  }
  CHECK(a.clarity == b.clarity);
  CHECK(differs);

  rest::test::TempDir d1, d2;
  save_world(a, d1.path());
  save_world(b, d2.path());
  for (const char* f : {"manifest.json", "frame_captions.jsonl", "world.json", "blobs/vid00.emb", "blobs/vid59.feat"}) {
    CHECK(file_bytes(d1 / f) == file_bytes(d2 / f));
  }
}

TEST_CASE("saved world reloads losslessly and replays its captions") {
  auto w = generate_world(small_spec());
  rest::test::TempDir dir;
  save_world(w, dir.path());
  auto m = load_manifest(dir / "manifest.json");
  CHECK(m.warnings.empty());
  REQUIRE(m.size() == w.manifest.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    CHECK(m.records[i].frame_embeddings == w.manifest.records[i].frame_embeddings);
    CHECK(m.records[i].features.spatial_values == w.manifest.records[i].features.spatial_values);
  }
  auto meta = nlohmann::json::parse(rest::test::read_text(dir / "world.json"));
  CHECK(SynthSpec::from_json(meta["spec"]).to_json() == w.spec.to_json());
  CHECK(meta["text_encoder"]["seed"].get<std::uint64_t>() == w.text_seed);

  FileFrameCaptioner file(dir / "frame_captions.jsonl", m);
  StubInitialCaptioner stub(w);
  for (std::size_t i = 0; i < m.size(); ++i) {
    for (std::size_t t = 0; t < w.spec.frames; ++t) {
      for (const auto& p : default_prompts()) CHECK(file.caption(i, t, p) == stub.caption(i, t, p));
    }
  }
  CHECK_ERROR_CODE(file.caption(0, 0, "unknown prompt"), ErrorCode::kUnknownId);
  CHECK_ERROR_CODE(file.caption(0, 99, "a video of"), ErrorCode::kUnknownId);
  CHECK_ERROR_CODE(stub.caption(999, 0, "a video of"), ErrorCode::kUnknownId);
  CHECK_ERROR_CODE(FileFrameCaptioner(dir / "nope.jsonl", m), ErrorCode::kMissingFile);

  rest::test::write_text(dir / "short.jsonl", "{\"id\": \"vid00\", \"frames\": [{}, {}, {}, {}]}\n");
  CHECK_ERROR_CODE(FileFrameCaptioner(dir / "short.jsonl", m), ErrorCode::kMissingFile);
  rest::test::write_text(dir / "bad.jsonl", "{\"id\": \"vid00\", \"frames\": [{}]}\n");
  CHECK_ERROR_CODE(FileFrameCaptioner(dir / "bad.jsonl", m), ErrorCode::kDimMismatch);
}

TEST_CASE("stub text encoder: deterministic bag of words") {
  StubTextEncoder enc(16, 11);
  CHECK(enc.encode("playing guitar") == enc.encode("playing guitar"));
  CHECK(enc.encode("playing guitar") == enc.encode("Guitar, playing!"));
  CHECK(enc.encode("a b c") == enc.encode("c a b"));
  CHECK(enc.encode("a b") != enc.encode("a c"));
  CHECK_ERROR_CODE(enc.encode(" .. "), ErrorCode::kProvider);

  // explicit sum oracle
  auto va = enc.word_vector("riding");
  auto vb = enc.word_vector("horse");
  std::vector<double> sum(16);
  for (std::size_t i = 0; i < 16; ++i) sum[i] = va[i] + vb[i];
  auto want = UnitEmbedding::normalize(sum);
  auto got = enc.encode("riding horse");
  for (std::size_t i = 0; i < 16; ++i) CHECK(std::abs(got[i] - want[i]) <= 1e-12);
  CHECK(std::abs(l2_norm(va) - 1.0) <= 1e-12);

  StubTextEncoder noisy(16, 11, 0.5);
  CHECK(noisy.encode("a b c") == noisy.encode("a b c"));
  CHECK(noisy.encode("a b c") != noisy.encode("c a b"));
  CHECK(noisy.word_vector("x") == enc.word_vector("x"));
}

TEST_CASE("ground-truth captions sit nearest their own class centroid") {
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    SynthSpec s;
    s.seed = seed;
    auto w = generate_world(s);
    auto enc = stub_text_encoder(w);
    std::vector<UnitEmbedding> centroid;
    for (const auto& p : w.class_phrases()) centroid.push_back(enc.encode(p));
    for (std::size_t i = 0; i < w.manifest.size(); ++i) {
      auto t = enc.encode(w.ground_truth_caption(i));
      const double own = t.dot(centroid[w.labels[i]]);
      for (std::size_t c = 0; c < centroid.size(); ++c) {
        if (c != w.labels[i]) CHECK(own > t.dot(centroid[c]));
      }
    }
  }
}

TEST_CASE("noise-free clusters: within-class similarity 1, across below 1") {
  SynthSpec s;
  s.classes = 2;
  s.videos = 10;
  s.noise_sigma = 0.0;
  s.order_pair_fraction = 0.0;
  s.unseen_classes = 0;
  auto w = generate_world(s);
  auto e = video_embeddings(w);
  for (std::size_t i = 0; i < e.size(); ++i) {
    for (std::size_t j = 0; j < e.size(); ++j) {
      const double sim = video_video_similarity(e[i], e[j]);
      if (w.labels[i] == w.labels[j]) {
        CHECK(std::abs(sim - 1.0) <= 1e-6);
      } else {
        CHECK(sim < 1.0 - 1e-3);
      }
    }
  }
}

TEST_CASE("order pairs are indistinguishable to the retriever but not to the features") {
  SynthSpec s;
  s.noise_sigma = 0.0;
  s.order_pair_fraction = 0.4;
  auto w = generate_world(s);
  auto e = video_embeddings(w);
  for (const auto& [a, b] : w.order_pairs) {
    std::size_t va = 0, vb = 0;
    while (w.labels[va] != a) ++va;
    while (w.labels[vb] != b) ++vb;
    CHECK(std::abs(video_video_similarity(e[va], e[vb]) - 1.0) <= 1e-6);
    // the frame sequences run in opposite directions
    const auto& fa = w.manifest.records[va].frame_embeddings;
    const auto& fb = w.manifest.records[vb].frame_embeddings;
    CHECK(std::abs(fa.front().dot(fb.back()) - 1.0) <= 1e-6);
    CHECK(fa.front().dot(fb.front()) < 1.0 - 1e-3);
  }
}

TEST_CASE("property: cluster fidelity of top-H neighbors") {
  for (double sigma : {0.05, 0.1}) {
    SynthSpec s;
    s.noise_sigma = sigma;
    s.order_pair_fraction = 0.0;
    s.seed = 4;
    auto w = generate_world(s);
    auto e = video_embeddings(w);
    auto index = build_neighbor_index(e, 20);
    for (std::size_t h : {2u, 10u, 20u}) {
      std::size_t same = 0, total = 0;
      for (std::size_t i = 0; i < e.size(); ++i) {
        auto row = index.neighbors(i);
        for (std::size_t k = 0; k < h; ++k) {
          same += w.labels[row[k].index] == w.labels[i];
          ++total;
        }
      }
      CHECK(static_cast<double>(same) / static_cast<double>(total) >= 0.9);
    }
  }
}

TEST_CASE("stub captioner: p_correct extremes and determinism") {
  for (double p : {0.0, 1.0}) {
    SynthSpec s = small_spec();
    s.p_correct = p;
    auto w = generate_world(s);
    StubInitialCaptioner cap(w);
    for (std::size_t i = 0; i < w.manifest.size(); ++i) {
      for (std::size_t t = 0; t < s.frames; ++t) {
        for (const auto& prompt : default_prompts()) {
          const auto text = cap.caption(i, t, prompt);
          CHECK(contains_phrase(text, w.class_phrases()[w.labels[i]]) == (p == 1.0));
          CHECK(text.rfind(prompt, 0) == 0);
          CHECK(text == cap.caption(i, t, prompt));
        }
      }
    }
  }
}

TEST_CASE("p_correct 0 leaves initial captions at or below chance") {
  SynthSpec s;
  s.p_correct = 0.0;
  auto w = generate_world(s);
  StubInitialCaptioner cap(w);
  auto enc = stub_text_encoder(w);
  TextEmbeddingCache texts(enc);
  auto captions = initial_frame_captions(w.manifest, cap, default_prompts(), texts);
  std::map<std::string, std::string> preds;
  for (std::size_t i = 0; i < captions.size(); ++i) {
    preds[w.manifest.records[i].id] = captions[i][captions[i].size() / 2];
  }
  ClassEmbeddingTable table(w.class_phrases(), texts);
  auto rep = evaluate_topk(preds, manifest_labels(w.manifest), table, texts, 5);
  // 1/C plus a two-sided 99% binomial interval
  const double chance = 1.0 / 10.0;
  const double ci = 2.576 * std::sqrt(chance * (1.0 - chance) / 200.0);
  CHECK(rep.top1 <= chance + ci);
}

TEST_CASE("initial caption purity matches p_correct by word audit") {
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    SynthSpec s;
    s.seed = seed;
    auto w = generate_world(s);
    StubInitialCaptioner cap(w);
    auto enc = stub_text_encoder(w);
    TextEmbeddingCache texts(enc);
    auto captions = initial_frame_captions(w.manifest, cap, default_prompts(), texts);
    std::size_t pure = 0, total = 0;
    for (std::size_t i = 0; i < captions.size(); ++i) {
      for (const auto& c : captions[i]) {
        pure += contains_phrase(c, w.class_phrases()[w.labels[i]]);
        ++total;
      }
    }
    CHECK(std::abs(static_cast<double>(pure) / static_cast<double>(total) - s.p_correct) <= 0.1);
  }
}

TEST_CASE("content words drop prompts and tails") {
  CHECK(content_words("A person is riding horse in the park") == std::vector<std::string>{"riding", "horse"});
  CHECK(content_words("someone is").empty());
}

TEST_CASE("image encoder returns stored embeddings") {
  auto w = generate_world(small_spec());
  StubImageEncoder img(w);
  CHECK(img.encode(3, 1) == w.manifest.records[3].frame_embeddings[1]);
  CHECK_ERROR_CODE(img.encode(3, 4), ErrorCode::kUnknownId);
  CHECK_ERROR_CODE(img.encode(60, 0), ErrorCode::kUnknownId);
}
