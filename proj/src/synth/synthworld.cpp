#include "rest/synth/synthworld.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "rest/core/error.hpp"
#include "rest/core/random.hpp"
#include "rest/core/tokenizer.hpp"

namespace rest {

using nlohmann::json;

namespace {

const std::vector<std::pair<const char*, const char*>> kRegular = {
    {"playing", "guitar"},    {"riding", "horse"},      {"throwing", "frisbee"},
    {"cooking", "pasta"},     {"washing", "dishes"},    {"painting", "fence"},
    {"climbing", "tree"},     {"kicking", "football"},  {"juggling", "oranges"},
    {"brushing", "teeth"},    {"mowing", "lawn"},       {"slicing", "bread"},
    {"surfing", "waves"},     {"shoveling", "snow"},    {"knitting", "sweater"},
    {"flying", "kite"},       {"feeding", "ducks"},     {"chopping", "wood"},
    {"reading", "newspaper"}, {"walking", "dog"},       {"baking", "cookies"},
    {"driving", "tractor"},   {"catching", "fish"},     {"blowing", "bubbles"},
    {"watering", "plants"},   {"ironing", "shirt"},     {"sweeping", "floor"},
    {"skipping", "rope"},     {"peeling", "potatoes"},  {"shooting", "hoops"},
    {"rowing", "boat"},       {"hanging", "laundry"},   {"tasting", "wine"},
    {"shaving", "beard"},     {"building", "snowman"},  {"polishing", "shoes"},
    {"grooming", "cat"},      {"drawing", "portrait"},  {"dribbling", "basketball"},
    {"stacking", "blocks"},
};

struct PairWords {
  const char* forward;
  const char* backward;
  const char* noun;
};

const std::vector<PairWords> kPairs = {
    {"opening", "closing", "door"},     {"raising", "lowering", "flag"},
    {"filling", "emptying", "bucket"},  {"pushing", "pulling", "cart"},
    {"packing", "unpacking", "suitcase"}, {"folding", "unfolding", "towel"},
    {"loading", "unloading", "truck"},  {"zipping", "unzipping", "jacket"},
};

const std::vector<std::string> kTails = {"", "in the park", "at home", "with friends", "outside",
                                         "in a room"};

float f32(double x) { return static_cast<float>(x); }

double gamma_sample(Rng& rng, double shape) {
  if (shape < 1.0) {
    double u = rng.uniform();
    while (u <= 0.0) u = rng.uniform();
    return gamma_sample(rng, shape + 1.0) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = rng.normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

double beta_sample(Rng& rng, double a, double b) {
  const double x = gamma_sample(rng, a);
  const double y = gamma_sample(rng, b);
  return x + y > 0.0 ? x / (x + y) : 0.5;
}

std::uint64_t key(std::uint64_t seed, std::size_t video, std::size_t frame, std::string_view tag) {
  return mix_seed(mix_seed(mix_seed(seed, video), frame), fnv1a64(tag));
}

double hash_uniform(std::uint64_t k) {
  return static_cast<double>(splitmix64(k) >> 11) * 0x1.0p-53;
}

UnitEmbedding rounded_unit(std::vector<double> v) {
  const UnitEmbedding e = UnitEmbedding::normalize(v);
  std::vector<double> r(e.dim());
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = f32(e[i]);
  return UnitEmbedding::from_unit(std::move(r));
}

}  // namespace

std::size_t SynthSpec::order_pairs() const {
  return static_cast<std::size_t>(std::floor(order_pair_fraction * static_cast<double>(classes) / 2.0 + 1e-9));
}

std::size_t SynthSpec::unseen_count() const {
  if (unseen_classes >= 0) return static_cast<std::size_t>(unseen_classes);
  return (classes + 3) / 4;
}

void SynthSpec::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::kConfig, "synth: " + m); };
  if (classes < 2) fail("classes must be >= 2");
  if (videos < classes) fail("videos must be >= classes");
  if (frames < 1) fail("frames must be >= 1");
  if (dim < 2 || feature_dim < 1 || spatial_tokens < 1) fail("dims must be positive");
  if (!(noise_sigma >= 0.0) || !(feature_noise >= 0.0) || !(video_noise >= 0.0)) {
    fail("noise levels must be >= 0");
  }
  if (!(order_pair_fraction >= 0.0 && order_pair_fraction <= 1.0)) {
    fail("order_pair_fraction must be in [0, 1]");
  }
  if (!(p_correct >= 0.0 && p_correct <= 1.0)) fail("p_correct must be in [0, 1]");
  if (!(clarity_concentration >= 0.0)) fail("clarity_concentration must be >= 0");
  if (!(retriever_confusion >= 0.0 && retriever_confusion <= 1.0)) {
    fail("retriever_confusion must be in [0, 1]");
  }
  if (!(confusion_strength >= 0.0)) fail("confusion_strength must be >= 0");
  if (!(wording_noise >= 0.0)) fail("wording_noise must be >= 0");
  const std::size_t pairs = order_pairs();
  if (pairs > kPairs.size()) fail("too many order pairs");
  if (classes - 2 * pairs > kRegular.size()) fail("too many classes for the built-in vocabulary");
  if (unseen_count() >= classes) fail("unseen_classes must leave at least one seen class");
}

json SynthSpec::to_json() const {
  return {{"classes", classes},
          {"videos", videos},
          {"frames", frames},
          {"dim", dim},
          {"feature_dim", feature_dim},
          {"spatial_tokens", spatial_tokens},
          {"noise_sigma", noise_sigma},
          {"feature_noise", feature_noise},
          {"video_noise", video_noise},
          {"order_pair_fraction", order_pair_fraction},
          {"p_correct", p_correct},
          {"clarity_concentration", clarity_concentration},
          {"retriever_confusion", retriever_confusion},
          {"confusion_strength", confusion_strength},
          {"wording_noise", wording_noise},
          {"unseen_classes", unseen_classes},
          {"seed", seed}};
}

SynthSpec SynthSpec::from_json(const json& j) {
  SynthSpec s;
  if (!j.is_object()) throw Error(ErrorCode::kConfig, "synth spec must be a JSON object");
  const json defaults = s.to_json();
  for (const auto& [k, v] : j.items()) {
    if (!defaults.contains(k)) throw Error(ErrorCode::kConfig, "unknown synth key: " + k);
  }
  try {
    auto get = [&](const char* k, auto& field) {
      if (j.contains(k)) field = j.at(k).get<std::decay_t<decltype(field)>>();
    };
    get("classes", s.classes);
    get("videos", s.videos);
    get("frames", s.frames);
    get("dim", s.dim);
    get("feature_dim", s.feature_dim);
    get("spatial_tokens", s.spatial_tokens);
    get("noise_sigma", s.noise_sigma);
    get("feature_noise", s.feature_noise);
    get("video_noise", s.video_noise);
    get("order_pair_fraction", s.order_pair_fraction);
    get("p_correct", s.p_correct);
    get("clarity_concentration", s.clarity_concentration);
    get("retriever_confusion", s.retriever_confusion);
    get("confusion_strength", s.confusion_strength);
    get("wording_noise", s.wording_noise);
    get("unseen_classes", s.unseen_classes);
    get("seed", s.seed);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("synth spec: ") + e.what());
  }
  return s;
}

const std::vector<std::string>& default_prompts() {
  static const std::vector<std::string> prompts = {"a video of", "a person is", "someone is"};
  return prompts;
}

const std::set<std::string>& filler_words() {
  static const std::set<std::string> words = [] {
    std::set<std::string> w;
    for (const auto& p : default_prompts()) {
      for (auto& x : split_words(p)) w.insert(x);
    }
    for (const auto& t : kTails) {
      for (auto& x : split_words(t)) w.insert(x);
    }
    return w;
  }();
  return words;
}

std::vector<std::string> content_words(const std::string& caption) {
  std::vector<std::string> out;
  for (auto& w : split_words(normalize_text(caption))) {
    if (!filler_words().count(w)) out.push_back(std::move(w));
  }
  return out;
}

std::string SynthWorld::ground_truth_caption(std::size_t video) const {
  return "a person is " + manifest.classes.at(labels.at(video));
}

bool SynthWorld::in_order_pair(std::size_t cls) const {
  for (const auto& [a, b] : order_pairs) {
    if (a == cls || b == cls) return true;
  }
  return false;
}

namespace {

std::vector<double> gaussian_unit(std::uint64_t seed, std::size_t dim) {
  Rng rng(seed);
  std::vector<double> v(dim);
  double n2 = 0.0;
  for (auto& x : v) {
    x = rng.normal();
    n2 += x * x;
  }
  const double inv = 1.0 / std::sqrt(n2);
  for (auto& x : v) x *= inv;
  return v;
}

}  // namespace

std::vector<double> StubTextEncoder::word_vector(const std::string& word) const {
  return gaussian_unit(mix_seed(seed_, fnv1a64(word)), dim_);
}

UnitEmbedding StubTextEncoder::encode(const std::string& caption) {
  const auto words = split_words(normalize_text(caption));
  if (words.empty()) throw Error(ErrorCode::kProvider, "cannot encode an empty caption");
  // summed in sorted order so any word permutation gives the same bits
  auto sorted = words;
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> sum(dim_, 0.0);
  for (const auto& w : sorted) {
    const auto v = word_vector(w);
    for (std::size_t i = 0; i < dim_; ++i) sum[i] += v[i];
  }
  if (wording_noise_ > 0.0) {
    std::string joined;
    for (const auto& w : words) joined += w + " ";
    const auto g = gaussian_unit(mix_seed(seed_ ^ 0x3D0Du, fnv1a64(joined)), dim_);
    const double scale = wording_noise_ * std::sqrt(static_cast<double>(words.size()));
    for (std::size_t i = 0; i < dim_; ++i) sum[i] += scale * g[i];
  }
  return UnitEmbedding::normalize(sum);
}

StubTextEncoder stub_text_encoder(const SynthWorld& world) {
  return StubTextEncoder(world.spec.dim, world.text_seed, world.spec.wording_noise);
}

const UnitEmbedding& StubImageEncoder::encode(std::size_t video, std::size_t frame) const {
  const auto& records = world_->manifest.records;
  if (video >= records.size() || frame >= records[video].frame_embeddings.size()) {
    throw Error(ErrorCode::kUnknownId, "unknown frame " + std::to_string(video) + ":" + std::to_string(frame));
  }
  return records[video].frame_embeddings[frame];
}

std::string StubInitialCaptioner::caption(std::size_t video, std::size_t frame,
                                          const std::string& prompt) {
  const SynthWorld& w = *world_;
  if (video >= w.labels.size() || frame >= w.spec.frames) {
    throw Error(ErrorCode::kUnknownId, "unknown frame " + std::to_string(video) + ":" + std::to_string(frame));
  }
  const std::uint64_t seed = mix_seed(w.spec.seed, 0xCA7u);
  const bool correct = hash_uniform(key(seed, video, frame, "correct")) < w.clarity[video];
  const std::size_t cls = correct ? w.labels[video] : w.distractor[video];
  const std::size_t tail = splitmix64(key(seed, video, frame, prompt)) % kTails.size();
  std::string text = normalize_text(prompt) + " " + w.manifest.classes[cls];
  if (!kTails[tail].empty()) text += " " + kTails[tail];
  return text;
}

FileFrameCaptioner::FileFrameCaptioner(const std::filesystem::path& path,
                                       const DatasetManifest& manifest) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kMissingFile, "missing file: " + path.string());
  frames_.resize(manifest.size());
  std::vector<bool> seen(manifest.size(), false);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    try {
      const json rec = json::parse(line);
      const std::string id = rec.at("id").get<std::string>();
      const auto idx = manifest.index_of(id);
      if (!idx) throw Error(ErrorCode::kUnknownId, where + ": unknown video " + id);
      if (seen[*idx]) throw Error(ErrorCode::kDuplicateId, where + ": duplicate video " + id);
      seen[*idx] = true;
      for (const auto& f : rec.at("frames")) {
        if (!f.is_object()) throw Error(ErrorCode::kParse, where + ": frame entry must be an object");
        frames_[*idx].push_back(f);
      }
      if (frames_[*idx].size() != manifest.records[*idx].frame_count) {
        throw Error(ErrorCode::kDimMismatch, where + ": frame count disagrees with manifest");
      }
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kParse, where + ": " + e.what());
    }
  }
  for (std::size_t i = 0; i < seen.size(); ++i) {
    if (!seen[i]) throw Error(ErrorCode::kMissingFile, "no frame captions for " + manifest.records[i].id);
  }
}

std::string FileFrameCaptioner::caption(std::size_t video, std::size_t frame,
                                        const std::string& prompt) {
  if (video >= frames_.size() || frame >= frames_[video].size()) {
    throw Error(ErrorCode::kUnknownId, "unknown frame " + std::to_string(video) + ":" + std::to_string(frame));
  }
  const json& f = frames_[video][frame];
  auto it = f.find(prompt);
  if (it == f.end() || !it->is_string()) {
    throw Error(ErrorCode::kUnknownId, "no caption for prompt '" + prompt + "'");
  }
  return it->get<std::string>();
}

SynthWorld generate_world(const SynthSpec& spec) {
  spec.validate();
  SynthWorld w;
  w.spec = spec;
  const std::size_t C = spec.classes, N = spec.videos, T = spec.frames;
  const std::size_t S = spec.spatial_tokens, D = spec.dim, F = spec.feature_dim;
  const std::size_t pairs = spec.order_pairs();

  std::vector<std::string> phrases;
  for (std::size_t p = 0; p < pairs; ++p) {
    phrases.push_back(std::string(kPairs[p].forward) + " " + kPairs[p].noun);
    phrases.push_back(std::string(kPairs[p].backward) + " " + kPairs[p].noun);
    w.order_pairs.emplace_back(2 * p, 2 * p + 1);
  }
  for (std::size_t r = 0; phrases.size() < C; ++r) {
    phrases.push_back(std::string(kRegular[r].first) + " " + kRegular[r].second);
  }
  const std::size_t unseen = spec.unseen_count();
  for (std::size_t c = 0; c < C; ++c) {
    (c + unseen >= C ? w.unseen_classes : w.seen_classes).push_back(phrases[c]);
  }

  w.text_seed = mix_seed(spec.seed, 0x7E47u);
  StubTextEncoder text(D, w.text_seed, spec.wording_noise);
  std::vector<UnitEmbedding> centroid;
  for (const auto& p : phrases) centroid.push_back(text.encode(p));

  Rng rng(mix_seed(spec.seed, 0x5EEDu));
  // Captioner-side templates: per class and frame, S spatial tokens plus a
  // class token. Order pairs share a mean and carry a ramp of opposite sign.
  std::vector<std::vector<double>> tmpl(C, std::vector<double>(T * (S + 1) * F));
  auto gaussian = [&](std::size_t n, double scale) {
    std::vector<double> v(n);
    for (auto& x : v) x = scale * rng.normal();
    return v;
  };
  const std::size_t per_frame = (S + 1) * F;
  std::vector<int> pair_sign(C, 0);
  for (const auto& [a, b] : w.order_pairs) {
    const auto mean = gaussian(per_frame, 1.0);
    const auto ramp = gaussian(per_frame, 1.0);
    for (std::size_t t = 0; t < T; ++t) {
      const double r = T > 1 ? 1.0 - 2.0 * static_cast<double>(t) / static_cast<double>(T - 1) : 0.0;
      for (std::size_t i = 0; i < per_frame; ++i) {
        tmpl[a][t * per_frame + i] = mean[i] + r * ramp[i];
        tmpl[b][t * per_frame + i] = mean[i] - r * ramp[i];
      }
    }
    pair_sign[a] = 1;
    pair_sign[b] = -1;
  }
  for (std::size_t c = 0; c < C; ++c) {
    if (pair_sign[c] != 0) continue;
    const auto base = gaussian(per_frame, 1.0);
    for (std::size_t t = 0; t < T; ++t) {
      std::copy(base.begin(), base.end(), tmpl[c].begin() + static_cast<std::ptrdiff_t>(t * per_frame));
    }
  }

  // Balanced labels in a seeded order.
  w.labels.resize(N);
  for (std::size_t i = 0; i < N; ++i) w.labels[i] = i % C;
  rng.shuffle(w.labels);

  w.manifest.dim = D;
  w.manifest.feature_dim = F;
  w.manifest.spatial_tokens = S;
  w.manifest.classes = phrases;
  w.clarity.resize(N);
  w.distractor.resize(N);
  w.confused_with.assign(N, -1);

  const std::size_t width = std::to_string(N - 1).size();
  for (std::size_t i = 0; i < N; ++i) {
    const std::size_t c = w.labels[i];
    Rng vr(mix_seed(spec.seed, 0x1000u + i));
    if (spec.clarity_concentration > 0.0 && spec.p_correct > 0.0 && spec.p_correct < 1.0) {
      w.clarity[i] = beta_sample(vr, spec.clarity_concentration * spec.p_correct,
                                 spec.clarity_concentration * (1.0 - spec.p_correct));
    } else {
      w.clarity[i] = spec.p_correct;
    }
    w.distractor[i] = (c + 1 + vr.below(C - 1)) % C;
    double lean = 0.0;
    std::size_t lean_to = c;
    if (pair_sign[c] == 0 && vr.uniform() < spec.retriever_confusion) {
      lean_to = (c + 1 + vr.below(C - 1)) % C;
      lean = spec.confusion_strength * (0.75 + 0.5 * vr.uniform());
      w.confused_with[i] = static_cast<int>(lean_to);
    }

    VideoRecord r;
    std::string num = std::to_string(i);
    r.id = "vid" + std::string(width - num.size(), '0') + num;
    r.frame_count = T;
    r.embedding_file = "blobs/" + r.id + ".emb";
    r.feature_file = "blobs/" + r.id + ".feat";
    r.label = phrases[c];

    const std::pair<std::size_t, std::size_t>* pair = nullptr;
    for (const auto& p : w.order_pairs) {
      if (p.first == c || p.second == c) pair = &p;
    }
    for (std::size_t t = 0; t < T; ++t) {
      std::vector<double> e(D);
      if (pair) {
        double alpha = T > 1 ? 1.0 - static_cast<double>(t) / static_cast<double>(T - 1) : 0.5;
        if (c == pair->second) alpha = 1.0 - alpha;
        for (std::size_t k = 0; k < D; ++k) {
          e[k] = alpha * centroid[pair->first][k] + (1.0 - alpha) * centroid[pair->second][k];
        }
      } else {
        for (std::size_t k = 0; k < D; ++k) e[k] = centroid[c][k] + lean * centroid[lean_to][k];
      }
      for (std::size_t k = 0; k < D; ++k) e[k] += spec.noise_sigma * vr.normal();
      r.frame_embeddings.push_back(rounded_unit(std::move(e)));
    }

    r.features = FrameFeatureTensor(T, S, F);
    const auto offset = [&] {
      std::vector<double> v(per_frame);
      for (auto& x : v) x = spec.video_noise * vr.normal();
      return v;
    }();
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t s = 0; s <= S; ++s) {
        for (std::size_t k = 0; k < F; ++k) {
          const std::size_t i_t = t * per_frame + s * F + k;
          const double v = f32(tmpl[c][i_t] + offset[s * F + k] + spec.feature_noise * vr.normal());
          if (s < S) {
            r.features.at(t, s, k) = v;
          } else {
            r.features.cls(t, k) = v;
          }
        }
      }
    }
    w.manifest.records.push_back(std::move(r));
  }
  finalize_manifest(w.manifest);
  return w;
}

void save_world(const SynthWorld& world, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_manifest(world.manifest, dir / "manifest.json");

  StubInitialCaptioner captioner(world);
  {
    std::ofstream out(dir / "frame_captions.jsonl", std::ios::trunc);
    if (!out) throw Error(ErrorCode::kMissingFile, "cannot write " + (dir / "frame_captions.jsonl").string());
    for (std::size_t i = 0; i < world.manifest.size(); ++i) {
      json frames = json::array();
      for (std::size_t t = 0; t < world.spec.frames; ++t) {
        json f = json::object();
        for (const auto& p : default_prompts()) f[p] = captioner.caption(i, t, p);
        frames.push_back(std::move(f));
      }
      out << json{{"id", world.manifest.records[i].id}, {"frames", frames}}.dump() << "\n";
    }
  }

  json pairs = json::array();
  for (const auto& [a, b] : world.order_pairs) pairs.push_back({a, b});
  const json meta = {{"spec", world.spec.to_json()},
                     {"classes", world.manifest.classes},
                     {"seen_classes", world.seen_classes},
                     {"unseen_classes", world.unseen_classes},
                     {"order_pairs", pairs},
                     {"prompts", default_prompts()},
                     {"text_encoder", {{"kind", "stub"}, {"dim", world.spec.dim}, {"seed", world.text_seed}, {"wording_noise", world.spec.wording_noise}}}};
  std::ofstream out(dir / "world.json", std::ios::trunc);
  if (!out) throw Error(ErrorCode::kMissingFile, "cannot write " + (dir / "world.json").string());
  out << meta.dump(2) << "\n";
}

}  // namespace rest
