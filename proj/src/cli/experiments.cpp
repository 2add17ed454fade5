#include "rest/cli/experiments.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "rest/core/error.hpp"
#include "rest/loop/stream_encoder.hpp"

namespace rest {

using nlohmann::json;
namespace fs = std::filesystem;

WorldDir load_world_dir(const fs::path& dir) {
  WorldDir w;
  w.dir = dir;
  w.manifest = load_manifest(dir / "manifest.json");
  const fs::path meta_path = dir / "world.json";
  std::ifstream in(meta_path);
  if (!in) throw Error(ErrorCode::kMissingFile, "missing file: " + meta_path.string());
  json meta;
  try {
    meta = json::parse(in);
    w.text_encoder = meta.at("text_encoder");
    if (meta.contains("seen_classes")) w.seen_classes = meta.at("seen_classes").get<std::vector<std::string>>();
    if (meta.contains("unseen_classes")) {
      w.unseen_classes = meta.at("unseen_classes").get<std::vector<std::string>>();
    }
    if (meta.contains("order_pairs")) {
      for (const auto& p : meta.at("order_pairs")) {
        if (p.at(0).is_number()) {
          w.order_pairs.emplace_back(w.manifest.classes.at(p.at(0).get<std::size_t>()),
                                     w.manifest.classes.at(p.at(1).get<std::size_t>()));
        } else {
          w.order_pairs.emplace_back(p.at(0).get<std::string>(), p.at(1).get<std::string>());
        }
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, meta_path.string() + ": " + e.what());
  } catch (const std::out_of_range&) {
    throw Error(ErrorCode::kParse, meta_path.string() + ": order pair names an unknown class");
  }
  const std::string kind = w.text_encoder.value("kind", "");
  if (kind != "stub" && kind != "stream") {
    throw Error(ErrorCode::kConfig, meta_path.string() + ": unknown text encoder kind '" + kind + "'");
  }
  return w;
}

std::unique_ptr<TextEncoder> WorldDir::make_text_encoder() const {
  try {
    const auto dim = text_encoder.at("dim").get<std::size_t>();
    if (text_encoder.at("kind") == "stub") {
      return std::make_unique<StubTextEncoder>(dim, text_encoder.at("seed").get<std::uint64_t>(),
                                               text_encoder.value("wording_noise", 0.0));
    }
    return std::make_unique<StreamTextEncoder>(
        StreamTextEncoder::spawn(text_encoder.at("command").get<std::string>(), dim));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("text encoder: ") + e.what());
  }
}

std::unique_ptr<FrameCaptioner> WorldDir::make_captioner() const {
  return std::make_unique<FileFrameCaptioner>(dir / "frame_captions.jsonl", manifest);
}

namespace {

std::map<std::string, std::string> restrict_to(const std::map<std::string, std::string>& labels,
                                               const std::vector<std::string>& classes) {
  const std::set<std::string> keep(classes.begin(), classes.end());
  std::map<std::string, std::string> out;
  for (const auto& [id, l] : labels) {
    if (keep.count(l)) out[id] = l;
  }
  return out;
}

void require_split(const Dataset& data) {
  if (data.seen_classes.empty() || data.unseen_classes.empty()) {
    throw Error(ErrorCode::kConfig, "dataset has no seen/unseen class split");
  }
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * x);
  return buf;
}

}  // namespace

SupervisionResult compare_supervision(const Dataset& data, const RestConfig& config,
                                      std::size_t label_epochs) {
  require_split(data);
  const DatasetManifest& m = *data.manifest;
  const auto run = run_rest(m, {data.text, data.captioner}, config);
  TextEmbeddingCache texts(*data.text);
  const auto labels = manifest_labels(m);

  SupervisionResult out;
  out.rest_unseen = generalized_eval(run.final_captions, labels, data.seen_classes, data.unseen_classes,
                                     texts, config.eval_k);

  const LabelModel label = train_label_model(m, run.vocab, data.seen_classes, config, label_epochs);
  const auto captions = generate_all(label.model, m, run.vocab, config.prompt, config.beam,
                                     config.max_caption_tokens, config.threads);
  for (std::size_t i = 0; i < m.size(); ++i) out.label_captions[m.records[i].id] = captions[i];
  out.label_unseen = generalized_eval(out.label_captions, labels, data.seen_classes, data.unseen_classes,
                                      texts, config.eval_k);

  std::set<std::string> seen_vocab;
  for (const auto& c : data.seen_classes) {
    for (auto& w : content_words(c)) seen_vocab.insert(std::move(w));
  }
  std::size_t from_seen = 0;
  for (const auto& [id, l] : restrict_to(labels, data.unseen_classes)) {
    for (const auto& w : content_words(out.label_captions.at(id))) {
      ++out.label_content_words;
      from_seen += seen_vocab.count(w);
    }
  }
  out.label_seen_vocab_fraction =
      out.label_content_words ? static_cast<double>(from_seen) / static_cast<double>(out.label_content_words)
                              : 0.0;
  return out;
}

double order_pair_probe(const Dataset& data, const RestConfig& config, std::size_t epochs) {
  if (data.order_pairs.empty()) throw Error(ErrorCode::kConfig, "dataset has no order pairs");
  TextEmbeddingCache texts(*data.text);
  double sum = 0.0;
  for (const auto& [a, b] : data.order_pairs) {
    sum += adapter_probe(*data.manifest, a, b, texts, config, epochs).accuracy;
  }
  return sum / static_cast<double>(data.order_pairs.size());
}

json Ablation::to_json() const {
  json rows_j = json::array();
  for (const auto& r : rows) rows_j.push_back({{"value", r.value}, {"metrics", r.metrics}});
  return {{"axis", axis}, {"rows", rows_j}};
}

std::string Ablation::table() const {
  std::vector<std::string> cols{"top1", "topk", "init_top1"};
  std::erase_if(cols, [&](const std::string& c) {
    return std::none_of(rows.begin(), rows.end(), [&](const AblationRow& r) { return r.metrics.contains(c); });
  });
  for (const auto& r : rows) {
    for (const auto& [k, v] : r.metrics.items()) {
      if (v.is_number() && std::find(cols.begin(), cols.end(), k) == cols.end()) cols.push_back(k);
    }
  }
  std::ostringstream os;
  os << axis;
  for (const auto& c : cols) os << "\t" << c;
  os << "\n";
  for (const auto& r : rows) {
    os << r.value;
    for (const auto& c : cols) {
      os << "\t";
      if (!r.metrics.contains(c)) {
        os << "-";
      } else if (r.metrics.at(c).is_number_float()) {
        os << fmt(r.metrics.at(c).get<double>());
      } else {
        os << r.metrics.at(c).dump();
      }
    }
    os << "\n";
  }
  return os.str();
}

namespace {

json run_metrics(const RunArtifacts& run) {
  json j = {{"top1", run.final_eval ? run.final_eval->top1 : 0.0},
            {"topk", run.final_eval ? run.final_eval->topk : 0.0},
            {"init_top1", run.init_eval ? run.init_eval->top1 : 0.0},
            {"rounds", run.rounds_completed}};
  return j;
}

}  // namespace

Ablation run_ablation(const Dataset& data, const json& base_config, const std::string& axis,
                      const std::vector<std::string>& values) {
  static const std::set<std::string> axes{"K", "H", "rounds", "adapter", "supervision"};
  if (!axes.count(axis)) throw Error(ErrorCode::kConfig, "unknown ablation axis: " + axis);
  if (values.empty()) throw Error(ErrorCode::kConfig, "ablation needs at least one value");
  const RestConfig base = rest_config_from_json(base_config);
  Ablation out;
  out.axis = axis;
  std::optional<SupervisionResult> supervision;  // one comparison serves both values
  for (const auto& v : values) {
    json cj = base_config;
    RestConfig c;
    AblationRow row;
    row.value = v;
    if (axis == "K" || axis == "H") {
      apply_override(cj, "rest." + axis + "=" + v);
      c = rest_config_from_json(cj);
      row.metrics = run_metrics(run_rest(*data.manifest, {data.text, data.captioner}, c));
    } else if (axis == "rounds") {
      std::size_t n = 0;
      try {
        n = std::stoul(v);
      } catch (const std::exception&) {
        throw Error(ErrorCode::kConfig, "rounds value must be an integer: " + v);
      }
      if (n == 0 || base.total_epochs % n != 0) {
        throw Error(ErrorCode::kConfig, "rounds must divide total_epochs (" +
                                            std::to_string(base.total_epochs) + "): " + v);
      }
      apply_override(cj, "rest.R=" + std::to_string(base.total_epochs / n));
      c = rest_config_from_json(cj);
      row.metrics = run_metrics(run_rest(*data.manifest, {data.text, data.captioner}, c));
    } else if (axis == "adapter") {
      if (v != "on" && v != "off") throw Error(ErrorCode::kConfig, "adapter value must be on or off: " + v);
      apply_override(cj, std::string("rest.adapter=") + (v == "on" ? "true" : "false"));
      c = rest_config_from_json(cj);
      row.metrics = run_metrics(run_rest(*data.manifest, {data.text, data.captioner}, c));
      if (!data.order_pairs.empty()) row.metrics["order_pair_probe"] = order_pair_probe(data, c, c.total_epochs);
    } else {
      if (v != "pseudo" && v != "label") {
        throw Error(ErrorCode::kConfig, "supervision value must be pseudo or label: " + v);
      }
      if (!supervision) supervision = compare_supervision(data, base, base.total_epochs);
      const SupervisionResult& r = *supervision;
      const EvalReport& rep = v == "pseudo" ? r.rest_unseen : r.label_unseen;
      row.metrics = {{"unseen_generalized_top1", rep.top1}, {"unseen_generalized_topk", rep.topk}};
      if (v == "label") row.metrics["seen_vocab_fraction"] = r.label_seen_vocab_fraction;
    }
    out.rows.push_back(std::move(row));
  }
  return out;
}

}  // namespace rest
