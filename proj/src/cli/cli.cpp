#include "rest/cli/cli.hpp"

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <sstream>

#include "rest/cli/experiments.hpp"
#include "rest/core/error.hpp"
#include "rest/core/log.hpp"

namespace rest {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json read_json_file(const fs::path& path, ErrorCode missing) {
  std::ifstream in(path);
  if (!in) throw Error(missing, "missing file: " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(missing == ErrorCode::kConfig ? ErrorCode::kConfig : ErrorCode::kParse,
                path.string() + ": " + e.what());
  }
}

void write_json_file(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kMissingFile, "cannot write " + path.string());
  out << j.dump(2) << "\n";
}

struct Globals {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  bool quiet = false;
};

// Preset, then the config file, then --set overrides, then global flags.
json resolve_config(const std::string& preset, const std::string& config_path,
                    const std::vector<std::string>& overrides, const Globals& g) {
  json j;
  if (preset == "synthetic") {
    j = to_json(RestConfig::synthetic_preset());
  } else if (preset == "full") {
    j = to_json(RestConfig{});
  } else {
    throw Error(ErrorCode::kConfig, "unknown preset: " + preset);
  }
  if (!config_path.empty()) {
    json file = read_json_file(config_path, ErrorCode::kConfig);
    file.erase("run");
    rest_config_from_json(file);  // rejects unknown keys with their path
    j.merge_patch(file);
  }
  for (const auto& o : overrides) apply_override(j, o);
  if (g.seed) j["seed"] = *g.seed;
  if (g.threads) j["threads"] = *g.threads;
  rest_config_from_json(j);
  return j;
}

struct LoadedWorld {
  WorldDir world;
  std::unique_ptr<TextEncoder> text;
  std::unique_ptr<FrameCaptioner> captioner;

  Dataset dataset() const {
    return {&world.manifest, text.get(), captioner.get(), world.seen_classes, world.unseen_classes,
            world.order_pairs};
  }
};

LoadedWorld open_world(const fs::path& dir) {
  LoadedWorld w{load_world_dir(dir), nullptr, nullptr};
  w.text = w.world.make_text_encoder();
  w.captioner = w.world.make_captioner();
  return w;
}

std::map<std::string, std::string> read_captions(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kMissingFile, "missing run artifact: " + path.string());
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      out[j.at("id").get<std::string>()] = j.at("caption").get<std::string>();
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kParse, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void cmd_synth(const fs::path& out_dir, const std::string& spec_path, const std::vector<std::string>& sets,
               const Globals& g, std::ostream& out) {
  json spec = SynthSpec{}.to_json();
  if (!spec_path.empty()) spec.merge_patch(read_json_file(spec_path, ErrorCode::kConfig));
  for (const auto& s : sets) apply_override(spec, s);
  if (g.seed) spec["seed"] = *g.seed;
  const SynthWorld w = generate_world(SynthSpec::from_json(spec));
  save_world(w, out_dir);
  out << "wrote " << w.manifest.size() << " videos, " << w.class_phrases().size() << " classes to "
      << out_dir.string() << "\n";
}

void cmd_train(const fs::path& world_dir, const fs::path& run_dir, const json& config, std::ostream& out) {
  LoadedWorld w = open_world(world_dir);
  const RestConfig c = rest_config_from_json(config);
  RunOptions opts;
  opts.run_dir = run_dir;
  opts.extra_config = {{"run", {{"world", fs::absolute(world_dir).lexically_normal().string()}}}};
  const RunArtifacts run = run_rest(w.world.manifest, {w.text.get(), w.captioner.get()}, c, opts);
  out << "rounds " << run.rounds_completed << ", epochs " << run.epochs_completed << "\n";
  if (run.final_eval) {
    out << "initial captions\n" << run.init_eval->summary_table();
    out << "final captions\n" << run.final_eval->summary_table();
  }
}

void cmd_eval(const fs::path& run_dir, const std::string& protocol, std::ostream& out) {
  // Only the frozen config counts; nothing ambient is read.
  json frozen = read_json_file(run_dir / "config.json", ErrorCode::kMissingFile);
  if (!frozen.contains("run") || !frozen["run"].contains("world")) {
    throw Error(ErrorCode::kParse, (run_dir / "config.json").string() + ": no world recorded");
  }
  const fs::path world_dir = frozen["run"]["world"].get<std::string>();
  frozen.erase("run");
  const RestConfig c = rest_config_from_json(frozen);
  const auto captions = read_captions(run_dir / "final_captions.jsonl");
  LoadedWorld w = open_world(world_dir);
  TextEmbeddingCache texts(*w.text);
  const auto labels = manifest_labels(w.world.manifest);
  EvalReport rep;
  if (protocol == "standard") {
    const ClassEmbeddingTable table(w.world.manifest.classes, texts);
    rep = evaluate_topk(captions, labels, table, texts, c.eval_k);
  } else {
    if (w.world.seen_classes.empty() || w.world.unseen_classes.empty()) {
      throw Error(ErrorCode::kConfig, "world has no seen/unseen split for the generalized protocol");
    }
    rep = generalized_eval(captions, labels, w.world.seen_classes, w.world.unseen_classes, texts, c.eval_k);
  }
  json j = rep.to_json();
  j["protocol"] = protocol;
  write_json_file(run_dir / ("eval_" + protocol + ".json"), j);
  out << protocol << " protocol\n" << rep.summary_table();
}

void cmd_ablate(const fs::path& world_dir, const json& config, const std::string& axis,
                const std::vector<std::string>& values, const std::string& out_dir, std::ostream& out) {
  LoadedWorld w = open_world(world_dir);
  const Ablation a = run_ablation(w.dataset(), config, axis, values);
  out << a.table();
  json j = a.to_json();
  j["config"] = config;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_json_file(fs::path(out_dir) / ("ablation_" + axis + ".json"), j);
  } else {
    out << j.dump() << "\n";
  }
}

void cmd_inspect(const fs::path& run_dir, const std::string& video, std::ostream& out) {
  const fs::path caches = run_dir / "caches";
  if (!fs::exists(caches / "round_0.jsonl")) {
    throw Error(ErrorCode::kMissingFile, "missing run artifact: " + (caches / "round_0.jsonl").string());
  }
  bool found = false;
  for (int r = 0;; ++r) {
    const fs::path p = caches / ("round_" + std::to_string(r) + ".jsonl");
    if (!fs::exists(p)) break;
    const CaptionCache cache = load_caches(p, std::numeric_limits<std::size_t>::max());
    std::size_t i = 0;
    try {
      i = cache.index_of(video);
    } catch (const Error&) {
      throw Error(ErrorCode::kUnknownId, "unknown video " + video + " in " + p.string());
    }
    found = true;
    out << "round " << r << "\n";
    for (const auto& e : cache.entries(i)) {
      char score[32];
      std::snprintf(score, sizeof score, "%.4f", e.relevance);
      out << "  " << score << "  " << to_string(e.origin) << "@" << e.round << "  " << e.text << "\n";
    }
  }
  if (!found) throw Error(ErrorCode::kMissingFile, "no cache snapshots in " + caches.string());
}

std::vector<std::string> split_values(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string v; std::getline(ss, v, ',');) {
    if (!v.empty()) out.push_back(v);
  }
  return out;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Retrieval-augmented self-training of a toy action captioner", "rest"};
  app.require_subcommand(1);
  Globals g;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  auto* seed_opt = app.add_option("--seed", seed, "Seed for worlds and runs");
  auto* threads_opt = app.add_option("--threads", threads, "Worker threads");
  app.add_flag("--quiet", g.quiet, "Only print errors");
  // Global flags are accepted after the subcommand name too.
  app.fallthrough();

  std::string out_dir, spec_path, world_dir, run_dir, config_path, preset = "synthetic";
  std::string protocol = "standard", axis, values, video;
  std::vector<std::string> sets;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic world directory");
  synth->add_option("--out", out_dir, "World directory")->required();
  synth->add_option("--spec", spec_path, "World spec JSON");
  synth->add_option("--set", sets, "spec key=value");

  auto add_config_options = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "Config JSON");
    sub->add_option("--preset", preset, "Base config: synthetic or full")
        ->check(CLI::IsMember({"synthetic", "full"}));
    sub->add_option("--set", sets, "Dotted config override key=value");
  };
  auto* train = app.add_subcommand("train", "Run REST on a world");
  train->add_option("--world", world_dir, "World directory")->required();
  train->add_option("--run", run_dir, "Run directory")->required();
  add_config_options(train);

  auto* eval = app.add_subcommand("eval", "Evaluate a run's final captions");
  eval->add_option("--run", run_dir, "Run directory")->required();
  eval->add_option("--protocol", protocol, "standard or generalized")
      ->check(CLI::IsMember({"standard", "generalized"}));

  auto* ablate = app.add_subcommand("ablate", "Sweep one axis with a shared seed");
  ablate->add_option("--world", world_dir, "World directory")->required();
  ablate->add_option("--axis", axis, "K, H, rounds, adapter or supervision")->required();
  ablate->add_option("--values", values, "Comma-separated values");
  ablate->add_option("--out", out_dir, "Directory for the JSON table");
  add_config_options(ablate);

  auto* inspect = app.add_subcommand("inspect", "Per-round caches of one video");
  inspect->add_option("--run", run_dir, "Run directory")->required();
  inspect->add_option("--video", video, "Video id")->required();

  std::vector<std::string> args;
  for (int i = argc - 1; i > 0; --i) args.emplace_back(argv[i]);
  try {
    app.parse(std::move(args));
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  if (*seed_opt) g.seed = seed;
  if (*threads_opt) g.threads = threads;
  log::set_level(g.quiet ? log::Level::kError : log::Level::kWarning);

  try {
    if (*synth) {
      cmd_synth(out_dir, spec_path, sets, g, out);
    } else if (*train) {
      cmd_train(world_dir, run_dir, resolve_config(preset, config_path, sets, g), out);
    } else if (*eval) {
      cmd_eval(run_dir, protocol, out);
    } else if (*ablate) {
      std::vector<std::string> vals = split_values(values);
      if (vals.empty()) {
        if (axis == "adapter") vals = {"on", "off"};
        if (axis == "supervision") vals = {"pseudo", "label"};
      }
      cmd_ablate(world_dir, resolve_config(preset, config_path, sets, g), axis, vals, out_dir, out);
    } else if (*inspect) {
      cmd_inspect(run_dir, video, out);
    }
  } catch (const Error& e) {
    err << "error (" << to_string(e.code()) << "): " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}

}  // namespace rest
