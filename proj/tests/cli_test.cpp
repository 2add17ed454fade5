#include <doctest.h>

#include <json.hpp>
#include <sstream>

#include "rest/cache/caption_cache.hpp"
#include "rest/cli/cli.hpp"
#include "rest/cli/experiments.hpp"
#include "test_util.hpp"

using namespace rest;
using nlohmann::json;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result cli(std::vector<std::string> args) {
  args.insert(args.begin(), "rest");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

const std::vector<std::string> kWorldSets = {
    "--set", "classes=4",  "--set", "videos=24",       "--set", "frames=4",
    "--set", "dim=16",     "--set", "feature_dim=8",   "--set", "spatial_tokens=2",
    "--set", "order_pair_fraction=0.5"};

const std::vector<std::string> kConfigSets = {
    "--set", "rest.K=2",          "--set", "rest.H=4",         "--set", "rest.R=2",
    "--set", "rest.total_epochs=4", "--set", "model.model_dim=16", "--set", "model.ffn_dim=32",
    "--set", "model.layers=1",    "--set", "rest.max_caption_tokens=6", "--set", "eval.k=2",
    "--quiet"};

std::vector<std::string> cat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TEST_CASE("synth, train, eval and inspect on a tiny world") {
  rest::test::TempDir dir;
  const std::string world = (dir / "world").string();
  const std::string run = (dir / "run").string();

  auto r = cli(cat({"synth", "--out", world, "--seed", "4"}, kWorldSets));
  REQUIRE(r.code == 0);
  auto wd = load_world_dir(world);
  CHECK(wd.manifest.size() == 24);
  CHECK(wd.order_pairs.size() == 1);
  CHECK(wd.unseen_classes.size() == 1);
  CHECK(wd.text_encoder["kind"] == "stub");

  r = cli(cat({"train", "--world", world, "--run", run, "--seed", "2"}, kConfigSets));
  REQUIRE(r.code == 0);
  CHECK(r.out.find("rounds 2, epochs 4") != std::string::npos);
  auto frozen = json::parse(rest::test::read_text(dir / "run" / "config.json"));
  CHECK(frozen["seed"] == 2);
  CHECK(frozen["rest"]["K"] == 2);
  CHECK(frozen["run"]["world"].get<std::string>().find("world") != std::string::npos);

  // eval reads only the frozen config; an ambient config file changes nothing
  rest::test::write_text(dir / "config.json", "{\"eval\": {\"k\": 4}}");
  r = cli({"eval", "--run", run});
  REQUIRE(r.code == 0);
  auto report = json::parse(rest::test::read_text(dir / "run" / "eval_standard.json"));
  CHECK(report["k"] == 2);
  CHECK(report["videos"] == 24);

  r = cli({"eval", "--run", run, "--protocol", "generalized"});
  REQUIRE(r.code == 0);
  auto gen = json::parse(rest::test::read_text(dir / "run" / "eval_generalized.json"));
  CHECK(gen["videos"] == 6);
  CHECK(gen["top1"].get<double>() <= report["top1"].get<double>() + 1.0);

  r = cli({"inspect", "--run", run, "--video", "vid05"});
  REQUIRE(r.code == 0);
  for (int round = 0; round <= 2; ++round) {
    auto cache = load_caches(dir / "run" / "caches" / ("round_" + std::to_string(round) + ".jsonl"), 2);
    const auto& top = cache.entries(cache.index_of("vid05")).front();
    const auto header = r.out.find("round " + std::to_string(round) + "\n");
    REQUIRE(header != std::string::npos);
    CHECK(r.out.find(top.text, header) != std::string::npos);
  }
  CHECK(r.out.find("round 3") == std::string::npos);

  CHECK(cli({"inspect", "--run", run, "--video", "nope"}).code == 3);
  CHECK(cli({"inspect", "--run", (dir / "missing").string(), "--video", "vid05"}).code == 3);
  CHECK(cli({"eval", "--run", (dir / "missing").string()}).code == 3);
}

TEST_CASE("ablate sweeps one axis with a shared seed") {
  rest::test::TempDir dir;
  const std::string world = (dir / "world").string();
  REQUIRE(cli(cat({"synth", "--out", world}, kWorldSets)).code == 0);

  auto r = cli(cat({"ablate", "--world", world, "--axis", "K", "--values", "1,2", "--out", (dir / "abl").string()},
                   kConfigSets));
  REQUIRE(r.code == 0);
  auto j = json::parse(rest::test::read_text(dir / "abl" / "ablation_K.json"));
  REQUIRE(j["rows"].size() == 2);
  CHECK(j["rows"][0]["value"] == "1");
  CHECK(j["rows"][1]["value"] == "2");
  CHECK(j["rows"][0]["metrics"].contains("top1"));
  CHECK(r.out.find("K\ttop1") == 0);

  r = cli(cat({"ablate", "--world", world, "--axis", "adapter"}, kConfigSets));
  REQUIRE(r.code == 0);
  auto line = r.out.substr(r.out.rfind("{\"axis\""));
  j = json::parse(line);
  REQUIRE(j["rows"].size() == 2);
  CHECK(j["rows"][1]["value"] == "off");
  CHECK(j["rows"][0]["metrics"].contains("order_pair_probe"));

  r = cli(cat({"ablate", "--world", world, "--axis", "rounds", "--values", "1,2"}, kConfigSets));
  REQUIRE(r.code == 0);
  j = json::parse(r.out.substr(r.out.rfind("{\"axis\"")));
  CHECK(j["rows"][0]["metrics"]["rounds"] == 1);
  CHECK(j["rows"][1]["metrics"]["rounds"] == 2);

  r = cli(cat({"ablate", "--world", world, "--axis", "supervision"}, kConfigSets));
  REQUIRE(r.code == 0);
  j = json::parse(r.out.substr(r.out.rfind("{\"axis\"")));
  CHECK(j["rows"][1]["metrics"].contains("seen_vocab_fraction"));

  CHECK(cli(cat({"ablate", "--world", world, "--axis", "beam", "--values", "1"}, kConfigSets)).code == 2);
  CHECK(cli(cat({"ablate", "--world", world, "--axis", "rounds", "--values", "3"}, kConfigSets)).code == 2);
  CHECK(cli(cat({"ablate", "--world", world, "--axis", "adapter", "--values", "maybe"}, kConfigSets)).code == 2);
}

TEST_CASE("exit codes on error paths") {
  rest::test::TempDir dir;
  CHECK(cli({}).code == 2);
  CHECK(cli({"frobnicate"}).code == 2);
  CHECK(cli({"train", "--run", "x"}).code == 2);
  CHECK(cli({"synth", "--out", (dir / "w").string(), "--set", "clases=3"}).code == 2);
  CHECK(cli({"synth", "--out", (dir / "w").string(), "--set", "p_correct=2"}).code == 2);
  CHECK(cli({"train", "--world", (dir / "none").string(), "--run", (dir / "r").string()}).code == 3);
  REQUIRE(cli(cat({"synth", "--out", (dir / "w").string()}, kWorldSets)).code == 0);
  CHECK(cli({"train", "--world", (dir / "w").string(), "--run", (dir / "r").string(), "--set", "rest.k=3"}).code == 2);
  rest::test::write_text(dir / "bad.json", "{\"rest\": {\"K\": 0}}");
  CHECK(cli({"train", "--world", (dir / "w").string(), "--run", (dir / "r").string(), "--config",
             (dir / "bad.json").string()})
            .code == 2);
  rest::test::write_text(dir / "w" / "world.json", "{\"text_encoder\": {\"kind\": \"magic\"}}");
  CHECK(cli({"train", "--world", (dir / "w").string(), "--run", (dir / "r").string()}).code == 2);
  rest::test::write_text(dir / "w" / "world.json", "{not json");
  CHECK(cli({"train", "--world", (dir / "w").string(), "--run", (dir / "r").string()}).code == 3);
  CHECK(cli({"--help"}).code == 0);
}
