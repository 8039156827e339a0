#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "common.hpp"
#include "contourrl/commands.hpp"
#include "contourrl/errors.hpp"
#include "contourrl/dataset.hpp"
#include "contourrl/manifest.hpp"
#include "contourrl/network.hpp"
#include "contourrl/random.hpp"

using namespace crl;
namespace fs = std::filesystem;

namespace {

int run(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.push_back("contour_rl");
  for (const std::string& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

size_t line_count(const std::string& path) {
  std::ifstream in(path);
  size_t n = 0;
  std::string line;
  while (std::getline(in, line)) ++n;
  return n;
}

// small dataset config: 6 samples split 2/2/2, images just large enough for
// the landing crop
void write_small_config(const std::string& path, int extra_test = 0) {
  nlohmann::json j{{"seed", 5},
                   {"synth",
                    {{"count", 6 + extra_test},
                     {"height", 104},
                     {"width", 81},
                     {"train", 2},
                     {"val", 2},
                     {"test", 2 + extra_test},
                     {"base_radius", 10.0}}},
                   {"env", {{"max_test_steps", 80}}}};
  std::ofstream out(path);
  out << j.dump(2);
}

}  // namespace

TEST_CASE("synth writes a digested dataset and identical manifests on re-run") {
  test::TempDir tmp;
  std::string cfg_path = tmp.file("cfg.json");
  write_small_config(cfg_path);
  std::string out = tmp.file("ds");

  REQUIRE(run({"synth", "--config", cfg_path, "--out", out}) == 0);

  DatasetManifest dm = read_dataset_manifest(out + "/manifest.json");
  REQUIRE(dm.entries.size() == 6u);
  int train = 0, val = 0, test = 0;
  for (const DatasetEntry& e : dm.entries) {
    CHECK(fs::exists(fs::path(out) / e.image_path));
    CHECK(fs::exists(fs::path(out) / e.contour_path));
    train += e.split == "train";
    val += e.split == "val";
    test += e.split == "test";
  }
  CHECK(train == 2);
  CHECK(val == 2);
  CHECK(test == 2);
  CHECK(dm.entries[0].id == "s0000");

  RunManifest rm = read_run_manifest(out + "/synth_manifest.json");
  CHECK(rm.command == "synth");
  CHECK(rm.seed == 5u);
  CHECK(rm.config.at("synth").at("count").get<int>() == 6);
  // two files per sample plus the dataset manifest
  CHECK(rm.outputs.size() == 13u);
  CHECK(fs::exists(tmp.file("ds/run.log")));

  // the same command again writes a numbered manifest with identical bytes
  REQUIRE(run({"synth", "--config", cfg_path, "--out", out}) == 0);
  REQUIRE(fs::exists(out + "/synth_manifest.2.json"));
  CHECK(read_bytes(out + "/synth_manifest.json") == read_bytes(out + "/synth_manifest.2.json"));
}

TEST_CASE("command-line seed overrides the config file") {
  test::TempDir tmp;
  std::string cfg_path = tmp.file("cfg.json");
  write_small_config(cfg_path);

  CliOptions opt;
  opt.config_path = cfg_path;
  RunConfig from_file = resolve_config(opt);
  CHECK(from_file.seed == 5u);
  CHECK(from_file.synth_height == 104);

  opt.seed = 11;
  opt.threads = 2;
  RunConfig overridden = resolve_config(opt);
  CHECK(overridden.seed == 11u);
  CHECK(overridden.threads == 2);
  CHECK(overridden.synth_height == 104);  // non-overridden values survive
}

TEST_CASE("the resolved config snapshot round-trips through json") {
  RunConfig defaults;
  nlohmann::json snap = config_json(defaults);

  test::TempDir tmp;
  std::string path = tmp.file("snap.json");
  {
    std::ofstream out(path);
    out << snap.dump(2);
  }
  RunConfig loaded = load_run_config(path);
  CHECK(config_json(loaded) == snap);

  // unknown engine names are rejected
  {
    std::ofstream out(path);
    out << R"({"engine": "mystery"})";
  }
  CHECK_THROWS_AS(load_run_config(path), Error);

  // malformed json is a parse error
  {
    std::ofstream out(path);
    out << "{nope";
  }
  CHECK_THROWS_AS(load_run_config(path), ParseError);
}

TEST_CASE("preprocess is byte-idempotent and reports corrupt samples") {
  test::TempDir tmp;
  std::string cfg_path = tmp.file("cfg.json");
  write_small_config(cfg_path);
  std::string ds = tmp.file("ds");
  REQUIRE(run({"synth", "--config", cfg_path, "--out", ds}) == 0);

  std::string p1 = tmp.file("p1"), p2 = tmp.file("p2");
  REQUIRE(run({"preprocess", "--config", cfg_path, "--dataset", ds + "/manifest.json", "--out",
               p1}) == 0);
  REQUIRE(run({"preprocess", "--config", cfg_path, "--dataset", p1 + "/manifest.json", "--out",
               p2}) == 0);

  // refining already-refined contours changes nothing on disk
  DatasetManifest dm = read_dataset_manifest(p1 + "/manifest.json");
  REQUIRE(dm.entries.size() == 6u);
  for (const DatasetEntry& e : dm.entries) {
    CHECK(read_bytes((fs::path(p1) / e.image_path).string()) ==
          read_bytes((fs::path(p2) / e.image_path).string()));
    CHECK(read_bytes((fs::path(p1) / e.contour_path).string()) ==
          read_bytes((fs::path(p2) / e.contour_path).string()));
  }
  CHECK(read_bytes(p1 + "/manifest.json") == read_bytes(p2 + "/manifest.json"));

  // a corrupt contour file fails that sample and flips the exit code
  {
    std::ofstream out(fs::path(ds) / dm.entries[1].contour_path);
    out << "this is not a contour\n";
  }
  std::string p3 = tmp.file("p3");
  CHECK(run({"preprocess", "--config", cfg_path, "--dataset", ds + "/manifest.json", "--out",
             p3}) == 1);
  DatasetManifest broken = read_dataset_manifest(p3 + "/manifest.json");
  CHECK(broken.entries.size() == 5u);  // the bad sample is dropped
}

TEST_CASE("zero-iteration landing training saves the freshly seeded network") {
  test::TempDir tmp;
  std::string cfg_path = tmp.file("cfg.json");
  write_small_config(cfg_path);
  std::string ds = tmp.file("ds");
  REQUIRE(run({"synth", "--config", cfg_path, "--out", ds}) == 0);

  nlohmann::json j = nlohmann::json::parse(read_bytes(cfg_path));
  j["landing"] = {{"iterations", 0}};
  {
    std::ofstream out(cfg_path);
    out << j.dump(2);
  }
  std::string out = tmp.file("landing");
  REQUIRE(run({"train-landing", "--config", cfg_path, "--dataset", ds + "/manifest.json", "--out",
               out}) == 0);
  CHECK(fs::exists(out + "/landing_last.ckpt"));
  CHECK(fs::exists(out + "/landing.ckpt"));
  CHECK(line_count(out + "/landing_log.csv") == 1u);  // header only
  CHECK(fs::exists(out + "/train-landing_manifest.json"));

  // the initial network comes from the documented seed stream
  Checkpoint cp = load_checkpoint(out + "/landing.ckpt");
  Network want = landing_network(mix_seed(5, 100));
  REQUIRE(cp.net.param_count() == want.param_count());
  std::vector<float> a(cp.net.param_count()), b(want.param_count());
  cp.net.copy_params_to(a.data());
  want.copy_params_to(b.data());
  CHECK(a == b);

  // resuming without a checkpoint in a fresh directory fails cleanly
  CHECK(run({"train-landing", "--config", cfg_path, "--dataset", ds + "/manifest.json", "--out",
             tmp.file("empty"), "--resume"}) == 1);
}

TEST_CASE("trace walks from an explicit start and writes its artefacts") {
  test::TempDir tmp;
  std::string cfg_path = tmp.file("cfg.json");
  write_small_config(cfg_path);
  std::string ds = tmp.file("ds");
  REQUIRE(run({"synth", "--config", cfg_path, "--out", ds}) == 0);

  std::string policy_path = tmp.file("policy.ckpt");
  save_checkpoint(policy_path, policy_network(7001), 0);

  std::string out = tmp.file("trace");
  REQUIRE(run({"trace", "--config", cfg_path, "--image", ds + "/s0000.pgm", "--policy",
               policy_path, "--start", "30,40", "--out", out}) == 0);

  nlohmann::json summary = nlohmann::json::parse(read_bytes(out + "/summary.json"));
  CHECK(summary.at("start") == nlohmann::json({30, 40}));
  int steps = summary.at("steps").get<int>();
  CHECK(steps > 0);
  CHECK(steps <= 80);  // the config caps test walks
  size_t points = summary.at("trace_points").get<size_t>();
  CHECK(line_count(out + "/trace.csv") == points);
  CHECK(fs::exists(out + "/contour.csv"));
  CHECK(fs::exists(out + "/trace_manifest.json"));
  CHECK(read_bytes(out + "/overlay.ppm").substr(0, 2) == "P6");

  // bad start positions and malformed start strings fail cleanly
  CHECK(run({"trace", "--config", cfg_path, "--image", ds + "/s0000.pgm", "--policy", policy_path,
             "--start", "999,1", "--out", tmp.file("t2")}) == 1);
  CHECK(run({"trace", "--config", cfg_path, "--image", ds + "/s0000.pgm", "--policy", policy_path,
             "--start", "abc", "--out", tmp.file("t3")}) == 1);
  // without a start, a landing checkpoint is mandatory
  CHECK(run({"trace", "--config", cfg_path, "--image", ds + "/s0000.pgm", "--policy", policy_path,
             "--out", tmp.file("t4")}) == 1);
}

TEST_CASE("mirrored synth and eval runs produce byte-identical artefacts") {
  test::TempDir tmp;
  std::string cfg_path = tmp.file("cfg.json");
  write_small_config(cfg_path);

  // checkpoints shared by both mirrors, referenced by relative path
  for (const auto& root : {tmp.file("a"), tmp.file("b")}) {
    fs::create_directories(root);
    save_checkpoint(root + "/policy.ckpt", policy_network(7101), 0);
    save_checkpoint(root + "/landing.ckpt", landing_network(7102), 0);
    REQUIRE(run({"synth", "--config", cfg_path, "--out", root + "/ds"}) == 0);
    REQUIRE(run({"eval", "--config", cfg_path, "--dataset", root + "/ds/manifest.json",
                 "--policy", root + "/policy.ckpt", "--landing", root + "/landing.ckpt", "--out",
                 root + "/eval"}) == 0);
  }
  for (const char* rel :
       {"/ds/manifest.json", "/ds/synth_manifest.json", "/ds/s0004.pgm", "/ds/s0004.csv",
        "/eval/eval.csv", "/eval/eval.json", "/eval/eval_manifest.json"})
    CHECK(read_bytes(tmp.file("a") + rel) == read_bytes(tmp.file("b") + rel));

  // the eval manifest digests the test split inputs and both checkpoints
  RunManifest rm = read_run_manifest(tmp.file("a") + "/eval/eval_manifest.json");
  CHECK(rm.command == "eval");
  CHECK(rm.inputs.size() == 7u);  // dataset manifest + 2x2 sample files + 2 checkpoints
  CHECK(rm.outputs.size() == 2u);
}

TEST_CASE("eval refuses an empty test split") {
  test::TempDir tmp;
  std::string cfg_path = tmp.file("cfg.json");
  {
    nlohmann::json j{{"seed", 5},
                     {"synth",
                      {{"count", 2},
                       {"height", 104},
                       {"width", 81},
                       {"train", 1},
                       {"val", 1},
                       {"test", 0},
                       {"base_radius", 10.0}}}};
    std::ofstream out(cfg_path);
    out << j.dump(2);
  }
  std::string ds = tmp.file("ds");
  REQUIRE(run({"synth", "--config", cfg_path, "--out", ds}) == 0);
  save_checkpoint(tmp.file("policy.ckpt"), policy_network(7201), 0);
  save_checkpoint(tmp.file("landing.ckpt"), landing_network(7202), 0);
  CHECK(run({"eval", "--config", cfg_path, "--dataset", ds + "/manifest.json", "--policy",
             tmp.file("policy.ckpt"), "--landing", tmp.file("landing.ckpt"), "--out",
             tmp.file("eval")}) == 1);
}

TEST_CASE("malformed invocations exit nonzero") {
  test::TempDir tmp;
  CHECK(run({}) != 0);                       // a subcommand is required
  CHECK(run({"conjure"}) != 0);              // unknown subcommand
  CHECK(run({"preprocess"}) != 0);           // missing required --dataset
  CHECK(run({"trace", "--image", "x.pgm"}) != 0);  // missing required --policy
  CHECK(run({"synth"}) == 1);                // parses, but --out is required
  CHECK(run({"eval", "--dataset", tmp.file("nope.json"), "--policy", tmp.file("p.ckpt"),
             "--landing", tmp.file("l.ckpt"), "--out", tmp.file("o")}) == 1);
  CHECK(fs::exists(tmp.file("nope.json")) == false);
}
