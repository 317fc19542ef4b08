// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cli.hpp"
#include "ping/config.hpp"
#include "ping/errors.hpp"
#include "ping/feature_bank.hpp"

using namespace ping;
namespace fs = std::filesystem;

namespace {

constexpr const char* kTinyConfig = R"({
  "num_classes": 4, "n_train": 48, "n_val": 12, "n_test": 12,
  "d_latent": 4, "d_raw_image": 8, "d_raw_text": 7,
  "epochs": 2, "warmup_epochs": 1, "batch_size": 16, "queue_size": 24,
  "proj_dim": 4, "hidden_dim": 8, "proj_hidden_dim": 6,
  "teacher_dim_image": 6, "teacher_dim_text": 5,
  "probe_epochs": 3, "probe_batch_size": 16,
  "seed": 5
}
)";

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("ping_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path write_config(const fs::path& dir, const std::string& text = kTinyConfig) {
  const auto p = dir / "config.json";
  std::ofstream(p, std::ios::binary) << text;
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

}  // namespace

TEST_CASE("config parsing") {
  const RunConfig cfg = parse_config(kTinyConfig);
  CHECK(cfg.gen.num_classes == 4);
  CHECK(cfg.train.batch_size == 16);
  CHECK(cfg.seed() == 5);
  CHECK(cfg.gen.seed == 5);
  CHECK(cfg.probe.seed == 5);
  CHECK(cfg.train.alpha == 0.25);

  const RunConfig defaults = parse_config("{}");
  CHECK(defaults.train.batch_size == 256);
  CHECK(defaults.train.queue_size == 2048);
  CHECK(defaults.gen.n_train == 5000);

  CHECK_THROWS_AS(parse_config(R"({"alpah": 0.3})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"alpha": "high"})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"alpha": 1.5})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"epochs": -3})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"update_strategy": "lifo"})"), ConfigError);
  CHECK_THROWS_AS(parse_config("[1, 2]"), ConfigError);
  CHECK_THROWS_AS(parse_config("{"), ConfigError);
}

TEST_CASE("config json roundtrip covers every key") {
  RunConfig cfg = parse_config(kTinyConfig);
  cfg.train.lr_adapter = 2e-3;
  cfg.train.update_strategy = UpdateStrategy::kRandom;
  cfg.train.modality_mask = ModalityMask::kTextOnly;
  const std::string text = to_json(cfg);
  const auto doc = nlohmann::json::parse(text);
  CHECK(doc.size() == config_keys().size());
  for (const auto& key : config_keys()) CHECK(doc.contains(key));
  CHECK(to_json(parse_config(text)) == text);
}

TEST_CASE("set_config_value") {
  RunConfig cfg;
  set_config_value(cfg, "alpha", "0.75");
  CHECK(cfg.train.alpha == 0.75);
  set_config_value(cfg, "update_strategy", "random");
  CHECK(cfg.train.update_strategy == UpdateStrategy::kRandom);
  set_config_value(cfg, "modality_mask", "image_only");
  CHECK(cfg.train.modality_mask == ModalityMask::kImageOnly);
  set_config_value(cfg, "queue_size", "64");
  CHECK(cfg.train.queue_size == 64);
  CHECK_THROWS_AS(set_config_value(cfg, "queue", "64"), ConfigError);
}

TEST_CASE("train then eval emits metric rows and a complete run directory") {
  const auto dir = scratch("train_eval");
  const auto config = write_config(dir);
  const auto run_dir = dir / "run";
  const auto trained = run_cli({"train", "--config", config.string(), "--method", "clip-ping", "--seed", "7", "--out",
                            run_dir.string()});
  REQUIRE(trained.code == 0);
  for (const char* f : {"manifest.json", "checkpoint.pingckpt", "runlog.csv", "config.json", "bank_image.pingfb",
                        "bank_text.pingfb"})
    CHECK(fs::exists(run_dir / f));
  CHECK(slurp(run_dir / "config.json") == slurp(config));

  const auto manifest = nlohmann::json::parse(slurp(run_dir / "manifest.json"));
  CHECK(manifest.at("seed") == 7);
  CHECK(manifest.at("method") == "clip-ping");
  CHECK(manifest.at("tool_version") == cli::kToolVersion);
  CHECK(read_bank(run_dir / "bank_image.pingfb").size() == 72);

  const auto runlog = lines(slurp(run_dir / "runlog.csv"));
  CHECK(runlog.size() == 3);
  CHECK(runlog[0] == "epoch,lr_image,lr_text,loss_total,loss_clip,loss_nn,loss_xnn,inv_tau,seconds");

  const auto val = run_cli({"eval", "--run", run_dir.string(), "--split", "val"});
  REQUIRE(val.code == 0);
  const auto test = run_cli({"eval", "--run", run_dir.string(), "--split", "test", "--k", "1,5"});
  REQUIRE(test.code == 0);
  const auto metrics = lines(slurp(run_dir / "metrics.csv"));
  CHECK(metrics[0] == "method,seed,split,metric,k,value");
  CHECK(metrics.size() - 1 >= 6);
  std::set<std::string> kinds;
  for (std::size_t i = 1; i < metrics.size(); ++i) {
    CHECK(std::count(metrics[i].begin(), metrics[i].end(), ',') == 5);
    kinds.insert(metrics[i].substr(0, metrics[i].rfind(',', metrics[i].rfind(',') - 1)));
  }
  for (const char* needle : {"val,i2t_recall", "val,t2i_recall", "val,zero_shot_top1", "val,linear_probe_top1",
                             "test,i2t_recall", "test,zero_shot_top1"}) {
    CHECK(slurp(run_dir / "metrics.csv").find(needle) != std::string::npos);
  }
  fs::remove_all(dir);
}

TEST_CASE("rerunning train reproduces the checkpoint bytes") {
  const auto dir = scratch("repro");
  const auto config = write_config(dir);
  for (const char* name : {"a", "b"}) {
    REQUIRE(run_cli({"train", "--config", config.string(), "--method", "a-clip-ping", "--seed", "3", "--out",
                 (dir / name).string()})
                .code == 0);
  }
  CHECK(slurp(dir / "a" / "checkpoint.pingckpt") == slurp(dir / "b" / "checkpoint.pingckpt"));
  fs::remove_all(dir);
}

TEST_CASE("ablate emits one result group per value and seed") {
  const auto dir = scratch("ablate");
  const auto config = write_config(dir);
  const auto out_csv = dir / "alpha.csv";
  const auto r = run_cli({"ablate", "--config", config.string(), "--param", "alpha", "--values", "0,0.25,0.5,0.75,1",
                      "--seeds", "3", "--out", out_csv.string()});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("15 result groups") != std::string::npos);
  const auto rows = lines(slurp(out_csv));
  CHECK(rows[0] == "param,param_value,method,seed,split,metric,k,value");
  std::set<std::string> groups;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto first = rows[i].find(',');
    const auto third = rows[i].find(',', rows[i].find(',', first + 1) + 1);
    const auto fourth = rows[i].find(',', third + 1);
    groups.insert(rows[i].substr(first + 1, fourth - first - 1));
  }
  CHECK(groups.size() == 15);

  CHECK(run_cli({"ablate", "--config", config.string(), "--param", "beta", "--values", "1", "--out", out_csv.string()})
            .code == 2);
  fs::remove_all(dir);
}

TEST_CASE("extract writes a readable bank") {
  const auto dir = scratch("extract");
  const auto config = write_config(dir);
  const auto bank_path = dir / "text.pingfb";
  REQUIRE(run_cli({"extract", "--config", config.string(), "--modality", "text", "--out", bank_path.string()}).code == 0);
  const auto bank = read_bank(bank_path);
  CHECK(bank.modality() == Modality::kText);
  CHECK(bank.dim() == 5);
  CHECK(bank.size() == 72);
  CHECK(run_cli({"extract", "--config", config.string(), "--modality", "audio", "--out", bank_path.string()}).code == 2);
  fs::remove_all(dir);
}

TEST_CASE("error exits") {
  const auto dir = scratch("errors");
  const auto config = write_config(dir);
  const auto bad_method =
      run_cli({"train", "--config", config.string(), "--method", "clip-kd", "--seed", "1", "--out", (dir / "x").string()});
  CHECK(bad_method.code == 2);
  for (const char* m : {"clip", "clip-ping", "a-clip-ping", "clip-f", "clip-d"})
    CHECK(bad_method.err.find(m) != std::string::npos);
  CHECK(std::count(bad_method.err.begin(), bad_method.err.end(), '\n') == 1);

  const auto missing = run_cli({"train", "--config", (dir / "nope.json").string(), "--method", "clip", "--seed", "1",
                            "--out", (dir / "y").string()});
  CHECK(missing.code == 1);
  CHECK_FALSE(missing.err.empty());

  const auto typo = write_config(dir, R"({"epoch": 3})");
  CHECK(run_cli({"train", "--config", typo.string(), "--method", "clip", "--seed", "1", "--out", (dir / "z").string()})
            .code == 1);
  CHECK(run_cli({"frobnicate"}).code == 2);
  CHECK(run_cli({"eval", "--run", (dir / "missing").string(), "--split", "val"}).code == 1);
  CHECK(run_cli({"eval", "--run", (dir / "missing").string(), "--split", "holdout"}).code == 2);
  fs::remove_all(dir);
}
