// SPDX-License-Identifier: Apache-2.0
#include "cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ping/checkpoint.hpp"
#include "ping/config.hpp"
#include "ping/errors.hpp"
#include "ping/evaluation.hpp"

namespace ping::cli {
namespace fs = std::filesystem;
namespace {

// Thrown for argument problems that should exit with kUsage.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

constexpr const char* kMetricsHeader = "method,seed,split,metric,k,value";
constexpr const char* kAblationHeader = "param,param_value,method,seed,split,metric,k,value";

const std::map<std::string, std::string>& ablation_keys() {
  static const std::map<std::string, std::string> keys = {
      {"alpha", "alpha"},       {"lambda", "lambda"},     {"queue", "queue_size"}, {"topk", "top_k"},
      {"proj_dim", "proj_dim"}, {"update", "update_strategy"}, {"mask", "modality_mask"}};
  return keys;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string read_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw Error("cannot read " + p.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& bytes) {
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot write " + p.string());
  os << bytes;
}

Method method_or_usage(const std::string& name) {
  try {
    return parse_method(name);
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
}

Split split_or_usage(const std::string& name) {
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  if (name == "train") return Split::kTrain;
  throw UsageError("unknown split '" + name + "' (supported: val, test)");
}

std::vector<std::size_t> parse_ks(const std::string& s) {
  std::vector<std::size_t> ks;
  for (const auto& item : split_list(s)) {
    try {
      std::size_t used = 0;
      const long long k = std::stoll(item, &used);
      if (used != item.size() || k < 1) throw std::invalid_argument(item);
      ks.push_back(static_cast<std::size_t>(k));
    } catch (const std::exception&) {
      throw UsageError("--k expects a comma-separated list of positive integers");
    }
  }
  if (ks.empty()) throw UsageError("--k needs at least one value");
  return ks;
}

// CSV numbers are written with round-trip precision; fields never contain commas.
std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

struct RunPaths {
  fs::path dir;
  fs::path config() const { return dir / "config.json"; }
  fs::path manifest() const { return dir / "manifest.json"; }
  fs::path checkpoint() const { return dir / "checkpoint.pingckpt"; }
  fs::path runlog() const { return dir / "runlog.csv"; }
  fs::path metrics() const { return dir / "metrics.csv"; }
  fs::path bank(Modality m) const { return dir / (std::string("bank_") + std::string(to_string(m)) + ".pingfb"); }
};

int cmd_extract(const std::string& config_path, const std::string& modality, const std::string& out_path,
                std::optional<std::uint64_t> seed, std::ostream& out) {
  RunConfig cfg = load_config(config_path);
  if (seed) cfg.set_seed(*seed);
  Modality m;
  if (modality == "image") {
    m = Modality::kImage;
  } else if (modality == "text") {
    m = Modality::kText;
  } else {
    throw UsageError("--modality must be image or text");
  }
  const PairedDataset data = generate_dataset(cfg.gen);
  const FeatureBank bank = extract_features(make_teacher(cfg, m), data, m, cfg.train.bank_dtype);
  write_bank(out_path, bank);
  out << "wrote " << bank.size() << " x " << bank.dim() << " " << to_string(m) << " features to " << out_path << '\n';
  return kOk;
}

int cmd_train(const std::string& config_path, const std::string& method, std::optional<std::uint64_t> seed,
              const std::string& out_dir, std::ostream& out) {
  const Method m = method_or_usage(method);
  const std::string config_bytes = read_file(config_path);
  RunConfig cfg = parse_config(config_bytes);
  cfg.train.method = m;
  if (seed) cfg.set_seed(*seed);

  const RunPaths paths{out_dir};
  fs::create_directories(paths.dir);
  const Experiment exp = prepare_experiment(cfg);
  write_bank(paths.bank(Modality::kImage), exp.image_bank);
  write_bank(paths.bank(Modality::kText), exp.text_bank);
  const TrainResult result = run_training(cfg, exp);
  write_checkpoint(paths.checkpoint(), snapshot(result.model));
  result.log.write_csv(paths.runlog());
  write_file(paths.config(), config_bytes);

  nlohmann::ordered_json manifest;
  manifest["tool_version"] = kToolVersion;
  manifest["method"] = to_string(m);
  manifest["seed"] = cfg.seed();
  manifest["config_source"] = fs::absolute(config_path).string();
  manifest["config_snapshot"] = paths.config().filename().string();
  manifest["resolved_config"] = nlohmann::ordered_json::parse(to_json(cfg));
  manifest["artifacts"] = {{"bank_image", paths.bank(Modality::kImage).filename().string()},
                           {"bank_text", paths.bank(Modality::kText).filename().string()},
                           {"checkpoint", paths.checkpoint().filename().string()},
                           {"runlog", paths.runlog().filename().string()},
                           {"metrics", paths.metrics().filename().string()}};
  write_file(paths.manifest(), manifest.dump(2) + "\n");

  const auto& last = result.log.epochs.empty() ? EpochRecord{} : result.log.epochs.back();
  out << to_string(m) << " seed " << cfg.seed() << ": " << result.log.epochs.size() << " epochs, final loss "
      << last.loss_total << ", 1/tau " << last.inv_tau << " -> " << paths.dir.string() << '\n';
  return kOk;
}

// Config of a finished run: the snapshot plus the method/seed overrides.
RunConfig run_config(const RunPaths& paths) {
  const auto manifest = nlohmann::json::parse(read_file(paths.manifest()));
  RunConfig cfg = parse_config(read_file(paths.config()));
  cfg.train.method = parse_method(manifest.at("method").get<std::string>());
  cfg.set_seed(manifest.at("seed").get<std::uint64_t>());
  return cfg;
}

int cmd_eval(const std::string& run_dir, const std::string& split_name, const std::string& ks_text, std::ostream& out) {
  const Split split = split_or_usage(split_name);
  const auto ks = parse_ks(ks_text);
  const RunPaths paths{run_dir};
  const RunConfig cfg = run_config(paths);
  const PairedDataset data = generate_dataset(cfg.gen);
  TrainedModel model = init_model(cfg.train, data.image_raw.cols(), data.text_raw.cols());
  restore(read_checkpoint(paths.checkpoint()), model);
  const auto rows = evaluate(model, data, split, ks, cfg.probe);

  const bool fresh = !fs::exists(paths.metrics());
  std::ofstream os(paths.metrics(), std::ios::app);
  if (!os) throw Error("cannot write " + paths.metrics().string());
  if (fresh) os << kMetricsHeader << '\n';
  for (const auto& r : rows) {
    const std::string line = std::string(to_string(cfg.train.method)) + ',' + std::to_string(cfg.seed()) + ',' +
                             r.split + ',' + r.metric + ',' + std::to_string(r.k) + ',' + fmt(r.value);
    os << line << '\n';
    out << line << '\n';
  }
  return kOk;
}

int cmd_ablate(const std::string& config_path, const std::string& param, const std::string& values_text,
               std::size_t seeds, const std::string& out_csv, const std::string& method, const std::string& split_name,
               bool probe, std::ostream& out) {
  const auto it = ablation_keys().find(param);
  if (it == ablation_keys().end()) {
    throw UsageError("unknown ablation parameter '" + param + "' (supported: alpha, lambda, queue, topk, proj_dim, update, mask)");
  }
  const Method m = method_or_usage(method);
  const Split split = split_or_usage(split_name);
  const auto values = split_list(values_text);
  if (values.empty()) throw UsageError("--values needs at least one entry");
  if (seeds == 0) throw UsageError("--seeds must be at least 1");
  RunConfig base = load_config(config_path);
  base.train.method = m;

  std::ofstream os(out_csv, std::ios::trunc);
  if (!os) throw Error("cannot write " + out_csv);
  os << kAblationHeader << '\n';
  const std::size_t ks[] = {1, 5, 10};
  std::size_t groups = 0;
  for (const auto& value : values) {
    for (std::size_t s = 0; s < seeds; ++s) {
      RunConfig cfg = base;
      set_config_value(cfg, it->second, value);
      cfg.set_seed(base.seed() + s);
      const Experiment exp = prepare_experiment(cfg);
      const TrainResult result = run_training(cfg, exp);
      for (const auto& r : evaluate(result.model, exp.data, split, ks, cfg.probe, probe)) {
        os << param << ',' << value << ',' << to_string(m) << ',' << cfg.seed() << ',' << r.split << ',' << r.metric
           << ',' << r.k << ',' << fmt(r.value) << '\n';
      }
      ++groups;
      out << param << "=" << value << " seed " << cfg.seed() << " done\n";
    }
  }
  out << groups << " result groups written to " << out_csv << '\n';
  return kOk;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"CLIP-PING trainer: contrastive language-image training with nearest-neighbor guidance", "clip_ping"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  std::string config, modality, out_path, method, run_dir, split = "test", ks = "1,5,10", param, values;
  std::string ablate_method = "clip-ping";
  std::optional<std::uint64_t> seed;
  std::size_t seeds = 1;
  bool probe = false;

  auto* extract = app.add_subcommand("extract", "extract frozen teacher features into a .pingfb bank");
  extract->add_option("--config", config, "run config (JSON)")->required();
  extract->add_option("--modality", modality, "image or text")->required();
  extract->add_option("--out", out_path, "output bank path")->required();
  extract->add_option("--seed", seed, "override the config seed");

  auto* train = app.add_subcommand("train", "train one method and write a run directory");
  train->add_option("--config", config, "run config (JSON)")->required();
  train->add_option("--method", method, "clip | clip-ping | a-clip-ping | clip-f | clip-d")->required();
  train->add_option("--seed", seed, "override the config seed");
  train->add_option("--out", out_path, "run directory")->required();

  auto* eval = app.add_subcommand("eval", "evaluate a run directory");
  eval->add_option("--run", run_dir, "run directory written by train")->required();
  eval->add_option("--split", split, "val or test")->required();
  eval->add_option("--k", ks, "comma-separated recall cutoffs");

  auto* ablate = app.add_subcommand("ablate", "sweep one hyperparameter over several seeds");
  ablate->add_option("--config", config, "base run config (JSON)")->required();
  ablate->add_option("--param", param, "alpha | lambda | queue | topk | proj_dim | update | mask")->required();
  ablate->add_option("--values", values, "comma-separated values")->required();
  ablate->add_option("--seeds", seeds, "number of seeds per value");
  ablate->add_option("--out", out_path, "output CSV")->required();
  ablate->add_option("--method", ablate_method, "method to sweep (default clip-ping)");
  ablate->add_option("--split", split, "evaluation split (default test)");
  ablate->add_flag("--probe", probe, "also train a linear probe per run");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForVersion&) {
    out << kToolVersion << '\n';
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }

  try {
    if (*extract) return cmd_extract(config, modality, out_path, seed, out);
    if (*train) return cmd_train(config, method, seed, out_path, out);
    if (*eval) return cmd_eval(run_dir, split, ks, out);
    if (*ablate) return cmd_ablate(config, param, values, seeds, out_path, ablate_method, split, probe, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kUsage;
}

}  // namespace ping::cli
