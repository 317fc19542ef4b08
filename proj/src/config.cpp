// SPDX-License-Identifier: Apache-2.0
#include "ping/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <json.hpp>

#include "ping/errors.hpp"

namespace ping {
namespace {

using nlohmann::json;

struct Field {
  std::function<void(RunConfig&, const json&)> read;
  std::function<json(const RunConfig&)> write;
};

template <typename T>
T as(const json& v, const std::string& key) {
  try {
    if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
      if (!v.is_number_unsigned()) throw ConfigError("'" + key + "' must be a non-negative integer");
    } else if constexpr (std::is_same_v<T, double>) {
      if (!v.is_number()) throw ConfigError("'" + key + "' must be a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError("'" + key + "' must be a string");
    }
    return v.get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("'" + key + "': " + e.what());
  }
}

UpdateStrategy parse_update(const std::string& s) {
  if (s == "fifo") return UpdateStrategy::kFifo;
  if (s == "random") return UpdateStrategy::kRandom;
  throw ConfigError("update_strategy must be 'fifo' or 'random', got '" + s + "'");
}
const char* name_of(UpdateStrategy u) { return u == UpdateStrategy::kFifo ? "fifo" : "random"; }

ModalityMask parse_mask(const std::string& s) {
  if (s == "both") return ModalityMask::kBoth;
  if (s == "text_only") return ModalityMask::kTextOnly;
  if (s == "image_only") return ModalityMask::kImageOnly;
  throw ConfigError("modality_mask must be 'both', 'text_only' or 'image_only', got '" + s + "'");
}
const char* name_of(ModalityMask m) {
  switch (m) {
    case ModalityMask::kBoth: return "both";
    case ModalityMask::kTextOnly: return "text_only";
    case ModalityMask::kImageOnly: return "image_only";
  }
  return "?";
}

BankDtype parse_dtype(const std::string& s) {
  if (s == "f32") return BankDtype::kF32;
  if (s == "f64") return BankDtype::kF64;
  throw ConfigError("bank_dtype must be 'f32' or 'f64', got '" + s + "'");
}

#define PING_FIELD(key, member, type)                                                        \
  {key, Field{[](RunConfig& c, const json& v) { c.member = as<type>(v, key); },             \
              [](const RunConfig& c) { return json(c.member); }}}

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      {"method", Field{[](RunConfig& c, const json& v) { c.train.method = parse_method(as<std::string>(v, "method")); },
                       [](const RunConfig& c) { return json(to_string(c.train.method)); }}},
      PING_FIELD("seed", train.seed, std::uint64_t),
      PING_FIELD("epochs", train.epochs, std::size_t),
      PING_FIELD("warmup_epochs", train.warmup_epochs, std::size_t),
      PING_FIELD("batch_size", train.batch_size, std::size_t),
      PING_FIELD("lr_image", train.lr_image, double),
      PING_FIELD("lr_text", train.lr_text, double),
      {"lr_adapter",
       Field{[](RunConfig& c, const json& v) {
               if (v.is_null()) {
                 c.train.lr_adapter.reset();
               } else {
                 c.train.lr_adapter = as<double>(v, "lr_adapter");
               }
             },
             [](const RunConfig& c) { return c.train.lr_adapter ? json(*c.train.lr_adapter) : json(nullptr); }}},
      PING_FIELD("weight_decay", train.weight_decay, double),
      PING_FIELD("alpha", train.alpha, double),
      PING_FIELD("lambda", train.lambda, double),
      PING_FIELD("lambda_distill", train.lambda_distill, double),
      PING_FIELD("queue_size", train.queue_size, std::size_t),
      PING_FIELD("top_k", train.top_k, std::size_t),
      PING_FIELD("proj_dim", train.proj_dim, std::size_t),
      PING_FIELD("hidden_dim", train.hidden_dim, std::size_t),
      PING_FIELD("proj_hidden_dim", train.proj_hidden_dim, std::size_t),
      PING_FIELD("teacher_dim_image", train.teacher_dim_image, std::size_t),
      PING_FIELD("teacher_dim_text", train.teacher_dim_text, std::size_t),
      PING_FIELD("temperature_init", train.temperature_init, double),
      {"update_strategy",
       Field{[](RunConfig& c, const json& v) { c.train.update_strategy = parse_update(as<std::string>(v, "update_strategy")); },
             [](const RunConfig& c) { return json(name_of(c.train.update_strategy)); }}},
      {"modality_mask",
       Field{[](RunConfig& c, const json& v) { c.train.modality_mask = parse_mask(as<std::string>(v, "modality_mask")); },
             [](const RunConfig& c) { return json(name_of(c.train.modality_mask)); }}},
      PING_FIELD("augment_strength", train.augment_strength, double),
      {"bank_dtype",
       Field{[](RunConfig& c, const json& v) { c.train.bank_dtype = parse_dtype(as<std::string>(v, "bank_dtype")); },
             [](const RunConfig& c) { return json(c.train.bank_dtype == BankDtype::kF32 ? "f32" : "f64"); }}},
      PING_FIELD("num_classes", gen.num_classes, std::size_t),
      PING_FIELD("n_train", gen.n_train, std::size_t),
      PING_FIELD("n_val", gen.n_val, std::size_t),
      PING_FIELD("n_test", gen.n_test, std::size_t),
      PING_FIELD("d_latent", gen.d_latent, std::size_t),
      PING_FIELD("d_raw_image", gen.d_raw_image, std::size_t),
      PING_FIELD("d_raw_text", gen.d_raw_text, std::size_t),
      PING_FIELD("sigma_within", gen.sigma_within, double),
      PING_FIELD("sigma_view", gen.sigma_view, double),
      PING_FIELD("probe_epochs", probe.epochs, std::size_t),
      PING_FIELD("probe_batch_size", probe.batch_size, std::size_t),
      PING_FIELD("probe_lr", probe.lr, double),
  };
  return table;
}

#undef PING_FIELD

const Field* find_field(std::string_view key) {
  for (const auto& [name, field] : fields()) {
    if (name == key) return &field;
  }
  return nullptr;
}

void validate(const RunConfig& cfg) {
  cfg.train.validate();
  cfg.gen.validate();
  if (cfg.probe.epochs == 0 || cfg.probe.batch_size == 0 || !(cfg.probe.lr > 0.0)) {
    throw ConfigError("probe_epochs, probe_batch_size and probe_lr must be positive");
  }
}

}  // namespace

void RunConfig::set_seed(std::uint64_t seed) {
  train.seed = seed;
  gen.seed = seed;
  probe.seed = seed;
}

RunConfig parse_config(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig cfg;
  for (const auto& [key, value] : doc.items()) {
    const Field* f = find_field(key);
    if (f == nullptr) throw ConfigError("unknown config key '" + key + "'");
    f->read(cfg, value);
  }
  cfg.set_seed(cfg.train.seed);
  validate(cfg);
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot read config " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

std::string to_json(const RunConfig& cfg) {
  nlohmann::ordered_json doc;
  for (const auto& [name, field] : fields()) doc[name] = field.write(cfg);
  return doc.dump(2) + "\n";
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& [name, field] : fields()) out.push_back(name);
  return out;
}

void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value) {
  const Field* f = find_field(key);
  if (f == nullptr) throw ConfigError("unknown config key '" + std::string(key) + "'");
  json v;
  try {
    v = json::parse(value);
  } catch (const json::parse_error&) {
    v = std::string(value);  // bare words such as fifo / text_only
  }
  f->read(cfg, v);
  cfg.set_seed(cfg.train.seed);
  validate(cfg);
}

TeacherModel make_teacher(const RunConfig& cfg, Modality m) {
  const bool image = m == Modality::kImage;
  Rng rng = make_rng(cfg.seed(), image ? Stream::kImageTeacher : Stream::kTextTeacher);
  return TeacherModel(m, image ? cfg.gen.d_raw_image : cfg.gen.d_raw_text,
                      image ? cfg.train.teacher_dim_image : cfg.train.teacher_dim_text, rng());
}

Experiment prepare_experiment(const RunConfig& cfg) {
  PairedDataset data = generate_dataset(cfg.gen);
  TeacherModel ti = make_teacher(cfg, Modality::kImage);
  TeacherModel tt = make_teacher(cfg, Modality::kText);
  FeatureBank bi = extract_features(ti, data, Modality::kImage, cfg.train.bank_dtype);
  FeatureBank bt = extract_features(tt, data, Modality::kText, cfg.train.bank_dtype);
  return {std::move(data), std::move(ti), std::move(tt), std::move(bi), std::move(bt)};
}

TrainResult run_training(const RunConfig& cfg, const Experiment& exp, const TrainHooks& hooks) {
  const GuidanceSources sources{&exp.image_bank, &exp.text_bank, &exp.image_teacher, &exp.text_teacher};
  return train(cfg.train, exp.data, sources, hooks);
}

}  // namespace ping
