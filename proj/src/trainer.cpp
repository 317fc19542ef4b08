// SPDX-License-Identifier: Apache-2.0
#include "ping/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ping/errors.hpp"
#include "ping/optimizer.hpp"
#include "ping/synthetic_data.hpp"

namespace ping {
namespace {

std::uint64_t derive_seed(std::uint64_t seed, Stream stream) { return make_rng(seed, stream)(); }

void push_slots(std::vector<ParamSlot>& slots, std::vector<std::span<double>> params,
                const std::vector<std::span<const double>>& grads, double lr, double wd) {
  for (std::size_t i = 0; i < params.size(); ++i) slots.push_back({params[i], grads[i], lr, wd});
}

std::vector<std::span<const double>> dense_views(const Dense& d) { return {d.weight.values(), d.bias}; }

// Running sums for one epoch's log record.
struct EpochAccumulator {
  double total = 0.0, clip = 0.0, nn = 0.0, xnn = 0.0;
  std::size_t steps = 0;

  void add(const LossResult& r) {
    total += r.value;
    clip += r.components.clip;
    nn += r.components.nn;
    xnn += r.components.xnn;
    ++steps;
  }
};

}  // namespace

const char* to_string(Method m) noexcept {
  switch (m) {
    case Method::kClip: return "clip";
    case Method::kClipPing: return "clip-ping";
    case Method::kAClipPing: return "a-clip-ping";
    case Method::kClipF: return "clip-f";
    case Method::kClipD: return "clip-d";
  }
  return "?";
}

Method parse_method(std::string_view name) {
  for (Method m : {Method::kClip, Method::kClipPing, Method::kAClipPing, Method::kClipF, Method::kClipD}) {
    if (name == to_string(m)) return m;
  }
  throw ConfigError("unknown method '" + std::string(name) +
                    "' (supported: clip, clip-ping, a-clip-ping, clip-f, clip-d)");
}

TrainConfig TrainConfig::desk_profile() {
  TrainConfig c;
  c.epochs = 30;
  c.batch_size = 256;
  c.queue_size = 2048;
  c.proj_dim = 32;
  c.hidden_dim = 64;
  c.proj_hidden_dim = 64;
  return c;
}

void TrainConfig::validate() const {
  if (warmup_epochs > epochs) throw ConfigError("warmup_epochs must not exceed epochs");
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  if (!(lr_image > 0.0) || !(lr_text > 0.0) || !(adapter_lr() > 0.0)) throw ConfigError("learning rates must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
  loss_weights().validate();
  if (!(lambda_distill >= 0.0 && lambda_distill <= 1.0)) throw ConfigError("lambda_distill must lie in [0, 1]");
  if (queue_size == 0) throw ConfigError("queue_size must be at least 1");
  if (top_k == 0) throw ConfigError("top_k must be at least 1");
  if (proj_dim == 0 || hidden_dim == 0 || proj_hidden_dim == 0 || teacher_dim_image == 0 || teacher_dim_text == 0) {
    throw ConfigError("model dimensions must be positive");
  }
  if (!(temperature_init > 0.0) || 1.0 / temperature_init > TemperatureParam::kMaxInvTau) {
    throw ConfigError("temperature_init must satisfy 1/tau in (0, 100]");
  }
  if (!(augment_strength >= 0.0)) throw ConfigError("augment_strength must be non-negative");
}

TrainedModel init_model(const TrainConfig& cfg, std::size_t raw_image_dim, std::size_t raw_text_dim) {
  const StudentDims img{raw_image_dim, cfg.hidden_dim, cfg.proj_hidden_dim, cfg.proj_dim};
  const StudentDims txt{raw_text_dim, cfg.hidden_dim, cfg.proj_hidden_dim, cfg.proj_dim};
  Rng adapter_rng = make_rng(cfg.seed, Stream::kAdapters);
  const std::uint64_t adapter_image_seed = adapter_rng();
  const std::uint64_t adapter_text_seed = adapter_rng();
  return {StudentEncoder(Modality::kImage, img, derive_seed(cfg.seed, Stream::kImageStudent)),
          StudentEncoder(Modality::kText, txt, derive_seed(cfg.seed, Stream::kTextStudent)),
          {Adapter(Modality::kImage, cfg.teacher_dim_image, cfg.proj_dim, adapter_image_seed),
           Adapter(Modality::kText, cfg.teacher_dim_text, cfg.proj_dim, adapter_text_seed)},
          TemperatureParam::from_tau(cfg.temperature_init)};
}

std::string RunLog::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << kCsvHeader << '\n';
  for (const auto& r : epochs) {
    os << r.epoch << ',' << r.lr_image << ',' << r.lr_text << ',' << r.loss_total << ',' << r.loss_clip << ','
       << r.loss_nn << ',' << r.loss_xnn << ',' << r.inv_tau << ',' << r.seconds << '\n';
  }
  return os.str();
}

void RunLog::write_csv(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  os << to_csv();
}

std::vector<std::size_t> shuffled(std::span<const std::size_t> ids, Rng& rng) {
  std::vector<std::size_t> out(ids.begin(), ids.end());
  for (std::size_t i = out.size(); i > 1; --i) std::swap(out[i - 1], out[uniform_index(rng, i)]);
  return out;
}

TrainResult train(const TrainConfig& cfg, const PairedDataset& dataset, const GuidanceSources& sources,
                  const TrainHooks& hooks) {
  cfg.validate();
  const Method method = cfg.method;
  const bool need_banks = method == Method::kClipPing || method == Method::kClipF;
  const bool need_teachers = uses_live_teachers(method);
  if (need_banks && (sources.image_bank == nullptr || sources.text_bank == nullptr)) {
    throw ConfigError(std::string(to_string(method)) + " needs image and text feature banks");
  }
  if (need_teachers && (sources.image_teacher == nullptr || sources.text_teacher == nullptr)) {
    throw ConfigError(std::string(to_string(method)) + " needs image and text teacher models");
  }

  const auto train_rows = dataset.indices(Split::kTrain);
  if (train_rows.empty()) throw EmptyInputError("dataset has no training samples");

  TrainResult result{init_model(cfg, dataset.image_raw.cols(), dataset.text_raw.cols()), {}};
  TrainedModel& model = result.model;

  // Banks for the support set: given ones, or extracted from the live
  // teachers on the clean views.
  std::optional<FeatureBank> own_image_bank, own_text_bank;
  const FeatureBank* image_bank = sources.image_bank;
  const FeatureBank* text_bank = sources.text_bank;
  if (method == Method::kAClipPing && (image_bank == nullptr || text_bank == nullptr)) {
    own_image_bank = extract_features(*sources.image_teacher, dataset, Modality::kImage, cfg.bank_dtype);
    own_text_bank = extract_features(*sources.text_teacher, dataset, Modality::kText, cfg.bank_dtype);
    image_bank = &*own_image_bank;
    text_bank = &*own_text_bank;
  }
  if (uses_guidance(method)) {
    const std::size_t di = need_teachers ? sources.image_teacher->feature_dim() : image_bank->dim();
    const std::size_t dt = need_teachers ? sources.text_teacher->feature_dim() : text_bank->dim();
    if (di != cfg.teacher_dim_image || dt != cfg.teacher_dim_text) {
      throw ConfigError("teacher feature dims do not match teacher_dim_image/teacher_dim_text");
    }
  }

  std::optional<PairedSupportSet> support;
  if (uses_support_set(method)) {
    // The training split's pairs seed the queue.
    std::vector<std::uint64_t> train_ids;
    for (std::size_t r : train_rows) train_ids.push_back(dataset.samples[r].id);
    const FeatureBank img(Modality::kImage, train_ids, image_bank->gather(train_ids), image_bank->dtype());
    const FeatureBank txt(Modality::kText, train_ids, text_bank->gather(train_ids), text_bank->dtype());
    support = PairedSupportSet::init_from_banks(img, txt, cfg.queue_size, derive_seed(cfg.seed, Stream::kSupportSet),
                                                cfg.update_strategy);
  }

  Rng shuffle_rng = make_rng(cfg.seed, Stream::kShuffle);
  Rng augment_rng = make_rng(cfg.seed, Stream::kAugment);
  Rng topk_rng = make_rng(cfg.seed ^ 0x9e3779b97f4a7c15ull, Stream::kSupportSet);

  const std::size_t steps_per_epoch = (train_rows.size() + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total_steps = steps_per_epoch * cfg.epochs;
  const std::size_t warmup_steps = steps_per_epoch * cfg.warmup_epochs;
  const LossWeights weights = cfg.loss_weights();

  OptimizerState opt;
  std::size_t global_step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto order = shuffled(train_rows, shuffle_rng);
    EpochAccumulator acc;
    double lr_i = 0.0, lr_t = 0.0;

    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++global_step) {
      const std::span<const std::size_t> rows(order.data() + start, std::min(cfg.batch_size, order.size() - start));
      std::vector<std::uint64_t> ids;
      ids.reserve(rows.size());
      for (std::size_t r : rows) ids.push_back(dataset.samples[r].id);

      const Matrix view_image = augment(gather_rows(dataset.image_raw, rows), cfg.augment_strength, augment_rng);
      const Matrix view_text = augment(gather_rows(dataset.text_raw, rows), cfg.augment_strength, augment_rng);
      const StudentForward fi = model.image.forward(view_image);
      const StudentForward ft = model.text.forward(view_text);

      FrozenPairs frozen;
      if (need_teachers) {
        frozen.image = sources.image_teacher->forward(view_image);
        frozen.text = sources.text_teacher->forward(view_text);
        round_to_dtype(frozen.image.values(), cfg.bank_dtype);
        round_to_dtype(frozen.text.values(), cfg.bank_dtype);
      } else if (need_banks) {
        frozen.image = sources.image_bank->gather(ids);
        frozen.text = sources.text_bank->gather(ids);
      }

      StepProbe probe;
      LossResult loss;
      switch (method) {
        case Method::kClip:
          loss = clip_loss(fi.embeddings, ft.embeddings, model.temperature);
          break;
        case Method::kClipF:
        case Method::kClipD:
          loss = distill_loss(frozen, fi.embeddings, ft.embeddings, model.adapters, model.temperature,
                              cfg.lambda_distill);
          break;
        case Method::kClipPing:
        case Method::kAClipPing: {
          // Retrieve before this step's queue update.
          const NeighborPositions pos = retrieve_neighbors(frozen, *support, cfg.top_k, &topk_rng);
          if (hooks.on_step) {
            probe.updates_before = support->update_count();
            for (std::size_t p : pos.image) probe.retrieved_stamps.push_back(support->inserted_at(p));
            for (std::size_t p : pos.text) probe.retrieved_stamps.push_back(support->inserted_at(p));
          }
          const FrozenPairs g_nn = nn_guidance(pos, *support);
          const FrozenPairs g_xnn = xnn_guidance(pos, *support);
          LossResult nn = guided_supervision_loss(g_nn.image, g_nn.text, fi.embeddings, ft.embeddings,
                                                  model.adapters, model.temperature, weights.mask);
          nn.components.nn = nn.value;
          LossResult xnn = guided_supervision_loss(g_xnn.image, g_xnn.text, fi.embeddings, ft.embeddings,
                                                   model.adapters, model.temperature, weights.mask);
          xnn.components.xnn = xnn.value;
          loss = clip_ping_loss(clip_loss(fi.embeddings, ft.embeddings, model.temperature),
                                ping_loss(nn, xnn, weights.alpha), weights.lambda);
          break;
        }
      }
      if (!std::isfinite(loss.value)) throw NumericalInputError("training loss became non-finite");

      const StudentGrads gi = model.image.backward(fi.cache, loss.grad_image);
      const StudentGrads gt = model.text.backward(ft.cache, loss.grad_text);

      lr_i = lr_at(global_step, total_steps, warmup_steps, cfg.lr_image);
      lr_t = lr_at(global_step, total_steps, warmup_steps, cfg.lr_text);
      const double lr_a = lr_at(global_step, total_steps, warmup_steps, cfg.adapter_lr());

      const Dense zero_ai = model.adapters.image.zero_grads();
      const Dense zero_at = model.adapters.text.zero_grads();
      const Dense& ga_i = loss.grad_adapter_image.weight.empty() ? zero_ai : loss.grad_adapter_image;
      const Dense& ga_t = loss.grad_adapter_text.weight.empty() ? zero_at : loss.grad_adapter_text;
      const double grad_temp = loss.grad_log_inv_tau;

      std::vector<ParamSlot> slots;
      push_slots(slots, model.image.parameters(), gi.parameters(), lr_i, cfg.weight_decay);
      push_slots(slots, model.text.parameters(), gt.parameters(), lr_t, cfg.weight_decay);
      push_slots(slots, model.adapters.image.parameters(), dense_views(ga_i), lr_a, cfg.weight_decay);
      push_slots(slots, model.adapters.text.parameters(), dense_views(ga_t), lr_a, cfg.weight_decay);
      slots.push_back({std::span<double>(&model.temperature.log_inv_tau, 1), std::span<const double>(&grad_temp, 1),
                       lr_a, 0.0});
      adamw_step(opt, slots);
      model.temperature.clamp();

      if (support) support->update(ids, frozen.image, frozen.text);

      acc.add(loss);
      if (hooks.on_step) {
        probe.global_step = global_step;
        probe.batch_ids = ids;
        probe.loss = loss.value;
        probe.inv_tau = model.temperature.inv_tau();
        hooks.on_step(probe);
      }
    }

    const double n = static_cast<double>(acc.steps);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.epochs.push_back({epoch + 1, lr_i, lr_t, acc.total / n, acc.clip / n, acc.nn / n, acc.xnn / n,
                                 model.temperature.inv_tau(), seconds});
  }
  return result;
}

}  // namespace ping
