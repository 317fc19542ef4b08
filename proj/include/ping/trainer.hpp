// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ping/feature_bank.hpp"
#include "ping/models.hpp"
#include "ping/objectives.hpp"
#include "ping/support_set.hpp"

namespace ping {

struct PairedDataset;

enum class Method { kClip, kClipPing, kAClipPing, kClipF, kClipD };

const char* to_string(Method m) noexcept;
/// Throws ConfigError naming the supported methods.
Method parse_method(std::string_view name);

inline bool uses_support_set(Method m) noexcept { return m == Method::kClipPing || m == Method::kAClipPing; }
inline bool uses_live_teachers(Method m) noexcept { return m == Method::kAClipPing || m == Method::kClipD; }
inline bool uses_guidance(Method m) noexcept { return m != Method::kClip; }

struct TrainConfig {
  Method method = Method::kClipPing;
  std::size_t epochs = 35;
  std::size_t warmup_epochs = 5;
  std::size_t batch_size = 1024;
  double lr_image = 3e-3;
  double lr_text = 1e-3;
  /// Learning rate of the adapters and the temperature; lr_text when unset.
  std::optional<double> lr_adapter;
  double weight_decay = 1e-5;
  double alpha = 0.25;
  double lambda = 0.6;
  double lambda_distill = 0.75;
  std::size_t queue_size = 32768;
  std::size_t top_k = 1;
  std::size_t proj_dim = 256;
  std::size_t hidden_dim = 128;
  std::size_t proj_hidden_dim = 128;
  std::size_t teacher_dim_image = 64;
  std::size_t teacher_dim_text = 48;
  double temperature_init = 0.07;
  UpdateStrategy update_strategy = UpdateStrategy::kFifo;
  ModalityMask modality_mask = ModalityMask::kBoth;
  double augment_strength = 0.25;
  BankDtype bank_dtype = BankDtype::kF32;
  std::uint64_t seed = 0;

  /// Desk-scale profile: batch 256, |Q| = 2048, d = 32, 30 epochs.
  static TrainConfig desk_profile();

  double adapter_lr() const noexcept { return lr_adapter.value_or(lr_text); }
  LossWeights loss_weights() const { return {alpha, lambda, modality_mask}; }
  /// Throws ConfigError on inconsistent values.
  void validate() const;
};

/// Learned state of a run.
struct TrainedModel {
  StudentEncoder image;
  StudentEncoder text;
  AdapterPair adapters;
  TemperatureParam temperature;
};

/// Fresh, seed-initialized model for a config and dataset dimensions.
TrainedModel init_model(const TrainConfig& cfg, std::size_t raw_image_dim, std::size_t raw_text_dim);

struct EpochRecord {
  std::size_t epoch = 0;
  double lr_image = 0.0;
  double lr_text = 0.0;
  double loss_total = 0.0;
  double loss_clip = 0.0;
  double loss_nn = 0.0;
  double loss_xnn = 0.0;
  double inv_tau = 0.0;
  double seconds = 0.0;
};

struct RunLog {
  std::vector<EpochRecord> epochs;

  static constexpr const char* kCsvHeader = "epoch,lr_image,lr_text,loss_total,loss_clip,loss_nn,loss_xnn,inv_tau,seconds";
  std::string to_csv() const;
  void write_csv(const std::filesystem::path& path) const;
};

struct TrainResult {
  TrainedModel model;
  RunLog log;
};

/// Frozen guidance sources. Bank-driven methods (clip-ping, clip-f) need the
/// banks; live-teacher methods (a-clip-ping, clip-d) need the teachers.
struct GuidanceSources {
  const FeatureBank* image_bank = nullptr;
  const FeatureBank* text_bank = nullptr;
  const TeacherModel* image_teacher = nullptr;
  const TeacherModel* text_teacher = nullptr;
};

/// Per-step observation point for tests and instrumentation.
struct StepProbe {
  std::size_t global_step = 0;
  /// support set update_count() before this step's update
  std::uint64_t updates_before = 0;
  /// inserted_at stamps of every entry retrieved in this step
  std::vector<std::uint64_t> retrieved_stamps;
  std::vector<std::uint64_t> batch_ids;
  double loss = 0.0;
  double inv_tau = 0.0;
};

struct TrainHooks {
  std::function<void(const StepProbe&)> on_step;
};

/// Throws ConfigError when the method's guidance sources are missing.
TrainResult train(const TrainConfig& cfg, const PairedDataset& dataset, const GuidanceSources& sources,
                  const TrainHooks& hooks = {});

/// Epoch permutation of `ids` under a seed-determined generator.
std::vector<std::size_t> shuffled(std::span<const std::size_t> ids, Rng& rng);

}  // namespace ping
