// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "ping/evaluation.hpp"
#include "ping/feature_bank.hpp"
#include "ping/models.hpp"
#include "ping/synthetic_data.hpp"
#include "ping/trainer.hpp"

namespace ping {

/// Everything a run needs. One `seed` drives the dataset, teachers, students,
/// shuffling, augmentation and the probe through independent streams.
struct RunConfig {
  TrainConfig train = TrainConfig::desk_profile();
  GenConfig gen;
  ProbeConfig probe;

  void set_seed(std::uint64_t seed);
  std::uint64_t seed() const noexcept { return train.seed; }
};

/// Flat JSON object; keys are the snake_case field names documented in
/// README.md. Unknown keys, wrong types and invalid values are ConfigErrors.
/// Missing keys keep the desk-profile defaults.
RunConfig parse_config(std::string_view json_text);
RunConfig load_config(const std::filesystem::path& path);
/// Every key, in documentation order.
std::string to_json(const RunConfig& cfg);
std::vector<std::string> config_keys();

/// Apply one `key = value` override given as text (used by ablation sweeps).
void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value);

/// Dataset, teachers and their frozen banks for one config.
struct Experiment {
  PairedDataset data;
  TeacherModel image_teacher;
  TeacherModel text_teacher;
  FeatureBank image_bank;
  FeatureBank text_bank;
};

TeacherModel make_teacher(const RunConfig& cfg, Modality m);
Experiment prepare_experiment(const RunConfig& cfg);
TrainResult run_training(const RunConfig& cfg, const Experiment& exp, const TrainHooks& hooks = {});

}  // namespace ping
