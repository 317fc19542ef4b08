// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "ping/matrix.hpp"
#include "ping/modality.hpp"
#include "ping/rng.hpp"

namespace ping {

struct GenConfig {
  std::size_t num_classes = 20;
  std::size_t n_train = 5000;
  std::size_t n_val = 500;
  std::size_t n_test = 500;
  std::size_t d_latent = 16;
  std::size_t d_raw_image = 48;
  std::size_t d_raw_text = 40;
  double sigma_within = 0.3;
  double sigma_view = 0.2;
  std::uint64_t seed = 0;

  /// Throws ConfigError on non-positive counts or negative sigmas.
  void validate() const;
};

enum class Split : std::uint8_t { kTrain = 0, kVal = 1, kTest = 2 };

const char* to_string(Split s) noexcept;

struct SampleInfo {
  std::uint64_t id = 0;
  std::uint32_t class_id = 0;
  Split split = Split::kTrain;
};

/// Two-view dataset with latent class structure. Row k of the raw matrices
/// belongs to samples[k], and samples[k].id == k.
struct PairedDataset {
  std::size_t num_classes = 0;
  std::vector<SampleInfo> samples;
  Matrix image_raw;
  Matrix text_raw;
  /// Noiseless views of each class center (row c is class c).
  Matrix class_image_views;
  Matrix class_text_views;

  std::size_t size() const noexcept { return samples.size(); }
  const Matrix& raw(Modality m) const noexcept { return m == Modality::kImage ? image_raw : text_raw; }
  const Matrix& class_views(Modality m) const noexcept {
    return m == Modality::kImage ? class_image_views : class_text_views;
  }
  std::vector<std::size_t> indices(Split split) const;
  std::vector<std::uint32_t> labels(std::span<const std::size_t> indices) const;
};

/// Class centers ~ N(0, I); latent u = center + sigma_within * eps; each view is
/// a fixed random projection of u plus sigma_view noise. Classes are balanced
/// within each split (sample i of a split has class i mod C).
PairedDataset generate_dataset(const GenConfig& cfg);

/// Gaussian noise of standard deviation `strength` plus zero-masking of each
/// coordinate with probability min(0.9, strength / 4). strength 0 is the
/// identity and draws nothing from `rng`.
Matrix augment(const Matrix& raw, double strength, Rng& rng);
std::vector<double> augment(std::span<const double> view, double strength, Rng& rng);

/// PINGDATA dump (raw views stored as f32).
void write_dataset(const std::filesystem::path& path, const PairedDataset& data);
PairedDataset read_dataset(const std::filesystem::path& path);

}  // namespace ping
