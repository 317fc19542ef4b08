// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ping/matrix.hpp"
#include "ping/modality.hpp"
#include "ping/rng.hpp"

namespace ping {

class FeatureBank;

enum class UpdateStrategy { kFifo, kRandom };

struct SupportEntry {
  std::uint64_t sample_id = 0;
  std::vector<double> image_vector;
  std::vector<double> text_vector;
  /// Value of update_count() when the entry was inserted (0 for initial fill).
  std::uint64_t inserted_at = 0;

  std::span<const double> vector(Modality m) const noexcept {
    return m == Modality::kImage ? std::span<const double>(image_vector) : std::span<const double>(text_vector);
  }
};

/// Paired image/text support set: one slot holds both halves of a pair, so the
/// cross-modal partner of any neighbor is always available. Entries are kept
/// oldest first; ties in every retrieval go to the older entry.
class PairedSupportSet {
 public:
  PairedSupportSet(std::size_t capacity, std::size_t image_dim, std::size_t text_dim,
                   UpdateStrategy strategy = UpdateStrategy::kFifo, std::uint64_t seed = 0);

  /// min(capacity, |bank|) pairs drawn uniformly without replacement.
  static PairedSupportSet init_from_banks(const FeatureBank& image_bank, const FeatureBank& text_bank,
                                          std::size_t capacity, std::uint64_t seed,
                                          UpdateStrategy strategy = UpdateStrategy::kFifo);

  std::size_t size() const noexcept { return ids_.size(); }
  bool empty() const noexcept { return ids_.empty(); }
  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t dim(Modality m) const noexcept { return m == Modality::kImage ? image_dim_ : text_dim_; }
  UpdateStrategy strategy() const noexcept { return strategy_; }
  /// Number of update() calls so far.
  std::uint64_t update_count() const noexcept { return update_count_; }

  SupportEntry entry(std::size_t position) const;
  std::uint64_t id(std::size_t position) const { return ids_.at(position); }
  std::uint64_t inserted_at(std::size_t position) const { return stamps_.at(position); }
  std::span<const double> vector(std::size_t position, Modality m) const;
  /// All vectors of one modality, row-major, oldest first.
  std::span<const double> vectors(Modality m) const noexcept {
    return m == Modality::kImage ? std::span<const double>(image_) : std::span<const double>(text_);
  }
  std::vector<std::uint64_t> ids() const { return ids_; }

  /// Row i of `image` and `text` forms the pair for ids[i].
  void update(std::span<const std::uint64_t> ids, const Matrix& image, const Matrix& text);
  void update(std::span<const SupportEntry> entries);

  // Position-level retrieval (used by the trainer to avoid copies).
  std::size_t nn_position(std::span<const double> query, Modality m) const;
  std::vector<std::size_t> nn_positions(const Matrix& queries, Modality m) const;
  std::size_t topk_position(std::span<const double> query, Modality m, std::size_t k, Rng& rng) const;
  /// Positions of the k nearest entries, nearest first.
  std::vector<std::size_t> topk_positions(std::span<const double> query, Modality m, std::size_t k) const;

  /// Entry minimizing the L2 distance between its `m` half and `query`.
  SupportEntry nn_retrieve(std::span<const double> query, Modality m) const;
  /// One of the k nearest entries, uniformly; k = 1 is nn_retrieve and draws
  /// nothing from `rng`.
  SupportEntry topk_sample(std::span<const double> query, Modality m, std::size_t k, Rng& rng) const;
  /// Cross nearest neighbor: for target image, the entry whose TEXT half is
  /// nearest to the sample's text feature (its image half is the guidance);
  /// symmetric for target text.
  SupportEntry xnn_retrieve(std::span<const double> image_feature, std::span<const double> text_feature,
                            Modality target) const;

 private:
  void check_query(std::span<const double> query, Modality m) const;
  void append(std::uint64_t id, std::span<const double> image, std::span<const double> text);
  void overwrite(std::size_t position, std::uint64_t id, std::span<const double> image,
                 std::span<const double> text);

  std::size_t capacity_;
  std::size_t image_dim_;
  std::size_t text_dim_;
  UpdateStrategy strategy_;
  Rng rng_;
  std::uint64_t update_count_ = 0;
  std::vector<std::uint64_t> ids_;
  std::vector<std::uint64_t> stamps_;
  std::vector<double> image_;
  std::vector<double> text_;
};

}  // namespace ping
