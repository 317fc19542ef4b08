// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "ping/matrix.hpp"
#include "ping/modality.hpp"

namespace ping {

class TeacherModel;
struct PairedDataset;

enum class BankDtype : std::uint32_t { kF32 = 0, kF64 = 1 };

/// Round every value to what `dtype` can store.
void round_to_dtype(std::span<double> values, BankDtype dtype);

struct FrozenFeature {
  std::uint64_t sample_id = 0;
  std::vector<double> vector;
};

/// Frozen teacher features keyed by sample id. Values are held in double
/// precision but rounded to the storage dtype at construction, so the
/// in-memory bank is exactly what a write/read roundtrip yields.
class FeatureBank {
 public:
  FeatureBank() = default;
  /// `features` row i belongs to `ids[i]`; ids need not be sorted but must be
  /// unique.
  FeatureBank(Modality modality, std::span<const std::uint64_t> ids, const Matrix& features,
              BankDtype dtype = BankDtype::kF32);

  Modality modality() const noexcept { return modality_; }
  std::size_t dim() const noexcept { return values_.cols(); }
  std::size_t size() const noexcept { return ids_.size(); }
  BankDtype dtype() const noexcept { return dtype_; }

  /// Ascending sample ids.
  std::span<const std::uint64_t> ids() const noexcept { return ids_; }
  /// Row i corresponds to ids()[i].
  const Matrix& values() const noexcept { return values_; }

  bool contains(std::uint64_t id) const noexcept;
  /// Throws NotFoundError for an absent id.
  std::span<const double> vector(std::uint64_t id) const;
  FrozenFeature lookup(std::uint64_t id) const;
  /// Rows for each id in order.
  Matrix gather(std::span<const std::uint64_t> ids) const;

  friend bool operator==(const FeatureBank&, const FeatureBank&) = default;

 private:
  std::size_t position(std::uint64_t id) const;

  Modality modality_ = Modality::kImage;
  BankDtype dtype_ = BankDtype::kF32;
  std::vector<std::uint64_t> ids_;
  Matrix values_;
};

/// Teacher features of every dataset sample, computed on the unaugmented view.
FeatureBank extract_features(const TeacherModel& teacher, const PairedDataset& dataset, Modality modality,
                             BankDtype dtype = BankDtype::kF32);

/// .pingfb layout, little-endian:
///   "PINGBANK" | version u32 = 1 | modality u8 | 3 zero bytes | count u64 |
///   dim u32 | dtype u32 | count x (sample_id u64, dim values)
/// Records are sorted by ascending id.
void write_bank(const std::filesystem::path& path, const FeatureBank& bank);
/// Throws FormatError on bad magic/version/dtype or truncation.
FeatureBank read_bank(const std::filesystem::path& path);

inline constexpr std::size_t kBankHeaderBytes = 32;

}  // namespace ping
