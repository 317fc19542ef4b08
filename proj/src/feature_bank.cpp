// SPDX-License-Identifier: Apache-2.0
#include "ping/feature_bank.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "ping/binary_io.hpp"
#include "ping/errors.hpp"
#include "ping/models.hpp"
#include "ping/synthetic_data.hpp"

namespace ping {
namespace {

constexpr char kBankMagic[] = "PINGBANK";
constexpr std::uint32_t kBankVersion = 1;

}  // namespace

void round_to_dtype(std::span<double> values, BankDtype dtype) {
  if (dtype == BankDtype::kF64) return;
  for (double& v : values) v = static_cast<double>(static_cast<float>(v));
}

FeatureBank::FeatureBank(Modality modality, std::span<const std::uint64_t> ids, const Matrix& features,
                         BankDtype dtype)
    : modality_(modality), dtype_(dtype) {
  if (ids.size() != features.rows()) throw ShapeError("FeatureBank: one id per feature row required");
  if (!features.all_finite()) throw NumericalInputError("FeatureBank: non-finite feature");
  std::vector<std::size_t> order(ids.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ids[a] < ids[b]; });
  ids_.reserve(ids.size());
  for (std::size_t i : order) {
    if (!ids_.empty() && ids_.back() == ids[i]) throw Error("FeatureBank: duplicate sample id " + std::to_string(ids[i]));
    ids_.push_back(ids[i]);
  }
  values_ = gather_rows(features, order);
  round_to_dtype(values_.values(), dtype_);
}

std::size_t FeatureBank::position(std::uint64_t id) const {
  auto it = std::lower_bound(ids_.begin(), ids_.end(), id);
  if (it == ids_.end() || *it != id) throw NotFoundError("feature bank has no sample id " + std::to_string(id));
  return static_cast<std::size_t>(it - ids_.begin());
}

bool FeatureBank::contains(std::uint64_t id) const noexcept {
  return std::binary_search(ids_.begin(), ids_.end(), id);
}

std::span<const double> FeatureBank::vector(std::uint64_t id) const { return values_.row(position(id)); }

FrozenFeature FeatureBank::lookup(std::uint64_t id) const {
  auto v = vector(id);
  return {id, {v.begin(), v.end()}};
}

Matrix FeatureBank::gather(std::span<const std::uint64_t> ids) const {
  Matrix out(ids.size(), dim());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    auto v = vector(ids[i]);
    std::copy(v.begin(), v.end(), out.row(i).begin());
  }
  return out;
}

FeatureBank extract_features(const TeacherModel& teacher, const PairedDataset& dataset, Modality modality,
                             BankDtype dtype) {
  const Matrix& raw = dataset.raw(modality);
  if (teacher.raw_dim() != raw.cols()) {
    throw ShapeError("extract_features: teacher expects " + std::to_string(teacher.raw_dim()) + " inputs, " +
                     std::string(to_string(modality)) + " views have " + std::to_string(raw.cols()));
  }
  std::vector<std::uint64_t> ids;
  ids.reserve(dataset.size());
  for (const auto& s : dataset.samples) ids.push_back(s.id);
  return FeatureBank(modality, ids, teacher.forward(raw), dtype);
}

void write_bank(const std::filesystem::path& path, const FeatureBank& bank) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  io::Writer w(os);
  w.put_bytes({kBankMagic, 8});
  w.put<std::uint32_t>(kBankVersion);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(bank.modality()));
  w.put_zeros(3);
  w.put<std::uint64_t>(bank.size());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(bank.dim()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(bank.dtype()));
  for (std::size_t i = 0; i < bank.size(); ++i) {
    w.put<std::uint64_t>(bank.ids()[i]);
    for (double v : bank.values().row(i)) {
      if (bank.dtype() == BankDtype::kF32) {
        w.put<float>(static_cast<float>(v));
      } else {
        w.put<double>(v);
      }
    }
  }
  os.flush();
  if (!w.good()) throw Error("write failed for " + path.string());
}

FeatureBank read_bank(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path.string());
  io::Reader r(is);
  if (r.get_bytes(8, "magic") != std::string(kBankMagic, 8)) throw FormatError("bad bank magic", 0);
  if (r.get<std::uint32_t>("version") != kBankVersion) throw FormatError("unsupported bank version", 8);
  const auto modality = r.get<std::uint8_t>("modality");
  if (modality > 1) throw FormatError("bad modality tag", 12);
  r.get_bytes(3, "reserved");
  const auto count = r.get<std::uint64_t>("count");
  const auto dim = r.get<std::uint32_t>("dim");
  const auto dtype = r.get<std::uint32_t>("dtype");
  if (dtype > 1) throw FormatError("unsupported bank dtype " + std::to_string(dtype), 28);
  if (dim == 0) throw FormatError("bank dim is zero", 24);

  std::vector<std::uint64_t> ids;
  ids.reserve(count);
  Matrix values(count, dim);
  for (std::size_t i = 0; i < count; ++i) {
    const auto id = r.get<std::uint64_t>("sample id");
    if (!ids.empty() && id <= ids.back()) throw FormatError("bank records not in ascending id order", r.offset() - 8);
    ids.push_back(id);
    for (double& v : values.row(i)) {
      v = dtype == 0 ? static_cast<double>(r.get<float>("feature value")) : r.get<double>("feature value");
    }
  }
  if (!r.at_end()) throw FormatError("trailing bytes after bank records", r.offset());
  return FeatureBank(static_cast<Modality>(modality), ids, values, static_cast<BankDtype>(dtype));
}

}  // namespace ping
