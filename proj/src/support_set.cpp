// SPDX-License-Identifier: Apache-2.0
#include "ping/support_set.hpp"

#include <algorithm>
#include <numeric>

#include "ping/errors.hpp"
#include "ping/feature_bank.hpp"
#include "ping/kernels.hpp"

namespace ping {

PairedSupportSet::PairedSupportSet(std::size_t capacity, std::size_t image_dim, std::size_t text_dim,
                                   UpdateStrategy strategy, std::uint64_t seed)
    : capacity_(capacity), image_dim_(image_dim), text_dim_(text_dim), strategy_(strategy), rng_(seed) {
  if (capacity == 0) throw ParameterError("support set capacity must be at least 1");
  if (image_dim == 0 || text_dim == 0) throw ShapeError("support set dimensions must be positive");
}

PairedSupportSet PairedSupportSet::init_from_banks(const FeatureBank& image_bank, const FeatureBank& text_bank,
                                                   std::size_t capacity, std::uint64_t seed,
                                                   UpdateStrategy strategy) {
  if (image_bank.size() == 0 || text_bank.size() == 0) throw EmptyInputError("support set: empty feature banks");
  if (!std::equal(image_bank.ids().begin(), image_bank.ids().end(), text_bank.ids().begin(), text_bank.ids().end())) {
    throw Error("support set: image and text banks hold different sample ids");
  }
  PairedSupportSet set(capacity, image_bank.dim(), text_bank.dim(), strategy, seed);
  // Partial Fisher-Yates over bank rows; the drawn order becomes queue order.
  std::vector<std::size_t> rows(image_bank.size());
  std::iota(rows.begin(), rows.end(), 0);
  const std::size_t take = std::min(capacity, rows.size());
  for (std::size_t i = 0; i < take; ++i) {
    const std::size_t j = i + uniform_index(set.rng_, rows.size() - i);
    std::swap(rows[i], rows[j]);
    set.append(image_bank.ids()[rows[i]], image_bank.values().row(rows[i]), text_bank.values().row(rows[i]));
  }
  return set;
}

SupportEntry PairedSupportSet::entry(std::size_t position) const {
  if (position >= size()) throw IndexError("support set position out of range");
  auto img = vector(position, Modality::kImage);
  auto txt = vector(position, Modality::kText);
  return {ids_[position], {img.begin(), img.end()}, {txt.begin(), txt.end()}, stamps_[position]};
}

std::span<const double> PairedSupportSet::vector(std::size_t position, Modality m) const {
  if (position >= size()) throw IndexError("support set position out of range");
  const std::size_t d = dim(m);
  return vectors(m).subspan(position * d, d);
}

void PairedSupportSet::append(std::uint64_t id, std::span<const double> image, std::span<const double> text) {
  ids_.push_back(id);
  stamps_.push_back(update_count_);
  image_.insert(image_.end(), image.begin(), image.end());
  text_.insert(text_.end(), text.begin(), text.end());
}

void PairedSupportSet::overwrite(std::size_t position, std::uint64_t id, std::span<const double> image,
                                 std::span<const double> text) {
  ids_[position] = id;
  stamps_[position] = update_count_;
  std::copy(image.begin(), image.end(), image_.begin() + static_cast<std::ptrdiff_t>(position * image_dim_));
  std::copy(text.begin(), text.end(), text_.begin() + static_cast<std::ptrdiff_t>(position * text_dim_));
}

void PairedSupportSet::update(std::span<const std::uint64_t> ids, const Matrix& image, const Matrix& text) {
  if (image.rows() != ids.size() || text.rows() != ids.size()) throw ShapeError("support set update: row count mismatch");
  if (image.cols() != image_dim_ || text.cols() != text_dim_) throw ShapeError("support set update: dimension mismatch");
  if (!image.all_finite() || !text.all_finite()) throw NumericalInputError("support set update: non-finite vector");
  ++update_count_;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (strategy_ == UpdateStrategy::kRandom && size() == capacity_) {
      overwrite(uniform_index(rng_, capacity_), ids[i], image.row(i), text.row(i));
    } else {
      append(ids[i], image.row(i), text.row(i));
    }
  }
  if (size() > capacity_) {
    const std::size_t evict = size() - capacity_;
    ids_.erase(ids_.begin(), ids_.begin() + static_cast<std::ptrdiff_t>(evict));
    stamps_.erase(stamps_.begin(), stamps_.begin() + static_cast<std::ptrdiff_t>(evict));
    image_.erase(image_.begin(), image_.begin() + static_cast<std::ptrdiff_t>(evict * image_dim_));
    text_.erase(text_.begin(), text_.begin() + static_cast<std::ptrdiff_t>(evict * text_dim_));
  }
}

void PairedSupportSet::update(std::span<const SupportEntry> entries) {
  std::vector<std::uint64_t> ids;
  Matrix image(entries.size(), image_dim_);
  Matrix text(entries.size(), text_dim_);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    if (e.image_vector.size() != image_dim_ || e.text_vector.size() != text_dim_) {
      throw ShapeError("support set update: dimension mismatch");
    }
    ids.push_back(e.sample_id);
    std::copy(e.image_vector.begin(), e.image_vector.end(), image.row(i).begin());
    std::copy(e.text_vector.begin(), e.text_vector.end(), text.row(i).begin());
  }
  update(ids, image, text);
}

void PairedSupportSet::check_query(std::span<const double> query, Modality m) const {
  if (empty()) throw EmptyInputError("support set is empty");
  if (query.size() != dim(m)) throw ShapeError("support set query has the wrong dimension");
}

std::size_t PairedSupportSet::nn_position(std::span<const double> query, Modality m) const {
  check_query(query, m);
  Matrix q(1, query.size(), {query.begin(), query.end()});
  return kernels::nearest_rows(q, vectors(m), dim(m)).front();
}

std::vector<std::size_t> PairedSupportSet::nn_positions(const Matrix& queries, Modality m) const {
  if (empty()) throw EmptyInputError("support set is empty");
  if (queries.cols() != dim(m)) throw ShapeError("support set query has the wrong dimension");
  return kernels::nearest_rows(queries, vectors(m), dim(m));
}

std::vector<std::size_t> PairedSupportSet::topk_positions(std::span<const double> query, Modality m,
                                                          std::size_t k) const {
  check_query(query, m);
  if (k == 0) throw ParameterError("top-k needs k >= 1");
  const auto dist = kernels::squared_distances(query, vectors(m), dim(m));
  std::vector<std::size_t> order(dist.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t take = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                    [&](std::size_t a, std::size_t b) { return dist[a] < dist[b] || (dist[a] == dist[b] && a < b); });
  order.resize(take);
  return order;
}

std::size_t PairedSupportSet::topk_position(std::span<const double> query, Modality m, std::size_t k,
                                            Rng& rng) const {
  if (k == 1) return nn_position(query, m);
  const auto top = topk_positions(query, m, k);
  return top[uniform_index(rng, top.size())];
}

SupportEntry PairedSupportSet::nn_retrieve(std::span<const double> query, Modality m) const {
  return entry(nn_position(query, m));
}

SupportEntry PairedSupportSet::topk_sample(std::span<const double> query, Modality m, std::size_t k, Rng& rng) const {
  return entry(topk_position(query, m, k, rng));
}

SupportEntry PairedSupportSet::xnn_retrieve(std::span<const double> image_feature,
                                            std::span<const double> text_feature, Modality target) const {
  return target == Modality::kImage ? nn_retrieve(text_feature, Modality::kText)
                                    : nn_retrieve(image_feature, Modality::kImage);
}

}  // namespace ping
