// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "ping/matrix.hpp"
#include "ping/modality.hpp"
#include "ping/rng.hpp"

namespace ping {

/// Affine map y = x W^T + b with W stored out x in.
struct Dense {
  Matrix weight;
  std::vector<double> bias;

  std::size_t in_dim() const noexcept { return weight.cols(); }
  std::size_t out_dim() const noexcept { return weight.rows(); }

  static Dense zeros(std::size_t in, std::size_t out);
  /// Glorot-uniform weights, zero bias.
  static Dense glorot(std::size_t in, std::size_t out, Rng& rng);

  Matrix forward(const Matrix& x) const;
  /// Accumulates dW = grad^T x and db = colsum(grad) into `grads`; returns d x.
  Matrix backward(const Matrix& x, const Matrix& grad_out, Dense& grads, bool need_input_grad = true) const;
};

/// sqrt(6 / (fan_in + fan_out))
double glorot_limit(std::size_t fan_in, std::size_t fan_out);

/// tanh-approximation GELU and its exact derivative.
double gelu(double x);
double gelu_derivative(double x);

struct StudentDims {
  std::size_t raw = 0;
  std::size_t hidden = 0;
  std::size_t proj_hidden = 0;
  std::size_t embed = 0;
};

class StudentEncoder;

/// Everything backward needs from one forward pass.
struct StudentCache {
  const StudentEncoder* owner = nullptr;
  std::uint64_t generation = 0;
  Matrix input, backbone_pre, backbone_act, hidden_pre, hidden_act, projected;
};

struct StudentForward {
  FeatureBatch embeddings;  ///< L2-normalized rows
  StudentCache cache;
};

/// Gradients laid out exactly like StudentEncoder's parameters.
struct StudentGrads {
  Dense backbone, head_hidden, head_out;

  std::vector<std::span<const double>> parameters() const;
};

/// Backbone affine+GELU followed by a two-layer projection head with GELU
/// after its first layer; outputs are L2-normalized.
class StudentEncoder {
 public:
  StudentEncoder() = default;
  StudentEncoder(Modality modality, StudentDims dims, std::uint64_t seed);
  StudentEncoder(const StudentEncoder& other);
  StudentEncoder& operator=(const StudentEncoder& other);

  Modality modality() const noexcept { return modality_; }
  const StudentDims& dims() const noexcept { return dims_; }
  const Dense& backbone() const noexcept { return backbone_; }
  const Dense& head_hidden() const noexcept { return head_hidden_; }
  const Dense& head_out() const noexcept { return head_out_; }
  std::uint64_t generation() const noexcept { return generation_; }

  StudentForward forward(const Matrix& raw) const;
  /// Throws ContractError if the cache came from a different encoder or from
  /// before the last parameter change.
  StudentGrads backward(const StudentCache& cache, const FeatureBatch& grad_embeddings) const;

  StudentGrads zero_grads() const;

  /// Mutable views in the order backbone.{W,b}, head_hidden.{W,b}, head_out.{W,b}.
  /// Handing these out invalidates earlier forward caches.
  std::vector<std::span<double>> parameters();
  std::vector<std::span<const double>> parameters() const;

 private:
  Modality modality_ = Modality::kImage;
  StudentDims dims_;
  Dense backbone_, head_hidden_, head_out_;
  std::uint64_t generation_ = 0;
};

/// Single affine map from teacher space to the student embedding space.
class Adapter {
 public:
  Adapter() = default;
  /// Enabled iff teacher_dim != embed_dim unless `force_enabled` says otherwise.
  Adapter(Modality modality, std::size_t teacher_dim, std::size_t embed_dim, std::uint64_t seed,
          std::optional<bool> force_enabled = std::nullopt);

  Modality modality() const noexcept { return modality_; }
  bool enabled() const noexcept { return enabled_; }
  std::size_t teacher_dim() const noexcept { return dense_.in_dim(); }
  std::size_t embed_dim() const noexcept { return dense_.out_dim(); }
  const Dense& dense() const noexcept { return dense_; }
  Dense& mutable_dense() noexcept { return dense_; }

  /// x W^T + b. Throws ContractError when disabled.
  Matrix forward(const Matrix& frozen) const;
  /// Returns dW, db. Throws ContractError when disabled.
  Dense backward(const Matrix& frozen, const Matrix& grad_out) const;
  /// forward() when enabled, pass-through otherwise.
  Matrix apply(const Matrix& frozen) const;

  Dense zero_grads() const { return Dense::zeros(dense_.in_dim(), dense_.out_dim()); }
  std::vector<std::span<double>> parameters();
  std::vector<std::span<const double>> parameters() const;

 private:
  Modality modality_ = Modality::kImage;
  Dense dense_;
  bool enabled_ = false;
};

struct AdapterPair {
  Adapter image;
  Adapter text;

  const Adapter& operator[](Modality m) const noexcept { return m == Modality::kImage ? image : text; }
};

/// Frozen random tanh network standing in for a pre-trained unimodal encoder.
class TeacherModel {
 public:
  TeacherModel(Modality modality, std::size_t raw_dim, std::size_t feature_dim, std::uint64_t seed);

  Modality modality() const noexcept { return modality_; }
  std::size_t raw_dim() const noexcept { return dense_.in_dim(); }
  std::size_t feature_dim() const noexcept { return dense_.out_dim(); }
  const Dense& dense() const noexcept { return dense_; }

  /// tanh(x W^T + b), unnormalized.
  FeatureBatch forward(const Matrix& raw) const;

 private:
  Modality modality_;
  Dense dense_;
};

}  // namespace ping
