// SPDX-License-Identifier: Apache-2.0
#include "ping/models.hpp"

#include <cmath>
#include <numbers>

#include "ping/embedding_core.hpp"
#include "ping/errors.hpp"
#include "ping/kernels.hpp"

namespace ping {
namespace {

constexpr double kGeluCoeff = 0.044715;
const double kSqrt2OverPi = std::sqrt(2.0 / std::numbers::pi);

Matrix map(const Matrix& x, double (*fn)(double)) {
  Matrix out(x.rows(), x.cols());
  auto src = x.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = fn(src[i]);
  return out;
}

void mul_gelu_derivative(Matrix& grad, const Matrix& pre) {
  auto g = grad.values();
  auto p = pre.values();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] *= gelu_derivative(p[i]);
}

void append(std::vector<std::span<double>>& out, Dense& d) {
  out.emplace_back(d.weight.values());
  out.emplace_back(d.bias);
}

void append(std::vector<std::span<const double>>& out, const Dense& d) {
  out.emplace_back(d.weight.values());
  out.emplace_back(d.bias);
}

}  // namespace

double glorot_limit(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

double gelu(double x) {
  const double t = std::tanh(kSqrt2OverPi * (x + kGeluCoeff * x * x * x));
  return 0.5 * x * (1.0 + t);
}

double gelu_derivative(double x) {
  const double t = std::tanh(kSqrt2OverPi * (x + kGeluCoeff * x * x * x));
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kSqrt2OverPi * (1.0 + 3.0 * kGeluCoeff * x * x);
}

Dense Dense::zeros(std::size_t in, std::size_t out) { return {Matrix(out, in), std::vector<double>(out, 0.0)}; }

Dense Dense::glorot(std::size_t in, std::size_t out, Rng& rng) {
  if (in == 0 || out == 0) throw ShapeError("Dense: dimensions must be positive");
  Dense d = zeros(in, out);
  const double limit = glorot_limit(in, out);
  for (double& w : d.weight.values()) w = (2.0 * uniform_unit(rng) - 1.0) * limit;
  return d;
}

Matrix Dense::forward(const Matrix& x) const {
  if (x.cols() != in_dim()) {
    throw ShapeError("Dense: input dim " + std::to_string(x.cols()) + ", expected " + std::to_string(in_dim()));
  }
  Matrix y = kernels::gemm_abt(x, weight);
  for (std::size_t r = 0; r < y.rows(); ++r) {
    auto row = y.row(r);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += bias[j];
  }
  return y;
}

Matrix Dense::backward(const Matrix& x, const Matrix& grad_out, Dense& grads, bool need_input_grad) const {
  if (grad_out.cols() != out_dim() || grad_out.rows() != x.rows()) throw ShapeError("Dense::backward: shape mismatch");
  grads.weight.add_scaled(kernels::gemm_atb(grad_out, x), 1.0);
  for (std::size_t r = 0; r < grad_out.rows(); ++r) {
    auto row = grad_out.row(r);
    for (std::size_t j = 0; j < row.size(); ++j) grads.bias[j] += row[j];
  }
  if (!need_input_grad) return {};
  return kernels::gemm_ab(grad_out, weight);
}

std::vector<std::span<const double>> StudentGrads::parameters() const {
  std::vector<std::span<const double>> out;
  append(out, backbone);
  append(out, head_hidden);
  append(out, head_out);
  return out;
}

StudentEncoder::StudentEncoder(Modality modality, StudentDims dims, std::uint64_t seed)
    : modality_(modality), dims_(dims) {
  if (dims.raw == 0 || dims.hidden == 0 || dims.proj_hidden == 0 || dims.embed == 0) {
    throw ShapeError("StudentEncoder: dimensions must be positive");
  }
  Rng rng(seed);
  backbone_ = Dense::glorot(dims.raw, dims.hidden, rng);
  head_hidden_ = Dense::glorot(dims.hidden, dims.proj_hidden, rng);
  head_out_ = Dense::glorot(dims.proj_hidden, dims.embed, rng);
}

StudentEncoder::StudentEncoder(const StudentEncoder& other)
    : modality_(other.modality_),
      dims_(other.dims_),
      backbone_(other.backbone_),
      head_hidden_(other.head_hidden_),
      head_out_(other.head_out_),
      generation_(other.generation_ + 1) {}

StudentEncoder& StudentEncoder::operator=(const StudentEncoder& other) {
  if (this != &other) {
    modality_ = other.modality_;
    dims_ = other.dims_;
    backbone_ = other.backbone_;
    head_hidden_ = other.head_hidden_;
    head_out_ = other.head_out_;
    generation_ = std::max(generation_, other.generation_) + 1;
  }
  return *this;
}

StudentForward StudentEncoder::forward(const Matrix& raw) const {
  StudentForward out;
  StudentCache& c = out.cache;
  c.owner = this;
  c.generation = generation_;
  c.input = raw;
  c.backbone_pre = backbone_.forward(raw);
  c.backbone_act = map(c.backbone_pre, gelu);
  c.hidden_pre = head_hidden_.forward(c.backbone_act);
  c.hidden_act = map(c.hidden_pre, gelu);
  c.projected = head_out_.forward(c.hidden_act);
  out.embeddings = l2_normalize(c.projected);
  return out;
}

StudentGrads StudentEncoder::zero_grads() const {
  return {Dense::zeros(backbone_.in_dim(), backbone_.out_dim()),
          Dense::zeros(head_hidden_.in_dim(), head_hidden_.out_dim()),
          Dense::zeros(head_out_.in_dim(), head_out_.out_dim())};
}

StudentGrads StudentEncoder::backward(const StudentCache& cache, const FeatureBatch& grad_embeddings) const {
  if (cache.owner != this || cache.generation != generation_) {
    throw ContractError("StudentEncoder::backward: cache does not match the current parameters");
  }
  if (grad_embeddings.rows() != cache.projected.rows() || grad_embeddings.cols() != dims_.embed) {
    throw ShapeError("StudentEncoder::backward: gradient shape mismatch");
  }
  StudentGrads g = zero_grads();
  Matrix d = l2_normalize_backward(cache.projected, grad_embeddings);
  d = head_out_.backward(cache.hidden_act, d, g.head_out);
  mul_gelu_derivative(d, cache.hidden_pre);
  d = head_hidden_.backward(cache.backbone_act, d, g.head_hidden);
  mul_gelu_derivative(d, cache.backbone_pre);
  backbone_.backward(cache.input, d, g.backbone, false);
  return g;
}

std::vector<std::span<double>> StudentEncoder::parameters() {
  ++generation_;
  std::vector<std::span<double>> out;
  append(out, backbone_);
  append(out, head_hidden_);
  append(out, head_out_);
  return out;
}

std::vector<std::span<const double>> StudentEncoder::parameters() const {
  std::vector<std::span<const double>> out;
  append(out, backbone_);
  append(out, head_hidden_);
  append(out, head_out_);
  return out;
}

Adapter::Adapter(Modality modality, std::size_t teacher_dim, std::size_t embed_dim, std::uint64_t seed,
                 std::optional<bool> force_enabled)
    : modality_(modality), enabled_(force_enabled.value_or(teacher_dim != embed_dim)) {
  if (!enabled_ && teacher_dim != embed_dim) {
    throw ContractError("Adapter: cannot disable an adapter between different dimensions");
  }
  Rng rng(seed);
  dense_ = Dense::glorot(teacher_dim, embed_dim, rng);
}

Matrix Adapter::forward(const Matrix& frozen) const {
  if (!enabled_) throw ContractError("Adapter::forward on a disabled adapter");
  return dense_.forward(frozen);
}

Dense Adapter::backward(const Matrix& frozen, const Matrix& grad_out) const {
  if (!enabled_) throw ContractError("Adapter::backward on a disabled adapter");
  Dense g = zero_grads();
  dense_.backward(frozen, grad_out, g, false);
  return g;
}

Matrix Adapter::apply(const Matrix& frozen) const {
  if (enabled_) return forward(frozen);
  if (frozen.cols() != embed_dim()) throw ShapeError("Adapter: pass-through dimension mismatch");
  return frozen;
}

std::vector<std::span<double>> Adapter::parameters() {
  std::vector<std::span<double>> out;
  append(out, dense_);
  return out;
}

std::vector<std::span<const double>> Adapter::parameters() const {
  std::vector<std::span<const double>> out;
  append(out, dense_);
  return out;
}

TeacherModel::TeacherModel(Modality modality, std::size_t raw_dim, std::size_t feature_dim, std::uint64_t seed)
    : modality_(modality) {
  Rng rng(seed);
  dense_ = Dense::glorot(raw_dim, feature_dim, rng);
}

FeatureBatch TeacherModel::forward(const Matrix& raw) const {
  FeatureBatch out = dense_.forward(raw);
  for (double& v : out.values()) v = std::tanh(v);
  return out;
}

}  // namespace ping
