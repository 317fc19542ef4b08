// SPDX-License-Identifier: Apache-2.0
#include "ping/objectives.hpp"

#include <algorithm>
#include <numeric>

#include "ping/embedding_core.hpp"
#include "ping/errors.hpp"
#include "ping/kernels.hpp"
#include "ping/support_set.hpp"

namespace ping {
namespace {

std::vector<std::size_t> diagonal_targets(std::size_t n) {
  std::vector<std::size_t> t(n);
  std::iota(t.begin(), t.end(), 0);
  return t;
}

void check_pair(const FeatureBatch& a, const FeatureBatch& b, const char* where) {
  if (a.rows() != b.rows() || a.cols() != b.cols() || a.rows() == 0) {
    throw ShapeError(std::string(where) + ": batches must have equal, non-zero shapes");
  }
}

double frobenius_dot(const Matrix& a, const Matrix& b) {
  double s = 0.0;
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) s += av[i] * bv[i];
  return s;
}

void add_dense(Dense& acc, const Dense& g, double w) {
  if (g.weight.empty()) return;
  if (acc.weight.empty()) acc = Dense::zeros(g.in_dim(), g.out_dim());
  acc.weight.add_scaled(g.weight, w);
  for (std::size_t i = 0; i < acc.bias.size(); ++i) acc.bias[i] += w * g.bias[i];
}

Dense scaled(const Dense& g, double w) {
  Dense out;
  add_dense(out, g, w);
  return out;
}

Matrix weighted_sum(const Matrix& a, double wa, const Matrix& b, double wb) {
  if (a.empty()) {
    Matrix out(b.rows(), b.cols());
    out.add_scaled(b, wb);
    return out;
  }
  Matrix out(a.rows(), a.cols());
  out.add_scaled(a, wa);
  if (!b.empty()) out.add_scaled(b, wb);
  return out;
}

LossResult empty_result(std::size_t n, std::size_t d) {
  LossResult r;
  r.grad_image = Matrix(n, d);
  r.grad_text = Matrix(n, d);
  return r;
}

struct AdaptedGuidance {
  Matrix adapted;     // before normalization
  Matrix normalized;
};

AdaptedGuidance adapt(const Adapter& adapter, const Matrix& frozen) {
  AdaptedGuidance g{adapter.apply(frozen), {}};
  g.normalized = l2_normalize(g.adapted);
  return g;
}

// Chains d loss / d normalized guidance back to the adapter parameters.
void accumulate_adapter_grad(const Adapter& adapter, const Matrix& frozen, const AdaptedGuidance& g,
                             const Matrix& grad_normalized, Dense& acc) {
  if (!adapter.enabled()) return;
  const Matrix grad_adapted = l2_normalize_backward(g.adapted, grad_normalized);
  add_dense(acc, adapter.backward(frozen, grad_adapted), 1.0);
}

// Softmax over rows paired with log-softmax, both max-shifted.
void log_softmax_rows(const Matrix& logits, Matrix& p, Matrix& logp) {
  p = Matrix(logits.rows(), logits.cols());
  logp = Matrix(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto row = logits.row(i);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - mx);
    const double log_z = std::log(z);
    for (std::size_t j = 0; j < row.size(); ++j) {
      logp(i, j) = row[j] - mx - log_z;
      p(i, j) = std::exp(logp(i, j));
    }
  }
}

struct KlGrads {
  double value = 0.0;
  Matrix grad_teacher;
  Matrix grad_student;
};

// Mean over rows of KL(p_teacher || p_student) with gradients w.r.t. both
// logit matrices.
KlGrads row_kl(const Matrix& teacher_logits, const Matrix& student_logits) {
  if (teacher_logits.rows() != student_logits.rows() || teacher_logits.cols() != student_logits.cols()) {
    throw ShapeError("KL: logit shapes differ");
  }
  Matrix p, logp, q, logq;
  log_softmax_rows(teacher_logits, p, logp);
  log_softmax_rows(student_logits, q, logq);
  const std::size_t n = teacher_logits.rows();
  const double inv_n = 1.0 / static_cast<double>(n);
  KlGrads out{0.0, Matrix(n, teacher_logits.cols()), Matrix(n, teacher_logits.cols())};
  for (std::size_t i = 0; i < n; ++i) {
    double kl = 0.0;
    for (std::size_t j = 0; j < p.cols(); ++j) kl += p(i, j) * (logp(i, j) - logq(i, j));
    out.value += kl;
    for (std::size_t j = 0; j < p.cols(); ++j) {
      out.grad_teacher(i, j) = inv_n * p(i, j) * ((logp(i, j) - logq(i, j)) - kl);
      out.grad_student(i, j) = inv_n * (q(i, j) - p(i, j));
    }
  }
  out.value *= inv_n;
  return out;
}

}  // namespace

void LossWeights::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must lie in [0, 1]");
}

void TemperatureParam::clamp() noexcept {
  // Largest log value whose exp() does not exceed the cap.
  static const double kMaxLog = [] {
    double v = std::log(kMaxInvTau);
    while (std::exp(v) > kMaxInvTau) v = std::nextafter(v, 0.0);
    return v;
  }();
  log_inv_tau = std::min(log_inv_tau, kMaxLog);
}

ContrastiveResult symmetric_infonce(const FeatureBatch& a, const FeatureBatch& b, const TemperatureParam& temp,
                                    bool stop_grad_a) {
  check_pair(a, b, "symmetric_infonce");
  const double s = temp.inv_tau();
  const SimilarityMatrix sim = similarity_matrix(a, b, s);
  const auto targets = diagonal_targets(a.rows());
  const auto rows = softmax_cross_entropy_rows(sim.logits, targets);
  const auto cols = softmax_cross_entropy_rows(sim.logits.transposed(), targets);

  // dL/dS = 1/2 (d_rows + d_cols^T)
  Matrix grad_s = cols.grad.transposed();
  grad_s.add_scaled(rows.grad, 1.0);
  for (double& v : grad_s.values()) v *= 0.5;

  ContrastiveResult out;
  out.value = 0.5 * (rows.loss + cols.loss);
  // dS/d log(1/tau) = S
  out.grad_log_inv_tau = frobenius_dot(grad_s, sim.logits);
  out.grad_b = kernels::gemm_atb(grad_s, a);
  for (double& v : out.grad_b.values()) v *= s;
  if (stop_grad_a) {
    out.grad_a = Matrix(a.rows(), a.cols());
  } else {
    out.grad_a = kernels::gemm_ab(grad_s, b);
    for (double& v : out.grad_a.values()) v *= s;
  }
  return out;
}

LossResult combine(const LossResult& a, double wa, const LossResult& b, double wb) {
  LossResult out;
  out.value = wa * a.value + wb * b.value;
  out.components.clip = a.components.clip + b.components.clip;
  out.components.nn = a.components.nn + b.components.nn;
  out.components.xnn = a.components.xnn + b.components.xnn;
  out.components.distill = a.components.distill + b.components.distill;
  out.grad_image = weighted_sum(a.grad_image, wa, b.grad_image, wb);
  out.grad_text = weighted_sum(a.grad_text, wa, b.grad_text, wb);
  out.grad_adapter_image = scaled(a.grad_adapter_image, wa);
  add_dense(out.grad_adapter_image, b.grad_adapter_image, wb);
  out.grad_adapter_text = scaled(a.grad_adapter_text, wa);
  add_dense(out.grad_adapter_text, b.grad_adapter_text, wb);
  out.grad_log_inv_tau = wa * a.grad_log_inv_tau + wb * b.grad_log_inv_tau;
  return out;
}

LossResult clip_loss(const FeatureBatch& image_embeds, const FeatureBatch& text_embeds, const TemperatureParam& temp) {
  const auto r = symmetric_infonce(image_embeds, text_embeds, temp, false);
  LossResult out;
  out.value = r.value;
  out.components.clip = r.value;
  out.grad_image = r.grad_a;
  out.grad_text = r.grad_b;
  out.grad_log_inv_tau = r.grad_log_inv_tau;
  return out;
}

LossResult guided_supervision_loss(const Matrix& image_guidance, const Matrix& text_guidance,
                                   const FeatureBatch& image_embeds, const FeatureBatch& text_embeds,
                                   const AdapterPair& adapters, const TemperatureParam& temp, ModalityMask mask) {
  check_pair(image_embeds, text_embeds, "guided_supervision_loss");
  LossResult out = empty_result(image_embeds.rows(), image_embeds.cols());
  for (Modality m : {Modality::kImage, Modality::kText}) {
    if (!uses(mask, m)) continue;
    const Matrix& frozen = m == Modality::kImage ? image_guidance : text_guidance;
    const FeatureBatch& student = m == Modality::kImage ? image_embeds : text_embeds;
    if (frozen.rows() != student.rows()) throw ShapeError("guidance rows must match the batch");
    const Adapter& adapter = adapters[m];
    const AdaptedGuidance g = adapt(adapter, frozen);
    // Guidance is frozen; only the adapter sees its gradient.
    const auto r = symmetric_infonce(g.normalized, student, temp, !adapter.enabled());
    out.value += r.value;
    out.grad_log_inv_tau += r.grad_log_inv_tau;
    (m == Modality::kImage ? out.grad_image : out.grad_text).add_scaled(r.grad_b, 1.0);
    accumulate_adapter_grad(adapter, frozen, g, r.grad_a,
                            m == Modality::kImage ? out.grad_adapter_image : out.grad_adapter_text);
  }
  return out;
}

NeighborPositions retrieve_neighbors(const FrozenPairs& batch, const PairedSupportSet& set, std::size_t top_k,
                                     Rng* rng) {
  if (set.empty()) throw EmptyInputError("neighbor retrieval on an empty support set");
  if (batch.image.rows() != batch.text.rows()) throw ShapeError("frozen pairs: row count mismatch");
  if (top_k == 0) throw ParameterError("top_k must be at least 1");
  NeighborPositions pos;
  if (top_k == 1) {
    pos.image = set.nn_positions(batch.image, Modality::kImage);
    pos.text = set.nn_positions(batch.text, Modality::kText);
    return pos;
  }
  if (rng == nullptr) throw ParameterError("top-k sampling needs a random generator");
  for (std::size_t k = 0; k < batch.image.rows(); ++k) {
    pos.image.push_back(set.topk_position(batch.image.row(k), Modality::kImage, top_k, *rng));
    pos.text.push_back(set.topk_position(batch.text.row(k), Modality::kText, top_k, *rng));
  }
  return pos;
}

namespace {

Matrix gather_halves(const PairedSupportSet& set, std::span<const std::size_t> positions, Modality m) {
  Matrix out(positions.size(), set.dim(m));
  for (std::size_t k = 0; k < positions.size(); ++k) {
    auto v = set.vector(positions[k], m);
    std::copy(v.begin(), v.end(), out.row(k).begin());
  }
  return out;
}

}  // namespace

FrozenPairs nn_guidance(const NeighborPositions& pos, const PairedSupportSet& set) {
  return {gather_halves(set, pos.image, Modality::kImage), gather_halves(set, pos.text, Modality::kText)};
}

FrozenPairs xnn_guidance(const NeighborPositions& pos, const PairedSupportSet& set) {
  return {gather_halves(set, pos.text, Modality::kImage), gather_halves(set, pos.image, Modality::kText)};
}

LossResult nn_supervision_loss(const FrozenPairs& batch, const FeatureBatch& image_embeds,
                               const FeatureBatch& text_embeds, const PairedSupportSet& set,
                               const AdapterPair& adapters, const TemperatureParam& temp, ModalityMask mask,
                               std::size_t top_k, Rng* rng) {
  const FrozenPairs g = nn_guidance(retrieve_neighbors(batch, set, top_k, rng), set);
  LossResult out = guided_supervision_loss(g.image, g.text, image_embeds, text_embeds, adapters, temp, mask);
  out.components.nn = out.value;
  return out;
}

LossResult xnn_supervision_loss(const FrozenPairs& batch, const FeatureBatch& image_embeds,
                                const FeatureBatch& text_embeds, const PairedSupportSet& set,
                                const AdapterPair& adapters, const TemperatureParam& temp, ModalityMask mask,
                                std::size_t top_k, Rng* rng) {
  const FrozenPairs g = xnn_guidance(retrieve_neighbors(batch, set, top_k, rng), set);
  LossResult out = guided_supervision_loss(g.image, g.text, image_embeds, text_embeds, adapters, temp, mask);
  out.components.xnn = out.value;
  return out;
}

LossResult ping_loss(const LossResult& nn, const LossResult& xnn, double alpha) {
  return combine(nn, 1.0 - alpha, xnn, alpha);
}

LossResult clip_ping_loss(const LossResult& clip, const LossResult& ping, double lambda) {
  return combine(clip, 1.0 - lambda, ping, lambda);
}

double mean_row_kl(const Matrix& teacher_logits, const Matrix& student_logits) {
  return row_kl(teacher_logits, student_logits).value;
}

LossResult distill_loss(const FrozenPairs& teacher, const FeatureBatch& image_embeds, const FeatureBatch& text_embeds,
                        const AdapterPair& adapters, const TemperatureParam& temp, double lambda_distill) {
  check_pair(image_embeds, text_embeds, "distill_loss");
  if (teacher.image.rows() != image_embeds.rows() || teacher.text.rows() != image_embeds.rows()) {
    throw ShapeError("distill_loss: teacher batch size differs from the student batch");
  }
  const double s = temp.inv_tau();
  const AdaptedGuidance ti = adapt(adapters.image, teacher.image);
  const AdaptedGuidance tt = adapt(adapters.text, teacher.text);
  if (ti.normalized.cols() != image_embeds.cols() || tt.normalized.cols() != image_embeds.cols()) {
    throw ShapeError("distill_loss: adapted teacher dimension differs from the student");
  }
  const Matrix student = similarity_matrix(image_embeds, text_embeds, s).logits;
  const Matrix teach = similarity_matrix(ti.normalized, tt.normalized, s).logits;

  const KlGrads i2t = row_kl(teach, student);
  const KlGrads t2i = row_kl(teach.transposed(), student.transposed());

  // d(1/2 (KL_i2t + KL_t2i)) w.r.t. both logit matrices
  Matrix g_student = t2i.grad_student.transposed();
  g_student.add_scaled(i2t.grad_student, 1.0);
  Matrix g_teacher = t2i.grad_teacher.transposed();
  g_teacher.add_scaled(i2t.grad_teacher, 1.0);
  for (double& v : g_student.values()) v *= 0.5;
  for (double& v : g_teacher.values()) v *= 0.5;

  LossResult kd = empty_result(image_embeds.rows(), image_embeds.cols());
  kd.value = 0.5 * (i2t.value + t2i.value);
  kd.components.distill = kd.value;
  kd.grad_log_inv_tau = frobenius_dot(g_student, student) + frobenius_dot(g_teacher, teach);
  kd.grad_image = kernels::gemm_ab(g_student, text_embeds);
  kd.grad_text = kernels::gemm_atb(g_student, image_embeds);
  Matrix g_ti = kernels::gemm_ab(g_teacher, tt.normalized);
  Matrix g_tt = kernels::gemm_atb(g_teacher, ti.normalized);
  for (Matrix* m : {&kd.grad_image, &kd.grad_text, &g_ti, &g_tt}) {
    for (double& v : m->values()) v *= s;
  }
  accumulate_adapter_grad(adapters.image, teacher.image, ti, g_ti, kd.grad_adapter_image);
  accumulate_adapter_grad(adapters.text, teacher.text, tt, g_tt, kd.grad_adapter_text);

  return combine(clip_loss(image_embeds, text_embeds, temp), 1.0 - lambda_distill, kd, lambda_distill);
}

}  // namespace ping
