// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>

#include "ping/matrix.hpp"
#include "ping/models.hpp"
#include "ping/rng.hpp"

namespace ping {

class PairedSupportSet;

enum class ModalityMask { kBoth, kTextOnly, kImageOnly };

inline bool uses(ModalityMask mask, Modality m) noexcept {
  return mask == ModalityMask::kBoth || (mask == ModalityMask::kImageOnly) == (m == Modality::kImage);
}

struct LossWeights {
  double alpha = 0.25;
  double lambda = 0.6;
  ModalityMask mask = ModalityMask::kBoth;

  /// Throws ConfigError when alpha or lambda leaves [0, 1].
  void validate() const;
};

/// Learnable temperature stored as log(1/tau).
struct TemperatureParam {
  static constexpr double kMaxInvTau = 100.0;

  double log_inv_tau = std::log(1.0 / 0.07);

  static TemperatureParam from_tau(double tau) { return {std::log(1.0 / tau)}; }
  double inv_tau() const noexcept { return std::exp(log_inv_tau); }
  /// Enforce 1/tau <= 100.
  void clamp() noexcept;
};

/// Output of the shared two-direction InfoNCE.
struct ContrastiveResult {
  double value = 0.0;
  Matrix grad_a;
  Matrix grad_b;
  double grad_log_inv_tau = 0.0;
};

/// 1/2 [CE over rows of S + CE over rows of S^T], S = (1/tau) a b^T, matched
/// rows as positives. With stop_grad_a the gradient w.r.t. `a` is all zeros.
ContrastiveResult symmetric_infonce(const FeatureBatch& a, const FeatureBatch& b, const TemperatureParam& temp,
                                    bool stop_grad_a = false);

/// Unweighted term values, kept for logging.
struct LossComponents {
  double clip = 0.0;
  double nn = 0.0;
  double xnn = 0.0;
  double distill = 0.0;
};

/// Loss value with gradients w.r.t. the student embeddings, both adapters and
/// log(1/tau). An adapter gradient with no entries stands for zero.
struct LossResult {
  double value = 0.0;
  LossComponents components;
  Matrix grad_image;
  Matrix grad_text;
  Dense grad_adapter_image;
  Dense grad_adapter_text;
  double grad_log_inv_tau = 0.0;

  const Dense& grad_adapter(Modality m) const noexcept {
    return m == Modality::kImage ? grad_adapter_image : grad_adapter_text;
  }
};

/// wa * a + wb * b over the value and every gradient; components add.
LossResult combine(const LossResult& a, double wa, const LossResult& b, double wb);

/// Frozen teacher-space features of the current batch, row k per sample k.
struct FrozenPairs {
  Matrix image;
  Matrix text;
};

LossResult clip_loss(const FeatureBatch& image_embeds, const FeatureBatch& text_embeds, const TemperatureParam& temp);

/// Guidance rows (teacher space) go through the modality adapter, are
/// normalized, and serve as the frozen side of a symmetric InfoNCE against the
/// student embeddings of the same modality. Result: L_I + L_T per `mask`.
LossResult guided_supervision_loss(const Matrix& image_guidance, const Matrix& text_guidance,
                                   const FeatureBatch& image_embeds, const FeatureBatch& text_embeds,
                                   const AdapterPair& adapters, const TemperatureParam& temp, ModalityMask mask);

/// Which support-set positions guide each batch row.
struct NeighborPositions {
  std::vector<std::size_t> image;  ///< neighbor of the image feature among image halves
  std::vector<std::size_t> text;   ///< neighbor of the text feature among text halves
};

/// NN (or top-k sampled, when top_k > 1) positions for every batch row.
NeighborPositions retrieve_neighbors(const FrozenPairs& batch, const PairedSupportSet& set, std::size_t top_k,
                                     Rng* rng);

/// Guidance matrices for intra-modal (NN) supervision.
FrozenPairs nn_guidance(const NeighborPositions& pos, const PairedSupportSet& set);
/// Guidance for inter-modal (XNN) supervision: the image guidance of row k is
/// the image half of the text neighbor, and vice versa.
FrozenPairs xnn_guidance(const NeighborPositions& pos, const PairedSupportSet& set);

LossResult nn_supervision_loss(const FrozenPairs& batch, const FeatureBatch& image_embeds,
                               const FeatureBatch& text_embeds, const PairedSupportSet& set,
                               const AdapterPair& adapters, const TemperatureParam& temp, ModalityMask mask,
                               std::size_t top_k = 1, Rng* rng = nullptr);

LossResult xnn_supervision_loss(const FrozenPairs& batch, const FeatureBatch& image_embeds,
                                const FeatureBatch& text_embeds, const PairedSupportSet& set,
                                const AdapterPair& adapters, const TemperatureParam& temp, ModalityMask mask,
                                std::size_t top_k = 1, Rng* rng = nullptr);

/// (1 - alpha) * nn + alpha * xnn
LossResult ping_loss(const LossResult& nn, const LossResult& xnn, double alpha);
/// (1 - lambda) * clip + lambda * ping
LossResult clip_ping_loss(const LossResult& clip, const LossResult& ping, double lambda);

/// Mean row KL(softmax(teacher logits) || softmax(student logits)).
double mean_row_kl(const Matrix& teacher_logits, const Matrix& student_logits);

/// (1 - lambda) * CLIP + lambda * 1/2 (KL_i2t + KL_t2i). Teacher features are
/// adapted and normalized here; both logit matrices share 1/tau.
LossResult distill_loss(const FrozenPairs& teacher, const FeatureBatch& image_embeds, const FeatureBatch& text_embeds,
                        const AdapterPair& adapters, const TemperatureParam& temp, double lambda_distill);

}  // namespace ping
