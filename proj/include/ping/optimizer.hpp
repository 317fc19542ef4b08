// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace ping {

/// Warmup steps ramp linearly to base_lr ((step+1)/warmup_steps); the rest
/// follow a half cosine, progress = (step - warmup) / (total - warmup).
/// Throws ParameterError unless step < total_steps.
double lr_at(std::size_t global_step, std::size_t total_steps, std::size_t warmup_steps, double base_lr);

/// One tensor handed to the optimizer together with its hyperparameters.
struct ParamSlot {
  std::span<double> value;
  std::span<const double> grad;
  double lr = 0.0;
  double weight_decay = 0.0;
};

/// AdamW moments for a fixed sequence of tensors.
struct OptimizerState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
};

/// Bias-corrected Adam with decoupled decay:
///   p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + wd * p)
/// Moments are created on first use; later calls must pass the same tensors.
void adamw_step(OptimizerState& state, std::span<const ParamSlot> slots);

/// Single-tensor convenience form.
void adamw_step(OptimizerState& state, std::span<double> params, std::span<const double> grads, double lr,
                double weight_decay);

}  // namespace ping
