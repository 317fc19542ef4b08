// SPDX-License-Identifier: Apache-2.0
#include "ping/optimizer.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "ping/errors.hpp"

namespace ping {

double lr_at(std::size_t global_step, std::size_t total_steps, std::size_t warmup_steps, double base_lr) {
  if (global_step >= total_steps) {
    throw ParameterError("lr_at: step " + std::to_string(global_step) + " outside a schedule of " +
                         std::to_string(total_steps));
  }
  if (global_step < warmup_steps) {
    return base_lr * static_cast<double>(global_step + 1) / static_cast<double>(warmup_steps);
  }
  const double progress =
      static_cast<double>(global_step - warmup_steps) / static_cast<double>(total_steps - warmup_steps);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

void adamw_step(OptimizerState& state, std::span<const ParamSlot> slots) {
  if (state.first_moment.empty()) {
    for (const auto& s : slots) {
      state.first_moment.emplace_back(s.value.size(), 0.0);
      state.second_moment.emplace_back(s.value.size(), 0.0);
    }
  }
  if (state.first_moment.size() != slots.size()) throw ShapeError("adamw_step: parameter list changed between steps");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t k = 0; k < slots.size(); ++k) {
    const auto& s = slots[k];
    auto& m = state.first_moment[k];
    auto& v = state.second_moment[k];
    if (s.value.size() != m.size() || s.grad.size() != m.size()) throw ShapeError("adamw_step: tensor shape mismatch");
    for (std::size_t i = 0; i < m.size(); ++i) {
      const double g = s.grad[i];
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
      const double update = (m[i] / bc1) / (std::sqrt(v[i] / bc2) + state.eps);
      s.value[i] -= s.lr * (update + s.weight_decay * s.value[i]);
    }
  }
}

void adamw_step(OptimizerState& state, std::span<double> params, std::span<const double> grads, double lr,
                double weight_decay) {
  const ParamSlot slot{params, grads, lr, weight_decay};
  adamw_step(state, std::span<const ParamSlot>(&slot, 1));
}

}  // namespace ping
