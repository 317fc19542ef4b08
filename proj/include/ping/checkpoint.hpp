// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "ping/trainer.hpp"

namespace ping {

/// Named flat tensors.
///
/// PINGCKPT layout, little-endian:
///   "PINGCKPT" | version u32 = 1 | tensor count u32 |
///   per tensor: name length u32, name bytes, value count u64, f64 values
struct Checkpoint {
  std::vector<std::pair<std::string, std::vector<double>>> tensors;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

Checkpoint snapshot(const TrainedModel& model);
/// Copies tensors into `model`, whose shapes must match exactly.
void restore(const Checkpoint& ckpt, TrainedModel& model);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace ping
