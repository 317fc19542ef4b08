// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace ping {

enum class Modality : std::uint8_t { kImage = 0, kText = 1 };

inline constexpr Modality other(Modality m) noexcept {
  return m == Modality::kImage ? Modality::kText : Modality::kImage;
}

inline std::string_view to_string(Modality m) noexcept { return m == Modality::kImage ? "image" : "text"; }

}  // namespace ping
