#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>

namespace lungtex {

// Parenchymal texture classes; the numeric value is the on-disk mask code.
enum class TextureLabel : std::uint8_t {
  kNormal = 1,
  kGroundGlass = 2,
  kGroundGlassReticulation = 3,
  kHoneycombing = 4,
  kEmphysema = 5,
};

inline constexpr int kNumClasses = 5;

inline constexpr std::array<TextureLabel, kNumClasses> kAllLabels = {
    TextureLabel::kNormal, TextureLabel::kGroundGlass, TextureLabel::kGroundGlassReticulation,
    TextureLabel::kHoneycombing, TextureLabel::kEmphysema};

inline constexpr std::uint8_t code_of(TextureLabel l) { return static_cast<std::uint8_t>(l); }
// 0-based index used for network outputs and per-class arrays.
inline constexpr int index_of(TextureLabel l) { return static_cast<int>(l) - 1; }
inline constexpr TextureLabel label_from_index(int i) { return static_cast<TextureLabel>(i + 1); }

inline std::optional<TextureLabel> label_from_code(int code) {
  if (code < 1 || code > kNumClasses) return std::nullopt;
  return static_cast<TextureLabel>(code);
}

inline constexpr std::string_view name_of(TextureLabel l) {
  switch (l) {
    case TextureLabel::kNormal: return "NORMAL";
    case TextureLabel::kGroundGlass: return "GG";
    case TextureLabel::kGroundGlassReticulation: return "GGR";
    case TextureLabel::kHoneycombing: return "HONEYCOMBING";
    case TextureLabel::kEmphysema: return "EMPHYSEMA";
  }
  return "?";
}

inline std::optional<TextureLabel> label_from_name(std::string_view name) {
  for (const TextureLabel l : kAllLabels)
    if (name_of(l) == name) return l;
  return std::nullopt;
}

}  // namespace lungtex
