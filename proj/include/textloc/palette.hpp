#pragma once

#include <array>
#include <string>

#include "textloc/common.hpp"

namespace textloc {

struct PaletteColor {
  const char* name;
  double r, g, b;
};

/// Fixed color vocabulary. Anchors are chosen so that mid-gray (0.5,0.5,0.5)
/// maps to "gray" and the primaries map to their own names.
inline constexpr std::array<PaletteColor, 9> kPalette = {{
    {"gray", 0.5, 0.5, 0.5},
    {"black", 0.0, 0.0, 0.0},
    {"white", 1.0, 1.0, 1.0},
    {"red", 1.0, 0.1, 0.1},
    {"green", 0.1, 0.6, 0.1},
    {"blue", 0.1, 0.2, 0.9},
    {"yellow", 1.0, 0.9, 0.1},
    {"brown", 0.55, 0.35, 0.15},
    {"orange", 1.0, 0.6, 0.1},
}};

/// Index of the palette anchor nearest in RGB Euclidean distance.
/// Ties break to the lowest index.
inline int nearest_palette_index(double r, double g, double b) {
  int best = 0;
  double best_d = 1e300;
  for (std::size_t i = 0; i < kPalette.size(); ++i) {
    const auto& p = kPalette[i];
    const double d = (p.r - r) * (p.r - r) + (p.g - g) * (p.g - g) +
                     (p.b - b) * (p.b - b);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(i);
    }
  }
  return best;
}

inline const char* nearest_palette_name(double r, double g, double b) {
  return kPalette[static_cast<std::size_t>(nearest_palette_index(r, g, b))].name;
}

inline int palette_index(const std::string& name) {
  for (std::size_t i = 0; i < kPalette.size(); ++i)
    if (name == kPalette[i].name) return static_cast<int>(i);
  fail("palette: unknown color name '", name, "'");
}

}  // namespace textloc
