#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "latsep/image.hpp"

namespace latsep {

/// A trigger pattern, its binary mask and the opacities used when planting
/// it into training samples and into test inputs.
struct TriggerSpec {
  std::string name;
  ImageShape shape;
  std::vector<float> pattern;      // HWC, [0,1]
  std::vector<std::uint8_t> mask;  // HW, {0,1}, broadcast over channels
  double train_opacity = 1.0;
  double test_opacity = 1.0;

  /// Throws InvalidInput when a field breaks the invariants above.
  void validate() const;

  /// Number of mask pixels set.
  std::size_t mask_area() const;
};

/// Blends `spec` into `x`:
///   out = (1 - M) * x + M * ((1 - opacity) * x + opacity * T), clipped to [0,1].
/// `out` may alias `x`.
void apply_trigger(std::span<const float> x, const TriggerSpec& spec, double opacity,
                   std::span<float> out);

std::vector<float> apply_trigger(std::span<const float> x, const TriggerSpec& spec, double opacity);

/// Built-in trigger inventory. Patterns are generated procedurally for any
/// image shape of at least 8x8.
///
///   blend          full-image noise texture, opacity 0.2 / 0.2
///   phoenix        corner emblem, top-left, 0.5 / 0.5
///   firefox        corner ring, top-right, 0.2 / 0.2
///   badnet_patch   3x3 checkerboard, bottom-right, 1.0 / 1.0
///   trojan_square  5x5 framed square, bottom-left, 1.0 / 1.0
///   watermark      sparse diagonal lattice, 0.2 / 0.3
///   pixel_0..3     single coloured pixels, 1.0 / 1.0
std::vector<std::string> builtin_trigger_names();
TriggerSpec make_builtin_trigger(std::string_view name, const ImageShape& shape);

/// Derives a mask from a pattern: a pixel is masked when any channel differs
/// from `background` by more than 1/512.
std::vector<std::uint8_t> mask_from_background(const ImageShape& shape, std::span<const float> pattern,
                                               float background = 0.0f);

/// Loads a trigger from an image file. When `mask_path` is absent the mask is
/// derived from the pattern's background; otherwise any nonzero mask pixel is set.
TriggerSpec load_trigger(std::string name, const std::filesystem::path& pattern_path,
                         const std::optional<std::filesystem::path>& mask_path, const ImageShape& shape,
                         double train_opacity, double test_opacity, float background = 0.0f);

const TriggerSpec& find_trigger(std::span<const TriggerSpec> triggers, std::string_view name);

}  // namespace latsep
