#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "latsep/image.hpp"

namespace latsep {

struct LoadedImage {
  ImageShape shape;
  std::vector<float> pixels;  // HWC, [0,1]
};

/// Reads PNG (8/16-bit gray, gray+alpha, RGB, RGBA) or binary PPM/PGM.
/// Alpha channels are dropped.
LoadedImage read_image(const std::filesystem::path& path);

/// Writes an 8-bit PNG. Values are clipped to [0,1] and rounded.
void write_png(const std::filesystem::path& path, const ImageShape& shape,
               std::span<const float> pixels);

/// Reads a binary PPM (P6) or PGM (P5) from memory.
LoadedImage decode_pnm(std::span<const unsigned char> bytes);

/// Lossless container for a labeled set: a "LATSEP-IMAGESET 1" line, a JSON
/// header line (shape, classes, count), int32 labels, then float32 pixels.
std::string encode_image_set(const ImageSet& set);
/// Throws IntegrityError on a malformed or truncated container.
ImageSet decode_image_set(std::string_view bytes);
void write_image_set(const std::filesystem::path& path, const ImageSet& set);
ImageSet read_image_set(const std::filesystem::path& path);

}  // namespace latsep
