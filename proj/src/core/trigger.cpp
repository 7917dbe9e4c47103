#include "latsep/trigger.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "latsep/errors.hpp"
#include "latsep/imageio.hpp"
#include "latsep/rng.hpp"

namespace latsep {

void TriggerSpec::validate() const {
  if (name.empty()) throw InvalidInput("trigger without a name");
  if (shape.height <= 0 || shape.width <= 0 || shape.channels <= 0) {
    throw InvalidInput("trigger '" + name + "' has an empty shape");
  }
  if (pattern.size() != shape.size()) throw InvalidInput("trigger '" + name + "' pattern size mismatch");
  if (mask.size() != shape.pixels()) throw InvalidInput("trigger '" + name + "' mask size mismatch");
  for (float v : pattern) {
    if (!(v >= 0.0f && v <= 1.0f)) throw InvalidInput("trigger '" + name + "' pattern outside [0,1]");
  }
  for (auto m : mask) {
    if (m > 1) throw InvalidInput("trigger '" + name + "' mask is not binary");
  }
  auto unit = [](double a) { return a >= 0.0 && a <= 1.0; };
  if (!unit(train_opacity) || !unit(test_opacity)) {
    throw InvalidInput("trigger '" + name + "' opacity outside [0,1]");
  }
}

std::size_t TriggerSpec::mask_area() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

void apply_trigger(std::span<const float> x, const TriggerSpec& spec, double opacity,
                   std::span<float> out) {
  if (x.size() != spec.shape.size() || spec.pattern.size() != x.size() ||
      spec.mask.size() != spec.shape.pixels()) {
    throw InvalidInput("image of " + std::to_string(x.size()) + " values does not match trigger '" +
                       spec.name + "' of shape " + spec.shape.str());
  }
  if (out.size() != x.size()) throw InvalidInput("output buffer size mismatch");
  if (!(opacity >= 0.0 && opacity <= 1.0)) throw InvalidInput("opacity outside [0,1]");

  const auto a = static_cast<float>(opacity);
  const std::size_t channels = static_cast<std::size_t>(spec.shape.channels);
  for (std::size_t p = 0; p < spec.mask.size(); ++p) {
    const std::size_t base = p * channels;
    if (spec.mask[p] == 0) {
      if (out.data() != x.data()) std::copy_n(x.begin() + base, channels, out.begin() + base);
      continue;
    }
    for (std::size_t c = 0; c < channels; ++c) {
      const float v = (1.0f - a) * x[base + c] + a * spec.pattern[base + c];
      out[base + c] = std::clamp(v, 0.0f, 1.0f);
    }
  }
}

std::vector<float> apply_trigger(std::span<const float> x, const TriggerSpec& spec, double opacity) {
  std::vector<float> out(x.size());
  apply_trigger(x, spec, opacity, out);
  return out;
}

namespace {

struct Canvas {
  ImageShape shape;
  std::vector<float> pattern;
  std::vector<std::uint8_t> mask;

  explicit Canvas(const ImageShape& s) : shape(s), pattern(s.size(), 0.0f), mask(s.pixels(), 0) {}

  void set(int r, int c, std::array<float, 3> rgb) {
    if (r < 0 || c < 0 || r >= shape.height || c >= shape.width) return;
    const std::size_t p = static_cast<std::size_t>(r) * shape.width + c;
    mask[p] = 1;
    for (int ch = 0; ch < shape.channels; ++ch) {
      // Grayscale sets take the luminance of the colour.
      pattern[p * shape.channels + ch] =
          shape.channels == 3 ? rgb[static_cast<std::size_t>(ch)]
                              : 0.299f * rgb[0] + 0.587f * rgb[1] + 0.114f * rgb[2];
    }
  }

  TriggerSpec finish(std::string name, double train, double test) && {
    return TriggerSpec{std::move(name), shape, std::move(pattern), std::move(mask), train, test};
  }
};

TriggerSpec blend_trigger(const ImageShape& s) {
  Canvas cv(s);
  Rng rng(0x5eedb1e4dULL, "blend-pattern");
  for (int r = 0; r < s.height; ++r) {
    for (int c = 0; c < s.width; ++c) {
      cv.set(r, c, {static_cast<float>(rng.uniform()), static_cast<float>(rng.uniform()),
                    static_cast<float>(rng.uniform())});
    }
  }
  return std::move(cv).finish("blend", 0.2, 0.2);
}

int emblem_size(const ImageShape& s) { return std::max(4, std::min(s.height, s.width) / 4); }

TriggerSpec phoenix_trigger(const ImageShape& s) {
  Canvas cv(s);
  const int k = emblem_size(s);
  const double centre = (k - 1) / 2.0;
  for (int r = 0; r < k; ++r) {
    for (int c = 0; c < k; ++c) {
      const double d = std::hypot(r - centre, c - centre) / (k / 2.0);
      if (d > 1.0) continue;
      cv.set(1 + r, 1 + c, {1.0f, static_cast<float>(0.9 - 0.7 * d), static_cast<float>(0.2 * (1 - d))});
    }
  }
  return std::move(cv).finish("phoenix", 0.5, 0.5);
}

TriggerSpec firefox_trigger(const ImageShape& s) {
  Canvas cv(s);
  const int k = emblem_size(s);
  const double centre = (k - 1) / 2.0;
  const int left = s.width - 1 - k;
  for (int r = 0; r < k; ++r) {
    for (int c = 0; c < k; ++c) {
      const double d = std::hypot(r - centre, c - centre) / (k / 2.0);
      if (d > 1.0) continue;
      if (d > 0.55) {
        cv.set(1 + r, left + c, {1.0f, 0.55f, 0.0f});
      } else {
        cv.set(1 + r, left + c, {0.1f, 0.25f, 0.8f});
      }
    }
  }
  return std::move(cv).finish("firefox", 0.2, 0.2);
}

TriggerSpec badnet_trigger(const ImageShape& s) {
  Canvas cv(s);
  const int top = s.height - 4;
  const int left = s.width - 4;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      const float v = (r + c) % 2 == 0 ? 1.0f : 0.0f;
      cv.set(top + r, left + c, {v, v, v});
    }
  }
  return std::move(cv).finish("badnet_patch", 1.0, 1.0);
}

TriggerSpec trojan_trigger(const ImageShape& s) {
  Canvas cv(s);
  const int top = s.height - 6;
  for (int r = 0; r < 5; ++r) {
    for (int c = 0; c < 5; ++c) {
      const bool border = r == 0 || c == 0 || r == 4 || c == 4;
      const bool core = r == 2 && c == 2;
      if (border || core) {
        cv.set(top + r, 1 + c, {1.0f, 1.0f, 1.0f});
      } else {
        cv.set(top + r, 1 + c, {0.0f, 0.0f, 0.0f});
      }
    }
  }
  return std::move(cv).finish("trojan_square", 1.0, 1.0);
}

TriggerSpec watermark_trigger(const ImageShape& s) {
  Canvas cv(s);
  for (int r = 0; r < s.height; ++r) {
    for (int c = 0; c < s.width; ++c) {
      if ((r + c) % 6 == 0 || (r - c + 6 * s.width) % 9 == 0) cv.set(r, c, {1.0f, 1.0f, 1.0f});
    }
  }
  return std::move(cv).finish("watermark", 0.2, 0.3);
}

TriggerSpec pixel_trigger(const ImageShape& s, int which) {
  Canvas cv(s);
  const int qh = s.height / 4;
  const int qw = s.width / 4;
  static constexpr std::array<std::array<float, 3>, 4> kColours{{
      {1.0f, 0.0f, 0.0f}, {0.0f, 1.0f, 0.0f}, {0.0f, 0.0f, 1.0f}, {1.0f, 1.0f, 0.0f}}};
  const std::array<std::pair<int, int>, 4> where{{{qh, qw}, {qh, 3 * qw}, {3 * qh, qw}, {3 * qh, 3 * qw}}};
  cv.set(where[static_cast<std::size_t>(which)].first, where[static_cast<std::size_t>(which)].second,
         kColours[static_cast<std::size_t>(which)]);
  return std::move(cv).finish("pixel_" + std::to_string(which), 1.0, 1.0);
}

}  // namespace

std::vector<std::string> builtin_trigger_names() {
  return {"blend",     "phoenix",   "firefox", "badnet_patch", "trojan_square",
          "watermark", "pixel_0",   "pixel_1", "pixel_2",      "pixel_3"};
}

TriggerSpec make_builtin_trigger(std::string_view name, const ImageShape& shape) {
  if (shape.height < 8 || shape.width < 8 || shape.channels <= 0) {
    throw InvalidInput("built-in triggers need images of at least 8x8, got " + shape.str());
  }
  if (name == "blend") return blend_trigger(shape);
  if (name == "phoenix") return phoenix_trigger(shape);
  if (name == "firefox") return firefox_trigger(shape);
  if (name == "badnet_patch") return badnet_trigger(shape);
  if (name == "trojan_square") return trojan_trigger(shape);
  if (name == "watermark") return watermark_trigger(shape);
  for (int i = 0; i < 4; ++i) {
    if (name == "pixel_" + std::to_string(i)) return pixel_trigger(shape, i);
  }
  throw ConfigError("unknown trigger '" + std::string(name) + "'");
}

std::vector<std::uint8_t> mask_from_background(const ImageShape& shape, std::span<const float> pattern,
                                               float background) {
  if (pattern.size() != shape.size()) throw InvalidInput("pattern size does not match shape");
  std::vector<std::uint8_t> mask(shape.pixels(), 0);
  const auto channels = static_cast<std::size_t>(shape.channels);
  for (std::size_t p = 0; p < mask.size(); ++p) {
    for (std::size_t c = 0; c < channels; ++c) {
      if (std::abs(pattern[p * channels + c] - background) > 1.0f / 512.0f) {
        mask[p] = 1;
        break;
      }
    }
  }
  return mask;
}

TriggerSpec load_trigger(std::string name, const std::filesystem::path& pattern_path,
                         const std::optional<std::filesystem::path>& mask_path, const ImageShape& shape,
                         double train_opacity, double test_opacity, float background) {
  LoadedImage img = read_image(pattern_path);
  if (img.shape.height != shape.height || img.shape.width != shape.width) {
    throw InvalidInput("trigger image " + pattern_path.string() + " is " + img.shape.str() +
                       ", dataset images are " + shape.str());
  }
  if (img.shape.channels != shape.channels) {
    if (img.shape.channels == 1 && shape.channels == 3) {
      std::vector<float> rgb(shape.size());
      for (std::size_t p = 0; p < shape.pixels(); ++p) std::fill_n(rgb.begin() + p * 3, 3, img.pixels[p]);
      img.pixels = std::move(rgb);
    } else {
      throw InvalidInput("trigger image " + pattern_path.string() + " has an incompatible channel count");
    }
  }

  TriggerSpec spec{std::move(name), shape, std::move(img.pixels), {}, train_opacity, test_opacity};
  if (mask_path) {
    LoadedImage m = read_image(*mask_path);
    if (m.shape.height != shape.height || m.shape.width != shape.width) {
      throw InvalidInput("mask image " + mask_path->string() + " does not match dataset shape");
    }
    spec.mask.assign(shape.pixels(), 0);
    for (std::size_t p = 0; p < shape.pixels(); ++p) {
      for (int c = 0; c < m.shape.channels; ++c) {
        if (m.pixels[p * m.shape.channels + c] > 0.5f) spec.mask[p] = 1;
      }
    }
  } else {
    spec.mask = mask_from_background(shape, spec.pattern, background);
  }
  spec.validate();
  return spec;
}

const TriggerSpec& find_trigger(std::span<const TriggerSpec> triggers, std::string_view name) {
  for (const auto& t : triggers) {
    if (t.name == name) return t;
  }
  throw ConfigError("trigger '" + std::string(name) + "' is not part of the attack's trigger set");
}

}  // namespace latsep
