#include "latsep/imageio.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <memory>

#include <bit>
#include <cstring>

#include "latsep/errors.hpp"
#include "latsep/fsutil.hpp"
#include "latsep/serialize.hpp"

namespace latsep {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

LoadedImage read_png(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open " + path.string());

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("libpng initialisation failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("malformed PNG " + path.string());
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);

  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  const auto width = static_cast<int>(png_get_image_width(png, info));
  const auto height = static_cast<int>(png_get_image_height(png, info));
  const auto channels = static_cast<int>(png_get_channels(png, info));
  const std::size_t rowbytes = png_get_rowbytes(png, info);

  std::vector<unsigned char> raw(rowbytes * static_cast<std::size_t>(height));
  std::vector<png_bytep> rows(static_cast<std::size_t>(height));
  for (int r = 0; r < height; ++r) rows[static_cast<std::size_t>(r)] = raw.data() + r * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  LoadedImage out{{height, width, channels}, {}};
  out.pixels.resize(out.shape.size());
  for (int r = 0; r < height; ++r) {
    for (int i = 0; i < width * channels; ++i) {
      out.pixels[static_cast<std::size_t>(r) * width * channels + i] =
          static_cast<float>(raw[r * rowbytes + i]) / 255.0f;
    }
  }
  return out;
}

}  // namespace

LoadedImage decode_pnm(std::span<const unsigned char> bytes) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&] {
    skip_space();
    int v = 0;
    bool any = false;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos++] - '0');
      any = true;
    }
    if (!any) throw IoError("malformed PNM header");
    return v;
  };

  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '6' && bytes[1] != '5')) {
    throw IoError("not a binary PPM/PGM image");
  }
  const int channels = bytes[1] == '6' ? 3 : 1;
  pos = 2;
  const int width = read_int();
  const int height = read_int();
  const int maxval = read_int();
  ++pos;  // single whitespace before raster
  if (maxval <= 0 || maxval > 65535) throw IoError("unsupported PNM maxval");
  const int bpp = maxval > 255 ? 2 : 1;

  LoadedImage out{{height, width, channels}, {}};
  const std::size_t count = out.shape.size();
  if (bytes.size() < pos + count * bpp) throw IoError("truncated PNM raster");
  out.pixels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    unsigned v = bytes[pos + i * bpp];
    if (bpp == 2) v = (v << 8) | bytes[pos + i * bpp + 1];
    out.pixels[i] = static_cast<float>(v) / static_cast<float>(maxval);
  }
  return out;
}

LoadedImage read_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  unsigned char magic[8] = {};
  in.read(reinterpret_cast<char*>(magic), sizeof magic);
  if (in.gcount() >= 8 && png_sig_cmp(magic, 0, 8) == 0) return read_png(path);

  in.clear();
  in.seekg(0);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_pnm(bytes);
}

void write_png(const std::filesystem::path& path, const ImageShape& shape,
               std::span<const float> pixels) {
  if (pixels.size() != shape.size()) throw InvalidInput("pixel count does not match shape");
  if (shape.channels != 1 && shape.channels != 3) throw InvalidInput("PNG export needs 1 or 3 channels");

  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("libpng initialisation failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("PNG encoding failed for " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(shape.width), static_cast<png_uint_32>(shape.height), 8,
               shape.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  const std::size_t stride = static_cast<std::size_t>(shape.width) * shape.channels;
  std::vector<unsigned char> row(stride);
  for (int r = 0; r < shape.height; ++r) {
    for (std::size_t i = 0; i < stride; ++i) {
      const float v = std::clamp(pixels[r * stride + i], 0.0f, 1.0f);
      row[i] = static_cast<unsigned char>(std::lround(v * 255.0f));
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

namespace {

constexpr std::string_view kSetMagic = "LATSEP-IMAGESET 1\n";
static_assert(std::endian::native == std::endian::little, "image set layout assumes a little-endian host");

}  // namespace

std::string encode_image_set(const ImageSet& set) {
  Json header;
  header["height"] = set.shape().height;
  header["width"] = set.shape().width;
  header["channels"] = set.shape().channels;
  header["num_classes"] = set.num_classes();
  header["count"] = set.size();
  std::string out(kSetMagic);
  out += header.dump();
  out += '\n';
  const std::size_t labels_at = out.size();
  const std::size_t pixels_at = labels_at + set.size() * sizeof(std::int32_t);
  out.resize(pixels_at + set.pixels().size() * sizeof(float));
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto y = static_cast<std::int32_t>(set.label(i));
    std::memcpy(out.data() + labels_at + i * sizeof(y), &y, sizeof(y));
  }
  if (!set.pixels().empty()) std::memcpy(out.data() + pixels_at, set.pixels().data(), set.pixels().size_bytes());
  return out;
}

ImageSet decode_image_set(std::string_view bytes) {
  if (!bytes.starts_with(kSetMagic)) throw IntegrityError("not an image set container");
  bytes.remove_prefix(kSetMagic.size());
  const auto eol = bytes.find('\n');
  if (eol == std::string_view::npos) throw IntegrityError("image set header is truncated");
  ImageShape shape;
  int classes = 0;
  std::size_t count = 0;
  try {
    const Json header = Json::parse(bytes.substr(0, eol));
    shape = {header.at("height").get<int>(), header.at("width").get<int>(), header.at("channels").get<int>()};
    classes = header.at("num_classes").get<int>();
    count = header.at("count").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(std::string("image set header: ") + e.what());
  }
  if (shape.height <= 0 || shape.width <= 0 || shape.channels <= 0 || classes <= 0) {
    throw IntegrityError("image set header has a non-positive dimension");
  }
  bytes.remove_prefix(eol + 1);
  const std::size_t label_bytes = count * sizeof(std::int32_t);
  const std::size_t pixel_count = count * shape.size();
  if (bytes.size() != label_bytes + pixel_count * sizeof(float)) {
    throw IntegrityError("image set body holds " + std::to_string(bytes.size()) + " bytes, expected " +
                         std::to_string(label_bytes + pixel_count * sizeof(float)));
  }
  std::vector<int> labels(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::int32_t y = 0;
    std::memcpy(&y, bytes.data() + i * sizeof(y), sizeof(y));
    labels[i] = y;
  }
  std::vector<float> pixels(pixel_count);
  if (pixel_count > 0) std::memcpy(pixels.data(), bytes.data() + label_bytes, pixel_count * sizeof(float));
  try {
    return ImageSet(shape, classes, std::move(pixels), std::move(labels));
  } catch (const InvalidInput& e) {
    throw IntegrityError(std::string("image set body: ") + e.what());
  }
}

void write_image_set(const std::filesystem::path& path, const ImageSet& set) {
  write_file_atomic(path, encode_image_set(set));
}

ImageSet read_image_set(const std::filesystem::path& path) { return decode_image_set(read_file(path)); }

}  // namespace latsep
