#include "latsep/datasets.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <numeric>

#include "latsep/errors.hpp"
#include "latsep/imageio.hpp"
#include "latsep/rng.hpp"

namespace latsep {

namespace fs = std::filesystem;

fs::path default_data_root() {
  if (const char* env = std::getenv("LATSEP_DATA_ROOT"); env && *env) return env;
  return "data";
}

namespace {

constexpr ImageShape kCifarShape{32, 32, 3};

fs::path cifar_dir(const fs::path& root) {
  if (fs::exists(root / "cifar-10-batches-bin" / "test_batch.bin")) return root / "cifar-10-batches-bin";
  return root;
}

void read_cifar_batch(const fs::path& path, ImageSet& out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open CIFAR-10 batch " + path.string());
  constexpr std::size_t kRecord = 1 + 32 * 32 * 3;
  std::vector<unsigned char> rec(kRecord);
  std::vector<float> img(kCifarShape.size());
  while (in.read(reinterpret_cast<char*>(rec.data()), kRecord)) {
    const int label = rec[0];
    if (label > 9) throw IoError("corrupt CIFAR-10 batch " + path.string());
    // Stored channel-planar; convert to HWC.
    for (int c = 0; c < 3; ++c) {
      for (int p = 0; p < 32 * 32; ++p) {
        img[static_cast<std::size_t>(p * 3 + c)] = static_cast<float>(rec[1 + c * 1024 + p]) / 255.0f;
      }
    }
    out.push_back(img, label);
  }
  if (in.gcount() != 0) throw IoError("truncated CIFAR-10 batch " + path.string());
}

void read_class_folders(const fs::path& dir, ImageSet& out) {
  if (!fs::is_directory(dir)) throw IoError("missing GTSRB directory " + dir.string());
  std::vector<std::pair<int, fs::path>> files;
  for (const auto& cls : fs::directory_iterator(dir)) {
    if (!cls.is_directory()) continue;
    const int label = std::stoi(cls.path().filename().string());
    for (const auto& f : fs::directory_iterator(cls.path())) {
      const auto ext = f.path().extension().string();
      if (ext == ".png" || ext == ".ppm" || ext == ".pgm") files.emplace_back(label, f.path());
    }
  }
  std::sort(files.begin(), files.end());
  for (const auto& [label, path] : files) {
    LoadedImage im = read_image(path);
    std::vector<float> px = resize_bilinear(im.pixels, im.shape, 32, 32);
    if (im.shape.channels == 1) {
      std::vector<float> rgb(32 * 32 * 3);
      for (std::size_t p = 0; p < 32 * 32; ++p) rgb[3 * p] = rgb[3 * p + 1] = rgb[3 * p + 2] = px[p];
      px = std::move(rgb);
    }
    out.push_back(px, label);
  }
}

std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed, std::string_view stream) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed, stream);
  rng.shuffle(idx.begin(), idx.end());
  return idx;
}

}  // namespace

std::vector<float> resize_bilinear(std::span<const float> image, const ImageShape& from, int height, int width) {
  if (image.size() != from.size()) throw InvalidInput("image size does not match its shape");
  std::vector<float> out(static_cast<std::size_t>(height) * width * from.channels);
  const double sy = static_cast<double>(from.height) / height;
  const double sx = static_cast<double>(from.width) / width;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(from.height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, from.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(from.width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, from.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < from.channels; ++c) {
        auto at = [&](int yy, int xx) {
          return static_cast<double>(image[(static_cast<std::size_t>(yy) * from.width + xx) * from.channels + c]);
        };
        const double v = (1 - wy) * ((1 - wx) * at(y0, x0) + wx * at(y0, x1)) +
                         wy * ((1 - wx) * at(y1, x0) + wx * at(y1, x1));
        out[(static_cast<std::size_t>(y) * width + x) * from.channels + c] = static_cast<float>(v);
      }
    }
  }
  return out;
}

DatasetSplits load_cifar10(const fs::path& root) {
  const fs::path dir = cifar_dir(root);
  DatasetSplits s;
  s.id = "cifar10";
  s.train = ImageSet(kCifarShape, 10);
  s.test = ImageSet(kCifarShape, 10);
  for (int b = 1; b <= 5; ++b) read_cifar_batch(dir / ("data_batch_" + std::to_string(b) + ".bin"), s.train);
  read_cifar_batch(dir / "test_batch.bin", s.test);
  return s;
}

DatasetSplits load_gtsrb(const fs::path& root) {
  DatasetSplits s;
  s.id = "gtsrb";
  s.train = ImageSet(kCifarShape, 43);
  s.test = ImageSet(kCifarShape, 43);
  read_class_folders(root / "gtsrb" / "train", s.train);
  read_class_folders(root / "gtsrb" / "test", s.test);
  return s;
}

DatasetSplits make_synthetic(const SyntheticOptions& opt, std::uint64_t seed) {
  if (opt.classes < 2 || opt.image_size < 8) throw InvalidInput("synthetic data needs >= 2 classes and size >= 8");
  const ImageShape shape{opt.image_size, opt.image_size, 3};
  Rng palette_rng(seed, "synthetic-palette");
  std::vector<std::array<float, 3>> colour(static_cast<std::size_t>(opt.classes));
  std::vector<double> angle(static_cast<std::size_t>(opt.classes));
  for (int k = 0; k < opt.classes; ++k) {
    for (auto& c : colour[static_cast<std::size_t>(k)]) c = static_cast<float>(0.2 + 0.6 * palette_rng.uniform());
    angle[static_cast<std::size_t>(k)] = std::numbers::pi * k / opt.classes;
  }

  auto fill = [&](ImageSet& set, std::size_t count, std::string_view stream) {
    Rng rng(seed, stream);
    std::vector<float> img(shape.size());
    for (std::size_t i = 0; i < count; ++i) {
      const int k = static_cast<int>(i % static_cast<std::size_t>(opt.classes));
      const double phase = 2.0 * std::numbers::pi * rng.uniform();
      const double freq = 0.7 + 0.3 * rng.uniform();
      const double ca = std::cos(angle[static_cast<std::size_t>(k)]);
      const double sa = std::sin(angle[static_cast<std::size_t>(k)]);
      for (int y = 0; y < shape.height; ++y) {
        for (int x = 0; x < shape.width; ++x) {
          const double stripe = 0.5 + 0.5 * std::sin(freq * (ca * x + sa * y) + phase);
          for (int c = 0; c < 3; ++c) {
            const double v = colour[static_cast<std::size_t>(k)][static_cast<std::size_t>(c)] * (0.6 + 0.4 * stripe) +
                             opt.noise * rng.normal();
            img[(static_cast<std::size_t>(y) * shape.width + x) * 3 + c] = static_cast<float>(std::clamp(v, 0.0, 1.0));
          }
        }
      }
      set.push_back(img, k);
    }
  };

  DatasetSplits s;
  s.id = "synthetic";
  s.train = ImageSet(shape, opt.classes);
  s.test = ImageSet(shape, opt.classes);
  fill(s.train, opt.train_size, "synthetic-train");
  fill(s.test, opt.test_size, "synthetic-test");
  return s;
}

bool dataset_available(const std::string& id, const fs::path& root) {
  if (id == "synthetic") return true;
  if (id == "cifar10") return fs::exists(cifar_dir(root) / "test_batch.bin");
  if (id == "gtsrb") return fs::is_directory(root / "gtsrb" / "train") && fs::is_directory(root / "gtsrb" / "test");
  return false;
}

DatasetSplits load_dataset(const std::string& id, const fs::path& root, const DatasetOptions& options,
                           std::uint64_t seed) {
  DatasetSplits s;
  if (id == "synthetic") {
    s = make_synthetic(options.synthetic, seed);
  } else if (id == "cifar10" || id == "gtsrb") {
    if (!dataset_available(id, root)) {
      throw IoError("dataset '" + id + "' not found under " + root.string() +
                    (id == "cifar10" ? " (expected cifar-10-batches-bin/*.bin; set LATSEP_DATA_ROOT)"
                                     : " (expected gtsrb/train/<class>/ and gtsrb/test/<class>/; set LATSEP_DATA_ROOT)"));
    }
    s = id == "cifar10" ? load_cifar10(root) : load_gtsrb(root);
  } else {
    throw ConfigError("unknown dataset '" + id + "'");
  }

  if (options.validation_size > 0) {
    if (options.validation_size >= s.test.size()) throw ConfigError("validation_size must be below the test-set size");
    auto perm = permutation(s.test.size(), seed, "validation-split");
    std::vector<std::size_t> val(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(options.validation_size));
    std::vector<std::size_t> rest(perm.begin() + static_cast<std::ptrdiff_t>(options.validation_size), perm.end());
    std::sort(val.begin(), val.end());
    std::sort(rest.begin(), rest.end());
    s.validation = s.test.subset(val);
    s.test = s.test.subset(rest);
  } else {
    s.validation = ImageSet(s.test.shape(), s.test.num_classes());
  }
  if (options.train_subset > 0 && options.train_subset < s.train.size()) {
    auto perm = permutation(s.train.size(), seed, "train-subset");
    perm.resize(options.train_subset);
    std::sort(perm.begin(), perm.end());
    s.train = s.train.subset(perm);
  }
  return s;
}

}  // namespace latsep
