#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "latsep/image.hpp"

namespace latsep {

struct DatasetSplits {
  std::string id;
  ImageSet train;
  ImageSet validation;  // clean held-out split used by defenses
  ImageSet test;
};

struct SyntheticOptions {
  std::size_t train_size = 2000;
  std::size_t test_size = 1000;
  int classes = 10;
  int image_size = 16;
  double noise = 0.15;

  bool operator==(const SyntheticOptions&) const = default;
};

struct DatasetOptions {
  std::size_t validation_size = 2000;  // taken from the test split
  std::size_t train_subset = 0;        // 0 keeps the full training split
  SyntheticOptions synthetic;

  bool operator==(const DatasetOptions&) const = default;
};

/// LATSEP_DATA_ROOT if set, else "data".
std::filesystem::path default_data_root();

/// CIFAR-10 binary batches under root or root/cifar-10-batches-bin.
DatasetSplits load_cifar10(const std::filesystem::path& root);

/// GTSRB as class-numbered folders of images under root/gtsrb/{train,test},
/// resized to 32×32.
DatasetSplits load_gtsrb(const std::filesystem::path& root);

/// Ten (by default) procedurally textured classes; labels are learnable from
/// colour and stripe orientation under additive noise.
DatasetSplits make_synthetic(const SyntheticOptions& options, std::uint64_t seed);

/// True when load_dataset(id, root) can find its files.
bool dataset_available(const std::string& id, const std::filesystem::path& root);

/// Dispatches on "cifar10", "gtsrb" or "synthetic", then carves the
/// validation split off the test split and subsamples the training split,
/// both by seeded permutation. Throws IoError naming the expected location
/// when the files are missing.
DatasetSplits load_dataset(const std::string& id, const std::filesystem::path& root, const DatasetOptions& options,
                           std::uint64_t seed);

/// Bilinear resize of one HWC image.
std::vector<float> resize_bilinear(std::span<const float> image, const ImageShape& from, int height, int width);

}  // namespace latsep
