#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace latsep {

/// Height × width × channels. Pixels are stored row-major, channels last.
struct ImageShape {
  int height = 0;
  int width = 0;
  int channels = 0;

  std::size_t pixels() const { return static_cast<std::size_t>(height) * width; }
  std::size_t size() const { return pixels() * channels; }
  bool operator==(const ImageShape&) const = default;
  std::string str() const;
};

/// A labeled set of equally shaped images with values in [0,1].
class ImageSet {
 public:
  ImageSet() = default;
  ImageSet(ImageShape shape, int num_classes, std::size_t count = 0);
  ImageSet(ImageShape shape, int num_classes, std::vector<float> pixels, std::vector<int> labels);

  const ImageShape& shape() const { return shape_; }
  int num_classes() const { return num_classes_; }
  std::size_t size() const { return labels_.size(); }
  bool empty() const { return labels_.empty(); }

  std::span<float> image(std::size_t i);
  std::span<const float> image(std::size_t i) const;

  int label(std::size_t i) const { return labels_.at(i); }
  void set_label(std::size_t i, int label);
  const std::vector<int>& labels() const { return labels_; }

  std::span<const float> pixels() const { return pixels_; }
  std::span<float> pixels() { return pixels_; }

  void push_back(std::span<const float> image, int label);

  /// Copies the listed samples, in the listed order.
  ImageSet subset(std::span<const std::size_t> indices) const;

  bool operator==(const ImageSet&) const = default;

 private:
  ImageShape shape_;
  int num_classes_ = 0;
  std::vector<float> pixels_;
  std::vector<int> labels_;
};

/// Count of samples per label, indexed by class id.
std::vector<std::size_t> class_counts(const ImageSet& set);

}  // namespace latsep
