#include "latsep/image.hpp"

#include <algorithm>

#include "latsep/errors.hpp"

namespace latsep {

std::string ImageShape::str() const {
  return std::to_string(height) + "x" + std::to_string(width) + "x" + std::to_string(channels);
}

ImageSet::ImageSet(ImageShape shape, int num_classes, std::size_t count)
    : shape_(shape), num_classes_(num_classes), pixels_(count * shape.size()), labels_(count, 0) {}

ImageSet::ImageSet(ImageShape shape, int num_classes, std::vector<float> pixels,
                   std::vector<int> labels)
    : shape_(shape), num_classes_(num_classes), pixels_(std::move(pixels)), labels_(std::move(labels)) {
  if (pixels_.size() != labels_.size() * shape_.size()) {
    throw InvalidInput("pixel buffer holds " + std::to_string(pixels_.size()) + " values, expected " +
                       std::to_string(labels_.size() * shape_.size()));
  }
  for (int y : labels_) {
    if (y < 0 || y >= num_classes_) throw InvalidInput("label " + std::to_string(y) + " out of range");
  }
}

std::span<float> ImageSet::image(std::size_t i) {
  if (i >= size()) throw InvalidInput("image index " + std::to_string(i) + " out of range");
  return std::span<float>(pixels_).subspan(i * shape_.size(), shape_.size());
}

std::span<const float> ImageSet::image(std::size_t i) const {
  if (i >= size()) throw InvalidInput("image index " + std::to_string(i) + " out of range");
  return std::span<const float>(pixels_).subspan(i * shape_.size(), shape_.size());
}

void ImageSet::set_label(std::size_t i, int label) {
  if (label < 0 || label >= num_classes_) throw InvalidInput("label out of range");
  labels_.at(i) = label;
}

void ImageSet::push_back(std::span<const float> image, int label) {
  if (image.size() != shape_.size()) throw InvalidInput("image size does not match set shape");
  if (label < 0 || label >= num_classes_) throw InvalidInput("label out of range");
  pixels_.insert(pixels_.end(), image.begin(), image.end());
  labels_.push_back(label);
}

ImageSet ImageSet::subset(std::span<const std::size_t> indices) const {
  ImageSet out(shape_, num_classes_);
  out.pixels_.reserve(indices.size() * shape_.size());
  out.labels_.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(image(i), labels_.at(i));
  return out;
}

std::vector<std::size_t> class_counts(const ImageSet& set) {
  std::vector<std::size_t> counts(static_cast<std::size_t>(set.num_classes()), 0);
  for (int y : set.labels()) ++counts[static_cast<std::size_t>(y)];
  return counts;
}

}  // namespace latsep
