#pragma once

#include <torch/torch.h>

#include <array>
#include <string>

#include "latsep/image.hpp"
#include "latsep/train_config.hpp"

namespace latsep::nn {

/// Image classifier F = head ∘ features. Inputs are NCHW in [0,1]; per-channel
/// normalisation happens inside the model. The pooled representation passes
/// through `channel_mask` (all ones unless pruned) before the head.
class NetworkImpl : public torch::nn::Module {
 public:
  NetworkImpl(Architecture architecture, int num_classes, ImageShape shape);

  torch::Tensor forward(const torch::Tensor& x);
  /// Penultimate representation, before the channel mask.
  torch::Tensor features(const torch::Tensor& x);
  /// Head applied to (masked) representations.
  torch::Tensor classify(const torch::Tensor& latent);

  Architecture architecture() const { return architecture_; }
  int num_classes() const { return num_classes_; }
  const ImageShape& input_shape() const { return shape_; }
  int latent_dim() const;

  torch::Tensor channel_mask;

 private:
  Architecture architecture_;
  int num_classes_;
  ImageShape shape_;
  torch::Tensor mean_;
  torch::Tensor std_;
  torch::nn::Sequential body_{nullptr};
  torch::nn::Linear head_{nullptr};
};
TORCH_MODULE(Network);

Network make_network(Architecture architecture, int num_classes, const ImageShape& shape);

/// Deep copy including buffers (batch-norm statistics, channel mask).
Network clone_network(const Network& net);

/// Parameters and buffers as a torch archive.
std::string serialize_weights(const Network& net);
void load_weights(Network& net, const std::string& blob);

/// Makes CPU execution single-threaded and seeds torch's generator.
void seed_torch(std::uint64_t seed);

}  // namespace latsep::nn
