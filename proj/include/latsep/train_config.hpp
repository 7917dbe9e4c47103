#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace latsep {

enum class Architecture { resnet20, vgg16, mobilenetv2 };

std::string_view to_string(Architecture a);
Architecture architecture_from_string(std::string_view s);
/// Width of the penultimate representation.
int latent_dim(Architecture a);

struct TrainConfig {
  Architecture architecture = Architecture::resnet20;
  int epochs = 200;
  double lr = 0.1;
  std::vector<int> decay_epochs{100, 150};
  double decay_factor = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  int batch_size = 128;
  bool augmentation = true;
  std::string recipe = "cifar";  // "cifar": flip + crop; "gtsrb": rotation
  std::uint64_t seed = 0;

  /// Throws ConfigError unless decay epochs are strictly increasing and below epochs.
  void validate() const;
  double lr_at(int epoch) const;

  bool operator==(const TrainConfig&) const = default;
};

TrainConfig full_train_config(std::string_view dataset_id);
/// 30 epochs with decay at 15 and 25.
TrainConfig desk_train_config();

}  // namespace latsep
