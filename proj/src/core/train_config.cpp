#include "latsep/train_config.hpp"

#include "latsep/errors.hpp"

namespace latsep {

std::string_view to_string(Architecture a) {
  switch (a) {
    case Architecture::resnet20: return "resnet20";
    case Architecture::vgg16: return "vgg16";
    case Architecture::mobilenetv2: return "mobilenetv2";
  }
  return "?";
}

Architecture architecture_from_string(std::string_view s) {
  if (s == "resnet20") return Architecture::resnet20;
  if (s == "vgg16") return Architecture::vgg16;
  if (s == "mobilenetv2") return Architecture::mobilenetv2;
  throw ConfigError("unknown architecture '" + std::string(s) + "'");
}

int latent_dim(Architecture a) {
  switch (a) {
    case Architecture::resnet20: return 64;
    case Architecture::vgg16: return 512;
    case Architecture::mobilenetv2: return 1280;
  }
  return 0;
}

void TrainConfig::validate() const {
  if (epochs <= 0) throw ConfigError("train.epochs must be positive");
  if (batch_size <= 0) throw ConfigError("train.batch_size must be positive");
  if (!(lr > 0.0)) throw ConfigError("train.lr must be positive");
  if (!(decay_factor > 0.0)) throw ConfigError("train.decay_factor must be positive");
  if (momentum < 0.0 || weight_decay < 0.0) throw ConfigError("train.momentum and train.weight_decay must be >= 0");
  int last = 0;
  for (int e : decay_epochs) {
    if (e <= last) throw ConfigError("train.decay_epochs must be strictly increasing and positive");
    if (e >= epochs) throw ConfigError("train.decay_epochs must be below train.epochs");
    last = e;
  }
  if (recipe != "cifar" && recipe != "gtsrb") throw ConfigError("train.recipe must be 'cifar' or 'gtsrb'");
}

double TrainConfig::lr_at(int epoch) const {
  double v = lr;
  for (int e : decay_epochs) {
    if (epoch >= e) v *= decay_factor;
  }
  return v;
}

TrainConfig full_train_config(std::string_view dataset_id) {
  TrainConfig c;
  if (dataset_id == "gtsrb") {
    c.epochs = 100;
    c.decay_epochs = {40, 80};
    c.recipe = "gtsrb";
  }
  return c;
}

TrainConfig desk_train_config() {
  TrainConfig c;
  c.epochs = 30;
  c.decay_epochs = {15, 25};
  return c;
}

}  // namespace latsep
