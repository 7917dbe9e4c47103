#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "latsep/attacks.hpp"
#include "latsep/image.hpp"
#include "latsep/linalg.hpp"
#include "latsep/nn/models.hpp"
#include "latsep/rng.hpp"
#include "latsep/train_config.hpp"

namespace latsep::nn {

/// NCHW float tensor of the listed samples (all samples when `indices` is empty).
torch::Tensor to_tensor(const ImageSet& data, std::span<const std::size_t> indices = {});
torch::Tensor label_tensor(const ImageSet& data, std::span<const std::size_t> indices = {});

/// In-place training-time augmentation of an NCHW batch. "cifar": random crop
/// after zero padding by H/8 plus horizontal flip; "gtsrb": rotation by up to ±15°.
void augment_batch(torch::Tensor& batch, const std::string& recipe, Rng& rng);

/// A trained model with the provenance needed to reuse it.
struct ModelCheckpoint {
  TrainConfig config;
  std::string dataset_digest;
  std::map<std::string, double> metrics;  // final train_loss, train_accuracy, ...
  Network model{nullptr};
};

/// Per-batch loss from logits and targets; defaults to mean cross-entropy.
using LossFn = std::function<torch::Tensor(const torch::Tensor& logits, const torch::Tensor& targets)>;

struct EpochStats {
  double loss = 0.0;
  double accuracy = 0.0;
};

/// One pass over `data` in a seeded random order. Throws TrainingError with
/// `epoch` when the loss is not finite.
EpochStats train_epoch(Network& model, torch::optim::SGD& optimizer, const ImageSet& data, int batch_size,
                       const std::optional<std::string>& augmentation_recipe, Rng& rng, int epoch,
                       const LossFn& loss = {});

torch::optim::SGD make_sgd(Network& model, const TrainConfig& config, double lr);
void set_lr(torch::optim::SGD& optimizer, double lr);

/// SGD training from scratch under `config`; the seed fixes weight
/// initialisation, sample order and augmentation draws.
ModelCheckpoint train(const ImageSet& data, int num_classes, const TrainConfig& config,
                      const std::string& dataset_digest);

/// File layout: magic line, header length line, JSON header, torch archive.
void save_checkpoint(const std::filesystem::path& path, const ModelCheckpoint& checkpoint);
ModelCheckpoint load_checkpoint(const std::filesystem::path& path);

/// Softmax outputs in evaluation mode.
torch::Tensor predict_proba(Network& model, const torch::Tensor& inputs, int batch_size = 256);
std::vector<int> predict(Network& model, const ImageSet& data, int batch_size = 256);

/// Penultimate representation of every sample, one row each.
Matrix extract_latents(Network& model, const ImageSet& data, int batch_size = 256);

struct EvalMetrics {
  double clean_accuracy = 0.0;
  std::optional<double> asr;
  std::size_t asr_samples = 0;  // non-target test samples that were triggered
};

/// Clean accuracy over all of `test`; ASR over triggered test samples whose
/// true label differs from `target`.
EvalMetrics evaluate(Network& model, const ImageSet& test, const TriggerComposite* trigger, int target);

struct SweepPoint {
  double opacity = 0.0;
  double asr = 0.0;
};

/// ASR of a single trigger planted at each test opacity.
std::vector<SweepPoint> asr_opacity_sweep(Network& model, const ImageSet& test, const TriggerSpec& trigger,
                                          std::span<const double> opacities, int target);

}  // namespace latsep::nn
