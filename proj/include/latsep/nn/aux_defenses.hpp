#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "latsep/cleansers.hpp"
#include "latsep/nn/models.hpp"
#include "latsep/nn/training.hpp"
#include "latsep/poison.hpp"

namespace latsep::nn {

struct StripOptions {
  int overlays = 64;
  double fpr = 0.10;
  std::uint64_t seed = 0;
};

/// Mean prediction entropy of each sample over `overlays` superpositions
/// 0.5·(x + p) with images p drawn from `pool`.
std::vector<double> strip_entropies(Network& model, const ImageSet& samples, const ImageSet& pool, int overlays,
                                    std::uint64_t seed);

/// STRIP as a training-set cleanser, calibrated on the clean validation split.
CleanseResult strip_cleanser(Network& model, const ImageSet& train, const ImageSet& validation,
                             const StripOptions& options = {});

struct StripFilterResult {
  double threshold = 0.0;
  double elimination_rate = 0.0;  // triggered inputs rejected
  double sacrifice_rate = 0.0;    // clean inputs rejected
  std::vector<bool> poison_rejected;
  std::vector<bool> clean_rejected;
};

/// STRIP as an inference-time filter: threshold from `calibration` at the
/// target FPR, then accept/reject clean and triggered test inputs.
StripFilterResult strip_filter(Network& model, const ImageSet& calibration, const ImageSet& clean_inputs,
                               const ImageSet& poison_inputs, const StripOptions& options = {});

struct NeuralCleanseOptions {
  int epochs = 30;
  int patience = 5;
  int batch_size = 32;
  double init_cost = 1e-3;
  double success_threshold = 0.99;
  double cost_multiplier = 1.5;
  double lr = 0.1;
  double anomaly_threshold = 2.0;
  std::uint64_t seed = 0;
};

struct ReversedTrigger {
  torch::Tensor mask;     // 1×H×W in [0,1]
  torch::Tensor pattern;  // C×H×W in [0,1]
  double norm = 0.0;      // L1 norm of the mask; +inf when no mask reached the success threshold
  double attack_success = 0.0;
};

struct NCResult {
  std::vector<ReversedTrigger> triggers;  // per class
  std::vector<double> mask_norms;
  std::vector<double> anomaly_indices;
  std::optional<int> selected_target;
  NeuralCleanseOptions options;
};

/// Reverse-engineers a minimal trigger towards every class and applies the
/// median-absolute-deviation outlier rule to the mask norms.
NCResult neural_cleanse(Network& model, const ImageSet& validation, const NeuralCleanseOptions& options = {});

/// Stamps `trigger` onto an NCHW batch: (1 - m)·x + m·p.
torch::Tensor apply_reversed(const torch::Tensor& x, const ReversedTrigger& trigger);

struct UnlearnOptions {
  double patched_fraction = 0.2;
  int epochs = 1;
  double lr = 1e-2;
  int batch_size = 128;
  std::uint64_t seed = 0;
};

/// Fine-tunes a copy of `model` on `clean` with the reversed trigger stamped on
/// a fraction of the samples, all keeping their true labels.
Network nc_unlearn(const Network& model, const ReversedTrigger& trigger, const ImageSet& clean,
                   const TrainConfig& base, const UnlearnOptions& options = {});

struct FinePruneResult {
  Network model{nullptr};
  std::vector<int> pruned_channels;  // in pruning order
  double probe_accuracy_before = 0.0;
  double probe_accuracy_after = 0.0;
};

/// Zeroes final-layer feature channels in increasing order of mean activation
/// on the probe set while probe accuracy stays at least (1 - max_ca_drop)
/// times its starting value.
FinePruneResult fine_prune(const Network& model, const ImageSet& probe, double max_ca_drop = 0.10);

struct AblOptions {
  std::size_t isolate = 500;
  int isolation_epochs = 20;
  double isolation_lr = 0.1;
  double flooding = 0.5;
  int finetune_epochs = 60;
  std::vector<int> finetune_decay_epochs{40};
  double finetune_lr = 0.1;
  int unlearn_epochs = 5;
  double unlearn_lr = 5e-4;
};

struct AblResult {
  Network model{nullptr};
  std::vector<std::size_t> isolated;  // sorted
  std::optional<double> isolation_precision;
};

/// Anti-backdoor learning: flooded training, isolation of the lowest-loss
/// samples, fine-tuning on the rest and gradient ascent on the isolated set.
/// Throws TrainingError tagged with the stage on divergence.
AblResult abl(const ImageSet& data, int num_classes, const PoisonPlan* plan, const TrainConfig& base,
              const AblOptions& options = {});

}  // namespace latsep::nn
