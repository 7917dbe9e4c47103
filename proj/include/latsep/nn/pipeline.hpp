#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "latsep/config.hpp"
#include "latsep/datasets.hpp"
#include "latsep/latent.hpp"
#include "latsep/nn/training.hpp"
#include "latsep/poison.hpp"
#include "latsep/report.hpp"

namespace latsep::nn {

/// Process exit codes of a pipeline stage failure.
enum class StageExit : int {
  ok = 0,
  config = 2,
  poison = 10,
  train = 11,
  defend = 12,
  profile = 13,
  sweep = 14,
  report = 15,
};

int stage_exit_code(std::string_view stage);

struct RunOptions {
  std::filesystem::path data_root = default_data_root();
};

/// Append-only record of completed stages, rewritten atomically on every append.
struct ClassProfile {
  SeparabilityProfile profile;
  std::vector<int> poison;  // 1 for trigger-planted rows, in profile row order
};

class StageLedger {
 public:
  explicit StageLedger(std::filesystem::path path);
  bool done(const std::string& stage) const;
  void record(const std::string& stage, const std::string& artifact);

 private:
  std::filesystem::path path_;
  std::map<std::string, std::string> entries_;
  std::string text_;
};

/// Orchestrates poison → train → defend → retrain → evaluate for every seed and
/// augmentation setting in a run directory:
///
///   config.snapshot, ledger.jsonl, manifest/seed-<s>.json,
///   checkpoints/seed-<s>-<aug>[-<defense>].ckpt, defenses/<name>/seed-<s>-<aug>.json,
///   reports/{report.json, report.txt, profiles/, sweeps/}, figures/
///
/// Completed stages recorded in the ledger are loaded instead of recomputed.
class Pipeline {
 public:
  explicit Pipeline(ExperimentConfig config, RunOptions options = {});
  ~Pipeline();

  const std::filesystem::path& run_dir() const { return run_dir_; }
  const ExperimentConfig& config() const { return config_; }

  /// Creates the run directory or checks that its snapshot matches the config.
  void prepare();

  PoisonedDatasetManifest poison(std::uint64_t seed);
  /// Poisoned training set of a seed, regenerated deterministically.
  const MaterializedDataset& poisoned_data(std::uint64_t seed);
  /// Clean accuracy and ASR of any model on the seed's test split.
  EvalMetrics evaluate_model(std::uint64_t seed, Network& model);
  ModelCheckpoint base_model(std::uint64_t seed, bool augmentation);
  EvalRow defend(std::uint64_t seed, bool augmentation, const DefenseSpec& defense);
  /// Per-class separability profiles of the base model's training latents.
  std::vector<ClassProfile> profiles(std::uint64_t seed, bool augmentation);
  std::vector<SweepPoint> sweep(std::uint64_t seed, bool augmentation);

  /// Every configured (seed, augmentation, defense) row; failed stages become
  /// failure rows. Writes reports/report.json and reports/report.txt.
  EvalReport run();

  /// Report from the rows already on disk; missing rows are marked failed.
  EvalReport collect_report() const;
  void write_report(const EvalReport& report) const;

  /// Profile and sweep stages that failed during run(), as "<stage>: <message>".
  const std::vector<std::string>& auxiliary_failures() const { return aux_failures_; }

 private:
  struct SeedData;
  SeedData& seed_data(std::uint64_t seed);
  ModelCheckpoint& cached_model(std::uint64_t seed, bool augmentation);
  const Matrix& train_latents(std::uint64_t seed, bool augmentation);
  AttackConfig attack_for(const ImageShape& shape) const;
  TrainConfig train_config(std::uint64_t seed, bool augmentation, const std::string& purpose) const;
  EvalRow compute_row(std::uint64_t seed, bool augmentation, const DefenseSpec& defense, Json& details);
  std::string attack_name() const;

  ExperimentConfig config_;
  RunOptions options_;
  std::filesystem::path run_dir_;
  std::unique_ptr<StageLedger> ledger_;
  std::unique_ptr<SeedData> current_;
  std::vector<std::string> aux_failures_;
};

std::string variant_tag(std::uint64_t seed, bool augmentation);

/// Figures for every stored profile: PCA and t-SNE scatters plus oracle SVM
/// signed-distance histograms, one file per (run, class, method). Throws
/// IoError naming the missing stage when no profiles exist.
std::vector<std::filesystem::path> plot_run(const std::filesystem::path& run_dir);

/// Profiles of every class; throws IntegrityError when the manifest does not
/// describe the data the checkpoint was trained on.
std::vector<ClassProfile> separability_report(Network& model, const std::string& checkpoint_digest,
                                                     const ImageSet& data, const PoisonedDatasetManifest& manifest,
                                                     std::uint64_t seed, bool with_tsne);

}  // namespace latsep::nn
