#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "latsep/attacks.hpp"
#include "latsep/datasets.hpp"
#include "latsep/serialize.hpp"
#include "latsep/train_config.hpp"

namespace latsep {

/// A trigger by name: a built-in pattern unless image files are given.
struct TriggerRef {
  std::string name;
  std::optional<std::string> pattern_path;
  std::optional<std::string> mask_path;
  std::optional<double> train_opacity;
  std::optional<double> test_opacity;

  bool operator==(const TriggerRef&) const = default;
};

/// Attack section; unset fields take the strategy's preset values.
struct AttackSettings {
  Strategy strategy = Strategy::none;
  std::optional<std::vector<TriggerRef>> triggers;
  std::optional<int> target_class;
  std::optional<double> payload_rate;
  std::optional<double> cover_rate;
  std::optional<std::vector<int>> payload_source_classes;
  std::optional<std::vector<int>> cover_source_classes;
  std::optional<std::vector<TestTrigger>> test_triggers;

  bool operator==(const AttackSettings&) const = default;
};

struct DefenseSpec {
  std::string name;
  std::map<std::string, double> params;

  bool operator==(const DefenseSpec&) const = default;
};

const std::vector<std::string>& known_defenses();

struct ExperimentConfig {
  std::string dataset = "cifar10";
  DatasetOptions dataset_options;
  AttackSettings attack;
  TrainConfig train;
  std::vector<DefenseSpec> defenses{{"none", {}}};
  std::vector<std::uint64_t> seeds{666, 999, 2333};
  std::vector<bool> augmentation_variants{true, false};
  std::vector<double> sweep_opacities;
  bool profiles = true;
  bool tsne = true;
  std::string output_dir = "runs/default";
  bool desk_scale = false;
  std::string base_dir;  // directory of the config file; relative trigger paths resolve against it

  /// Throws ConfigError naming the offending key.
  void validate() const;
  bool operator==(const ExperimentConfig&) const = default;
};

Json to_json(const TrainConfig& t);
/// Fields present in `j` override `defaults`.
TrainConfig train_from_json(const Json& j, TrainConfig defaults);

Json to_json(const ExperimentConfig& c);
ExperimentConfig config_from_json(const Json& j, const std::string& base_dir = "");

/// Reads a config file, resolving "include" (relative to the including file)
/// and merging the including file over the included one as a JSON merge patch.
Json load_config_json(const std::filesystem::path& path);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Applies "a.b.c=value" overrides; the value is parsed as JSON, falling back to a string.
void apply_override(Json& j, const std::string& assignment);

/// Resolves the attack section into a concrete attack for the given image shape.
AttackConfig resolve_attack(const ExperimentConfig& config, const ImageShape& shape);

}  // namespace latsep
