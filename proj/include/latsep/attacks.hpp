#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "latsep/image.hpp"
#include "latsep/poison.hpp"
#include "latsep/trigger.hpp"

namespace latsep {

enum class Strategy {
  none,
  badnet,
  blend,
  trojan,
  tact,
  k_triggers,
  adaptive_blend,
  adaptive_k,
  adaptive_patch,
  adaptive_watermark,
  k_way,
};

std::string_view to_string(Strategy s);
Strategy strategy_from_string(std::string_view s);
bool is_adaptive(Strategy s);

/// A trigger applied at inference time. Without an explicit opacity the
/// trigger's own test opacity is used.
struct TestTrigger {
  std::string id;
  std::optional<double> opacity;

  bool operator==(const TestTrigger&) const = default;
};

struct AttackConfig {
  Strategy strategy = Strategy::none;
  std::vector<TriggerSpec> triggers;
  int target_class = 0;
  double payload_rate = 0.0;
  double cover_rate = 0.0;
  std::optional<std::vector<int>> payload_source_classes;
  std::optional<std::vector<int>> cover_source_classes;
  std::vector<TestTrigger> test_triggers;

  /// Throws ConfigError on an invalid strategy / trigger-set / rate combination.
  void validate(int num_classes) const;
  std::vector<std::string> trigger_ids() const;
};

/// Default configuration of each strategy for a dataset ("cifar10",
/// "gtsrb" or any other id, which gets the CIFAR-10 settings).
AttackConfig preset_attack(Strategy strategy, const ImageShape& shape, std::string_view dataset_id = "cifar10");

PoisonPlan make_attack(const AttackConfig& config, std::span<const int> labels, int num_classes,
                       std::uint64_t seed);

/// Test-time trigger composition: each selected trigger is planted in list
/// order at its test opacity, later triggers blending over earlier ones.
class TriggerComposite {
 public:
  TriggerComposite() = default;
  void add(TriggerSpec spec, double opacity);

  void apply(std::span<const float> x, std::span<float> out) const;
  std::vector<float> operator()(std::span<const float> x) const;
  /// Triggered copy of every image; labels are kept.
  ImageSet apply_all(const ImageSet& set) const;

  bool empty() const { return layers_.empty(); }
  std::size_t size() const { return layers_.size(); }

 private:
  struct Layer {
    TriggerSpec spec;
    double opacity;
  };
  std::vector<Layer> layers_;
};

TriggerComposite make_test_trigger_fn(const AttackConfig& config);

/// Single trigger at an arbitrary opacity, used by opacity sweeps.
TriggerComposite single_trigger_fn(const TriggerSpec& spec, double opacity);

/// ρ_p / (ρ_p + ρ_c): the fraction of trigger-planted training samples that
/// carry the target label.
double expected_asr(const AttackConfig& config);

}  // namespace latsep
