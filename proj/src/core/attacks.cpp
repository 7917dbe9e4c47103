#include "latsep/attacks.hpp"

#include <algorithm>
#include <array>
#include <utility>

#include "latsep/errors.hpp"

namespace latsep {

namespace {

constexpr std::array<std::pair<Strategy, std::string_view>, 11> kStrategyNames{{
    {Strategy::none, "none"},
    {Strategy::badnet, "badnet"},
    {Strategy::blend, "blend"},
    {Strategy::trojan, "trojan"},
    {Strategy::tact, "tact"},
    {Strategy::k_triggers, "k_triggers"},
    {Strategy::adaptive_blend, "adaptive_blend"},
    {Strategy::adaptive_k, "adaptive_k"},
    {Strategy::adaptive_patch, "adaptive_patch"},
    {Strategy::adaptive_watermark, "adaptive_watermark"},
    {Strategy::k_way, "k_way"},
}};

bool multi_trigger(Strategy s) {
  return s == Strategy::k_triggers || s == Strategy::adaptive_k || s == Strategy::k_way;
}

TriggerSpec with_opacity(TriggerSpec spec, double train, double test) {
  spec.train_opacity = train;
  spec.test_opacity = test;
  return spec;
}

}  // namespace

std::string_view to_string(Strategy s) {
  for (auto [k, v] : kStrategyNames) {
    if (k == s) return v;
  }
  return "none";
}

Strategy strategy_from_string(std::string_view s) {
  for (auto [k, v] : kStrategyNames) {
    if (v == s) return k;
  }
  throw ConfigError("unknown attack strategy '" + std::string(s) + "'");
}

bool is_adaptive(Strategy s) {
  return s == Strategy::adaptive_blend || s == Strategy::adaptive_k || s == Strategy::adaptive_patch ||
         s == Strategy::adaptive_watermark;
}

std::vector<std::string> AttackConfig::trigger_ids() const {
  std::vector<std::string> ids;
  for (const auto& t : triggers) ids.push_back(t.name);
  return ids;
}

void AttackConfig::validate(int num_classes) const {
  const std::string name(to_string(strategy));
  auto fail = [&](const std::string& why) { throw ConfigError("attack '" + name + "': " + why); };

  if (target_class < 0 || target_class >= num_classes) fail("target class out of range");
  if (payload_rate < 0.0 || cover_rate < 0.0 || payload_rate + cover_rate >= 1.0) fail("invalid rates");

  if (strategy == Strategy::none) {
    if (payload_rate != 0.0 || cover_rate != 0.0) fail("a no-poison configuration must have zero rates");
    return;
  }

  if (triggers.empty()) fail("no triggers");
  for (const auto& t : triggers) {
    try {
      t.validate();
    } catch (const InvalidInput& e) {
      fail(e.what());
    }
    if (!(t.shape == triggers.front().shape)) fail("triggers have different shapes");
  }
  for (std::size_t i = 0; i < triggers.size(); ++i) {
    for (std::size_t j = i + 1; j < triggers.size(); ++j) {
      if (triggers[i].name == triggers[j].name) fail("duplicate trigger '" + triggers[i].name + "'");
    }
  }

  if (multi_trigger(strategy)) {
    if (triggers.size() < 2) fail("needs a set of at least 2 triggers");
  } else if (triggers.size() != 1) {
    fail("takes exactly one trigger");
  }

  if (is_adaptive(strategy) && cover_rate <= 0.0) fail("adaptive strategies need a positive cover rate");
  if ((strategy == Strategy::badnet || strategy == Strategy::blend || strategy == Strategy::trojan ||
       strategy == Strategy::k_triggers) &&
      cover_rate != 0.0) {
    fail("naive strategies have no cover samples");
  }
  if (strategy == Strategy::tact && (!payload_source_classes || !cover_source_classes)) {
    fail("needs payload and cover source classes");
  }

  if (test_triggers.empty()) fail("no test-time triggers");
  for (const auto& tt : test_triggers) {
    if (std::none_of(triggers.begin(), triggers.end(), [&](const TriggerSpec& t) { return t.name == tt.id; })) {
      fail("test trigger '" + tt.id + "' is not in the trigger set");
    }
    if (tt.opacity && !(*tt.opacity >= 0.0 && *tt.opacity <= 1.0)) fail("test opacity outside [0,1]");
  }
}

AttackConfig preset_attack(Strategy strategy, const ImageShape& shape, std::string_view dataset_id) {
  AttackConfig cfg;
  cfg.strategy = strategy;
  cfg.target_class = 0;
  const double rate = 0.005;

  auto single = [&](std::string_view trigger) {
    cfg.triggers = {make_builtin_trigger(trigger, shape)};
    cfg.test_triggers = {{std::string(trigger), std::nullopt}};
  };
  auto k_set = [&] {
    cfg.triggers = {
        with_opacity(make_builtin_trigger("phoenix", shape), 0.5, 0.5),
        with_opacity(make_builtin_trigger("firefox", shape), 0.2, 0.2),
        with_opacity(make_builtin_trigger("badnet_patch", shape), 0.5, 1.0),
        with_opacity(make_builtin_trigger("trojan_square", shape), 0.3, 1.0),
    };
    if (dataset_id == "gtsrb") {
      cfg.test_triggers = {{"firefox", 1.0}, {"trojan_square", 1.0}};
    } else {
      cfg.test_triggers = {{"badnet_patch", std::nullopt}, {"trojan_square", std::nullopt}};
    }
  };

  switch (strategy) {
    case Strategy::none:
      break;
    case Strategy::badnet:
      single("badnet_patch");
      cfg.payload_rate = rate;
      break;
    case Strategy::blend:
      single("blend");
      cfg.payload_rate = rate;
      break;
    case Strategy::trojan:
      single("trojan_square");
      cfg.payload_rate = rate;
      break;
    case Strategy::tact:
      single("trojan_square");
      cfg.payload_rate = rate;
      cfg.cover_rate = rate;
      cfg.payload_source_classes = std::vector<int>{1};
      cfg.cover_source_classes = std::vector<int>{5, 7};
      break;
    case Strategy::k_triggers:
      k_set();
      cfg.payload_rate = rate;
      break;
    case Strategy::adaptive_blend:
      single("blend");
      cfg.payload_rate = rate;
      cfg.cover_rate = rate;
      break;
    case Strategy::adaptive_k:
      k_set();
      cfg.payload_rate = rate;
      cfg.cover_rate = 2 * rate;
      break;
    case Strategy::adaptive_patch:
      single("badnet_patch");
      cfg.payload_rate = rate;
      cfg.cover_rate = rate;
      break;
    case Strategy::adaptive_watermark:
      single("watermark");
      cfg.payload_rate = rate;
      cfg.cover_rate = rate;
      break;
    case Strategy::k_way:
      for (int i = 0; i < 4; ++i) {
        cfg.triggers.push_back(make_builtin_trigger("pixel_" + std::to_string(i), shape));
        cfg.test_triggers.push_back({"pixel_" + std::to_string(i), std::nullopt});
      }
      cfg.payload_rate = rate;
      cfg.cover_rate = rate;
      break;
  }
  return cfg;
}

PoisonPlan make_attack(const AttackConfig& config, std::span<const int> labels, int num_classes,
                       std::uint64_t seed) {
  config.validate(num_classes);
  const auto ids = config.trigger_ids();
  SourceConstraints constraints{config.payload_source_classes, config.cover_source_classes};
  return build_plan(labels, num_classes, config.target_class, {config.payload_rate, config.cover_rate}, ids, seed,
                    constraints);
}

void TriggerComposite::add(TriggerSpec spec, double opacity) {
  spec.validate();
  if (!(opacity >= 0.0 && opacity <= 1.0)) throw InvalidInput("opacity outside [0,1]");
  if (!layers_.empty() && !(layers_.front().spec.shape == spec.shape)) {
    throw InvalidInput("composite triggers must share one image shape");
  }
  layers_.push_back({std::move(spec), opacity});
}

void TriggerComposite::apply(std::span<const float> x, std::span<float> out) const {
  if (out.size() != x.size()) throw InvalidInput("output buffer size mismatch");
  if (layers_.empty()) {
    if (out.data() != x.data()) std::copy(x.begin(), x.end(), out.begin());
    return;
  }
  apply_trigger(x, layers_.front().spec, layers_.front().opacity, out);
  for (std::size_t i = 1; i < layers_.size(); ++i) apply_trigger(out, layers_[i].spec, layers_[i].opacity, out);
}

std::vector<float> TriggerComposite::operator()(std::span<const float> x) const {
  std::vector<float> out(x.size());
  apply(x, out);
  return out;
}

ImageSet TriggerComposite::apply_all(const ImageSet& set) const {
  ImageSet out = set;
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto img = out.image(i);
    apply(img, img);
  }
  return out;
}

TriggerComposite make_test_trigger_fn(const AttackConfig& config) {
  if (config.test_triggers.empty()) throw ConfigError("no test-time triggers configured");
  TriggerComposite fn;
  for (const auto& tt : config.test_triggers) {
    const TriggerSpec& spec = find_trigger(config.triggers, tt.id);
    fn.add(spec, tt.opacity.value_or(spec.test_opacity));
  }
  return fn;
}

TriggerComposite single_trigger_fn(const TriggerSpec& spec, double opacity) {
  TriggerComposite fn;
  fn.add(spec, opacity);
  return fn;
}

double expected_asr(const AttackConfig& config) {
  const double total = config.payload_rate + config.cover_rate;
  if (!(total > 0.0)) throw InvalidInput("expected ASR needs a positive poison rate");
  return config.payload_rate / total;
}

}  // namespace latsep
