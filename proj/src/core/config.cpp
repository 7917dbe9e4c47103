#include "latsep/config.hpp"

#include <algorithm>
#include <set>

#include "latsep/errors.hpp"
#include "latsep/fsutil.hpp"

namespace latsep {

namespace fs = std::filesystem;

const std::vector<std::string>& known_defenses() {
  static const std::vector<std::string> names{
      "none",  "spectral_signature", "activation_clustering", "scan", "spectre", "strip", "strip_filter",
      "neural_cleanse", "fine_prune", "abl"};
  return names;
}

namespace {

void check_keys(const Json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError("'" + where + "' must be an object");
  for (const auto& [k, v] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return k == a; })) {
      throw ConfigError("unknown key '" + (where.empty() ? k : where + "." + k) + "'");
    }
  }
}

template <typename T>
T get(const Json& j, const char* key, const std::string& where, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const std::exception&) {
    throw ConfigError("bad value for '" + where + key + "': " + j.at(key).dump());
  }
}

template <typename T>
std::optional<T> get_opt(const Json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return get<T>(j, key, where, T{});
}

template <typename T>
void put_opt(Json& j, const char* key, const std::optional<T>& v) {
  if (v) j[key] = *v;
}

}  // namespace

Json to_json(const TrainConfig& t) {
  Json j;
  j["architecture"] = std::string(to_string(t.architecture));
  j["epochs"] = t.epochs;
  j["lr"] = t.lr;
  j["decay_epochs"] = t.decay_epochs;
  j["decay_factor"] = t.decay_factor;
  j["momentum"] = t.momentum;
  j["weight_decay"] = t.weight_decay;
  j["batch_size"] = t.batch_size;
  j["augmentation"] = t.augmentation;
  j["recipe"] = t.recipe;
  j["seed"] = t.seed;
  return j;
}

TrainConfig train_from_json(const Json& j, TrainConfig t) {
  check_keys(j, "train", {"architecture", "epochs", "lr", "decay_epochs", "decay_factor", "momentum", "weight_decay",
                          "batch_size", "augmentation", "recipe", "seed"});
  const std::string w = "train.";
  if (j.contains("architecture")) t.architecture = architecture_from_string(get<std::string>(j, "architecture", w, ""));
  t.epochs = get(j, "epochs", w, t.epochs);
  t.lr = get(j, "lr", w, t.lr);
  t.decay_epochs = get(j, "decay_epochs", w, t.decay_epochs);
  t.decay_factor = get(j, "decay_factor", w, t.decay_factor);
  t.momentum = get(j, "momentum", w, t.momentum);
  t.weight_decay = get(j, "weight_decay", w, t.weight_decay);
  t.batch_size = get(j, "batch_size", w, t.batch_size);
  t.augmentation = get(j, "augmentation", w, t.augmentation);
  t.recipe = get(j, "recipe", w, t.recipe);
  t.seed = get(j, "seed", w, t.seed);
  return t;
}

namespace {

Json to_json(const AttackSettings& a) {
  Json j;
  j["strategy"] = std::string(to_string(a.strategy));
  if (a.triggers) {
    Json ts = Json::array();
    for (const auto& t : *a.triggers) {
      Json o;
      o["name"] = t.name;
      put_opt(o, "pattern", t.pattern_path);
      put_opt(o, "mask", t.mask_path);
      put_opt(o, "train_opacity", t.train_opacity);
      put_opt(o, "test_opacity", t.test_opacity);
      ts.push_back(o);
    }
    j["triggers"] = ts;
  }
  put_opt(j, "target_class", a.target_class);
  put_opt(j, "payload_rate", a.payload_rate);
  put_opt(j, "cover_rate", a.cover_rate);
  put_opt(j, "payload_source_classes", a.payload_source_classes);
  put_opt(j, "cover_source_classes", a.cover_source_classes);
  if (a.test_triggers) {
    Json ts = Json::array();
    for (const auto& t : *a.test_triggers) {
      Json o;
      o["id"] = t.id;
      put_opt(o, "opacity", t.opacity);
      ts.push_back(o);
    }
    j["test_triggers"] = ts;
  }
  return j;
}

AttackSettings attack_from_json(const Json& j) {
  check_keys(j, "attack", {"strategy", "triggers", "target_class", "payload_rate", "cover_rate",
                           "payload_source_classes", "cover_source_classes", "test_triggers"});
  const std::string w = "attack.";
  AttackSettings a;
  try {
    a.strategy = strategy_from_string(get<std::string>(j, "strategy", w, "none"));
  } catch (const Error& e) {
    throw ConfigError(std::string("attack.strategy: ") + e.what());
  }
  if (j.contains("triggers")) {
    std::vector<TriggerRef> refs;
    for (const auto& o : j.at("triggers")) {
      if (o.is_string()) {
        refs.push_back({o.get<std::string>(), {}, {}, {}, {}});
        continue;
      }
      check_keys(o, "attack.triggers[]", {"name", "pattern", "mask", "train_opacity", "test_opacity"});
      const std::string tw = "attack.triggers[].";
      TriggerRef r;
      r.name = get<std::string>(o, "name", tw, "");
      if (r.name.empty()) throw ConfigError("attack.triggers[] needs a name");
      r.pattern_path = get_opt<std::string>(o, "pattern", tw);
      r.mask_path = get_opt<std::string>(o, "mask", tw);
      r.train_opacity = get_opt<double>(o, "train_opacity", tw);
      r.test_opacity = get_opt<double>(o, "test_opacity", tw);
      refs.push_back(std::move(r));
    }
    a.triggers = std::move(refs);
  }
  a.target_class = get_opt<int>(j, "target_class", w);
  a.payload_rate = get_opt<double>(j, "payload_rate", w);
  a.cover_rate = get_opt<double>(j, "cover_rate", w);
  a.payload_source_classes = get_opt<std::vector<int>>(j, "payload_source_classes", w);
  a.cover_source_classes = get_opt<std::vector<int>>(j, "cover_source_classes", w);
  if (j.contains("test_triggers")) {
    std::vector<TestTrigger> tts;
    for (const auto& o : j.at("test_triggers")) {
      if (o.is_string()) {
        tts.push_back({o.get<std::string>(), std::nullopt});
        continue;
      }
      check_keys(o, "attack.test_triggers[]", {"id", "opacity"});
      tts.push_back({get<std::string>(o, "id", "attack.test_triggers[].", ""),
                     get_opt<double>(o, "opacity", "attack.test_triggers[].")});
    }
    a.test_triggers = std::move(tts);
  }
  return a;
}

Json merge_includes(const fs::path& path, int depth) {
  if (depth > 16) throw ConfigError("config include chain too deep at " + path.string());
  Json j;
  try {
    j = Json::parse(read_file(path));
  } catch (const Json::parse_error& e) {
    throw ConfigError("cannot parse " + path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError(path.string() + " must hold a JSON object");
  if (!j.contains("include")) return j;
  const fs::path inc = path.parent_path() / j.at("include").get<std::string>();
  if (!fs::exists(inc)) throw ConfigError("include '" + j.at("include").get<std::string>() + "' not found from " + path.string());
  Json base = merge_includes(inc, depth + 1);
  j.erase("include");
  base.merge_patch(j);
  return base;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (dataset != "cifar10" && dataset != "gtsrb" && dataset != "synthetic") {
    throw ConfigError("unknown dataset '" + dataset + "' (key 'dataset')");
  }
  train.validate();
  if (seeds.empty()) throw ConfigError("'seeds' must not be empty");
  if (augmentation_variants.empty()) throw ConfigError("'augmentation_variants' must not be empty");
  std::set<std::string> seen;
  for (const auto& d : defenses) {
    const auto& names = known_defenses();
    if (std::find(names.begin(), names.end(), d.name) == names.end()) {
      throw ConfigError("unknown defense '" + d.name + "' (key 'defenses')");
    }
    if (!seen.insert(d.name).second) throw ConfigError("defense '" + d.name + "' listed twice");
  }
  for (double o : sweep_opacities) {
    if (!(o >= 0.0 && o <= 1.0)) throw ConfigError("'sweep_opacities' values must lie in [0,1]");
  }
  if (attack.triggers) {
    const auto names = builtin_trigger_names();
    for (const auto& t : *attack.triggers) {
      if (!t.pattern_path && std::find(names.begin(), names.end(), t.name) == names.end()) {
        throw ConfigError("unknown trigger '" + t.name + "' (key 'attack.triggers')");
      }
    }
  }
}

Json to_json(const ExperimentConfig& c) {
  Json j;
  j["dataset"] = c.dataset;
  Json d;
  d["validation_size"] = c.dataset_options.validation_size;
  d["train_subset"] = c.dataset_options.train_subset;
  Json s;
  s["train_size"] = c.dataset_options.synthetic.train_size;
  s["test_size"] = c.dataset_options.synthetic.test_size;
  s["classes"] = c.dataset_options.synthetic.classes;
  s["image_size"] = c.dataset_options.synthetic.image_size;
  s["noise"] = c.dataset_options.synthetic.noise;
  d["synthetic"] = s;
  j["dataset_options"] = d;
  j["attack"] = to_json(c.attack);
  j["train"] = to_json(c.train);
  Json defs = Json::array();
  for (const auto& def : c.defenses) {
    Json o;
    o["name"] = def.name;
    Json p = Json::object();
    for (const auto& [k, v] : def.params) p[k] = v;
    o["params"] = p;
    defs.push_back(o);
  }
  j["defenses"] = defs;
  j["seeds"] = c.seeds;
  Json aug = Json::array();
  for (bool a : c.augmentation_variants) aug.push_back(a ? "aug" : "no-aug");
  j["augmentation_variants"] = aug;
  j["sweep_opacities"] = c.sweep_opacities;
  j["profiles"] = c.profiles;
  j["tsne"] = c.tsne;
  j["output_dir"] = c.output_dir;
  j["desk_scale"] = c.desk_scale;
  return j;
}

ExperimentConfig config_from_json(const Json& j, const std::string& base_dir) {
  check_keys(j, "", {"dataset", "dataset_options", "attack", "train", "defenses", "seeds", "augmentation_variants",
                     "sweep_opacities", "profiles", "tsne", "output_dir", "desk_scale", "include"});
  ExperimentConfig c;
  c.base_dir = base_dir;
  c.dataset = get<std::string>(j, "dataset", "", c.dataset);
  c.desk_scale = get(j, "desk_scale", "", c.desk_scale);
  c.train = c.desk_scale ? desk_train_config() : full_train_config(c.dataset);
  if (j.contains("dataset_options")) {
    const Json& d = j.at("dataset_options");
    check_keys(d, "dataset_options", {"validation_size", "train_subset", "synthetic"});
    c.dataset_options.validation_size = get(d, "validation_size", "dataset_options.", c.dataset_options.validation_size);
    c.dataset_options.train_subset = get(d, "train_subset", "dataset_options.", c.dataset_options.train_subset);
    if (d.contains("synthetic")) {
      const Json& s = d.at("synthetic");
      check_keys(s, "dataset_options.synthetic", {"train_size", "test_size", "classes", "image_size", "noise"});
      auto& so = c.dataset_options.synthetic;
      const std::string w = "dataset_options.synthetic.";
      so.train_size = get(s, "train_size", w, so.train_size);
      so.test_size = get(s, "test_size", w, so.test_size);
      so.classes = get(s, "classes", w, so.classes);
      so.image_size = get(s, "image_size", w, so.image_size);
      so.noise = get(s, "noise", w, so.noise);
    }
  }
  if (j.contains("attack")) c.attack = attack_from_json(j.at("attack"));
  if (j.contains("train")) c.train = train_from_json(j.at("train"), c.train);
  if (j.contains("defenses")) {
    c.defenses.clear();
    for (const auto& o : j.at("defenses")) {
      if (o.is_string()) {
        c.defenses.push_back({o.get<std::string>(), {}});
        continue;
      }
      check_keys(o, "defenses[]", {"name", "params"});
      DefenseSpec def;
      def.name = get<std::string>(o, "name", "defenses[].", "");
      if (o.contains("params")) {
        for (const auto& [k, v] : o.at("params").items()) {
          if (!v.is_number() && !v.is_boolean()) throw ConfigError("defenses[].params." + k + " must be numeric");
          def.params[k] = v.is_boolean() ? (v.get<bool>() ? 1.0 : 0.0) : v.get<double>();
        }
      }
      c.defenses.push_back(std::move(def));
    }
  }
  c.seeds = get(j, "seeds", "", c.seeds);
  if (j.contains("augmentation_variants")) {
    c.augmentation_variants.clear();
    for (const auto& v : j.at("augmentation_variants")) {
      const auto s = v.is_string() ? v.get<std::string>() : std::string();
      if (s != "aug" && s != "no-aug") throw ConfigError("augmentation_variants entries must be 'aug' or 'no-aug'");
      c.augmentation_variants.push_back(s == "aug");
    }
  }
  c.sweep_opacities = get(j, "sweep_opacities", "", c.sweep_opacities);
  c.profiles = get(j, "profiles", "", c.profiles);
  c.tsne = get(j, "tsne", "", c.tsne);
  c.output_dir = get(j, "output_dir", "", c.output_dir);
  return c;
}

Json load_config_json(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("config file " + path.string() + " not found");
  return merge_includes(path, 0);
}

ExperimentConfig load_config(const fs::path& path) {
  ExperimentConfig c = config_from_json(load_config_json(path), path.parent_path().string());
  c.validate();
  return c;
}

void apply_override(Json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  Json value;
  try {
    value = Json::parse(raw);
  } catch (const Json::parse_error&) {
    value = raw;
  }
  Json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("override key '" + key + "' has an empty component");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      break;
    }
    if (!node->contains(part) || !(*node)[part].is_object()) (*node)[part] = Json::object();
    node = &(*node)[part];
    start = dot + 1;
  }
}

AttackConfig resolve_attack(const ExperimentConfig& config, const ImageShape& shape) {
  const AttackSettings& a = config.attack;
  AttackConfig cfg = preset_attack(a.strategy, shape, config.dataset);
  if (a.triggers) {
    std::vector<TriggerSpec> specs;
    for (const auto& ref : *a.triggers) {
      const TriggerSpec* preset = nullptr;
      for (const auto& t : cfg.triggers) {
        if (t.name == ref.name) preset = &t;
      }
      TriggerSpec spec;
      if (ref.pattern_path) {
        auto resolve = [&](const std::string& p) {
          fs::path path(p);
          return path.is_relative() && !config.base_dir.empty() ? fs::path(config.base_dir) / path : path;
        };
        std::optional<fs::path> mask;
        if (ref.mask_path) mask = resolve(*ref.mask_path);
        spec = load_trigger(ref.name, resolve(*ref.pattern_path), mask, shape, 1.0, 1.0);
        spec.train_opacity = preset ? preset->train_opacity : 1.0;
        spec.test_opacity = preset ? preset->test_opacity : 1.0;
      } else {
        spec = preset ? *preset : make_builtin_trigger(ref.name, shape);
      }
      if (ref.train_opacity) spec.train_opacity = *ref.train_opacity;
      if (ref.test_opacity) spec.test_opacity = *ref.test_opacity;
      spec.validate();
      specs.push_back(std::move(spec));
    }
    cfg.triggers = std::move(specs);
    if (!a.test_triggers) {
      // Keep preset test triggers that still exist; otherwise test with every trigger.
      std::vector<TestTrigger> kept;
      for (const auto& t : cfg.test_triggers) {
        for (const auto& s : cfg.triggers) {
          if (s.name == t.id) kept.push_back(t);
        }
      }
      if (kept.empty()) {
        for (const auto& s : cfg.triggers) kept.push_back({s.name, std::nullopt});
      }
      cfg.test_triggers = std::move(kept);
    }
  }
  if (a.target_class) cfg.target_class = *a.target_class;
  if (a.payload_rate) cfg.payload_rate = *a.payload_rate;
  if (a.cover_rate) cfg.cover_rate = *a.cover_rate;
  if (a.payload_source_classes) cfg.payload_source_classes = a.payload_source_classes;
  if (a.cover_source_classes) cfg.cover_source_classes = a.cover_source_classes;
  if (a.test_triggers) cfg.test_triggers = *a.test_triggers;
  return cfg;
}

}  // namespace latsep
