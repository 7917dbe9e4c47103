#include "latsep/nn/pipeline.hpp"

#include <algorithm>
#include <numbers>
#include <numeric>

#include "latsep/cleansers.hpp"
#include "latsep/errors.hpp"
#include "latsep/figures.hpp"
#include "latsep/fsutil.hpp"
#include "latsep/imageio.hpp"
#include "latsep/log.hpp"
#include "latsep/metrics.hpp"
#include "latsep/nn/aux_defenses.hpp"

namespace latsep::nn {

namespace fs = std::filesystem;

int stage_exit_code(std::string_view stage) {
  if (stage == "poison") return static_cast<int>(StageExit::poison);
  if (stage == "train") return static_cast<int>(StageExit::train);
  if (stage == "defend") return static_cast<int>(StageExit::defend);
  if (stage == "profile") return static_cast<int>(StageExit::profile);
  if (stage == "sweep") return static_cast<int>(StageExit::sweep);
  if (stage == "config") return static_cast<int>(StageExit::config);
  return static_cast<int>(StageExit::report);
}

std::string variant_tag(std::uint64_t seed, bool augmentation) {
  return "seed-" + std::to_string(seed) + (augmentation ? "-aug" : "-no-aug");
}

StageLedger::StageLedger(fs::path path) : path_(std::move(path)) {
  if (!fs::exists(path_)) return;
  text_ = read_file(path_);
  std::size_t pos = 0;
  while (pos < text_.size()) {
    const auto nl = text_.find('\n', pos);
    const auto line = text_.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
    pos = nl == std::string::npos ? text_.size() : nl + 1;
    if (line.empty()) continue;
    try {
      const auto j = Json::parse(line);
      entries_[j.at("stage").get<std::string>()] = j.at("artifact").get<std::string>();
    } catch (const std::exception&) {
      throw IntegrityError("corrupt stage ledger line in " + path_.string() + ": " + line);
    }
  }
}

bool StageLedger::done(const std::string& stage) const {
  const auto it = entries_.find(stage);
  return it != entries_.end() && fs::exists(path_.parent_path() / it->second);
}

void StageLedger::record(const std::string& stage, const std::string& artifact) {
  Json j;
  j["stage"] = stage;
  j["artifact"] = artifact;
  text_ += j.dump() + "\n";
  write_file_atomic(path_, text_);
  entries_[stage] = artifact;
}

struct Pipeline::SeedData {
  std::uint64_t seed = 0;
  DatasetSplits splits;
  AttackConfig attack;
  MaterializedDataset poisoned;
  std::optional<TriggerComposite> trigger;
  std::map<bool, ModelCheckpoint> models;
  std::map<bool, Matrix> latents;
};

namespace {

double param(const DefenseSpec& d, const std::string& key, double fallback) {
  const auto it = d.params.find(key);
  return it == d.params.end() ? fallback : it->second;
}

int iparam(const DefenseSpec& d, const std::string& key, int fallback) {
  return static_cast<int>(param(d, key, fallback));
}

void check_params(const DefenseSpec& d, std::initializer_list<const char*> allowed) {
  for (const auto& [k, v] : d.params) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return k == a; })) {
      throw ConfigError("unknown parameter '" + k + "' for defense '" + d.name + "'");
    }
  }
}

void write_mask_images(const fs::path& dir, int label, const ReversedTrigger& t) {
  const auto mask = t.mask.contiguous();
  const ImageShape ms{static_cast<int>(mask.size(1)), static_cast<int>(mask.size(2)), 1};
  write_png(dir / ("class-" + std::to_string(label) + "-mask.png"), ms,
            std::span<const float>(mask.data_ptr<float>(), ms.size()));
  const auto pat = t.pattern.permute({1, 2, 0}).contiguous();
  const ImageShape ps{static_cast<int>(pat.size(0)), static_cast<int>(pat.size(1)), static_cast<int>(pat.size(2))};
  write_png(dir / ("class-" + std::to_string(label) + "-pattern.png"), ps,
            std::span<const float>(pat.data_ptr<float>(), ps.size()));
}

Json json_numbers(std::span<const double> v) {
  Json a = Json::array();
  for (double x : v) a.push_back(number_to_json(x));
  return a;
}

}  // namespace

Pipeline::Pipeline(ExperimentConfig config, RunOptions options)
    : config_(std::move(config)), options_(std::move(options)), run_dir_(config_.output_dir) {
  config_.validate();
}

Pipeline::~Pipeline() = default;

void Pipeline::prepare() {
  fs::create_directories(run_dir_);
  for (const char* d : {"manifest", "checkpoints", "defenses", "reports", "figures"}) fs::create_directories(run_dir_ / d);
  const std::string snapshot = dump(to_json(config_));
  const auto snap_path = run_dir_ / "config.snapshot";
  if (fs::exists(snap_path)) {
    Json stored = Json::parse(read_file(snap_path), nullptr, false);
    Json current = to_json(config_);
    if (stored.is_object()) stored.erase("output_dir");
    current.erase("output_dir");
    if (stored != current) {
      throw ConfigError("run directory " + run_dir_.string() +
                        " was created with a different configuration; choose another output_dir");
    }
  } else {
    write_file_atomic(snap_path, snapshot);
  }
  ledger_ = std::make_unique<StageLedger>(run_dir_ / "ledger.jsonl");
}

std::string Pipeline::attack_name() const { return std::string(to_string(config_.attack.strategy)); }

AttackConfig Pipeline::attack_for(const ImageShape& shape) const { return resolve_attack(config_, shape); }

TrainConfig Pipeline::train_config(std::uint64_t seed, bool augmentation, const std::string& purpose) const {
  TrainConfig c = config_.train;
  c.augmentation = augmentation;
  c.seed = derive_seed(seed, purpose + (augmentation ? "-aug" : "-no-aug"));
  return c;
}

Pipeline::SeedData& Pipeline::seed_data(std::uint64_t seed) {
  if (!ledger_) prepare();
  if (current_ && current_->seed == seed) return *current_;
  current_.reset();
  auto sd = std::make_unique<SeedData>();
  sd->seed = seed;
  sd->splits = load_dataset(config_.dataset, options_.data_root, config_.dataset_options, seed);
  sd->attack = attack_for(sd->splits.train.shape());
  sd->attack.validate(sd->splits.train.num_classes());
  const auto plan = make_attack(sd->attack, sd->splits.train.labels(), sd->splits.train.num_classes(), seed);
  sd->poisoned = materialize(sd->splits.train, plan, sd->attack.triggers, config_.dataset);
  if (!sd->attack.test_triggers.empty()) sd->trigger = make_test_trigger_fn(sd->attack);
  current_ = std::move(sd);
  return *current_;
}

PoisonedDatasetManifest Pipeline::poison(std::uint64_t seed) {
  auto& sd = seed_data(seed);
  const std::string stage = "poison/seed-" + std::to_string(seed);
  const std::string artifact = "manifest/seed-" + std::to_string(seed) + ".json";
  if (ledger_->done(stage)) {
    const auto stored = read_manifest(run_dir_ / artifact);
    if (!verify_manifest(sd.poisoned.data, stored)) {
      throw IntegrityError("stored manifest " + artifact + " does not match the regenerated poisoned data");
    }
    return stored;
  }
  write_manifest(run_dir_ / artifact, sd.poisoned.manifest);
  ledger_->record(stage, artifact);
  log_info("poisoned " + std::to_string(sd.poisoned.manifest.plan.payload_count()) + " payload / " +
           std::to_string(sd.poisoned.manifest.plan.cover_count()) + " cover samples, digest " +
           sd.poisoned.manifest.content_digest);
  return sd.poisoned.manifest;
}

const MaterializedDataset& Pipeline::poisoned_data(std::uint64_t seed) { return seed_data(seed).poisoned; }

EvalMetrics Pipeline::evaluate_model(std::uint64_t seed, Network& model) {
  auto& sd = seed_data(seed);
  if (model->num_classes() != sd.splits.test.num_classes() || model->input_shape() != sd.splits.test.shape()) {
    throw IntegrityError("model expects " + model->input_shape().str() + " inputs and " +
                         std::to_string(model->num_classes()) + " classes; the dataset has " +
                         sd.splits.test.shape().str() + " and " + std::to_string(sd.splits.test.num_classes()));
  }
  return evaluate(model, sd.splits.test, sd.trigger ? &*sd.trigger : nullptr, sd.attack.target_class);
}

ModelCheckpoint& Pipeline::cached_model(std::uint64_t seed, bool augmentation) {
  auto& sd = seed_data(seed);
  if (auto it = sd.models.find(augmentation); it != sd.models.end()) return it->second;
  poison(seed);
  const std::string tag = variant_tag(seed, augmentation);
  const std::string stage = "train/" + tag;
  const std::string artifact = "checkpoints/" + tag + ".ckpt";
  ModelCheckpoint ck;
  if (ledger_->done(stage)) {
    ck = load_checkpoint(run_dir_ / artifact);
    if (ck.dataset_digest != sd.poisoned.manifest.content_digest) {
      throw IntegrityError("checkpoint " + artifact + " was trained on different data");
    }
  } else {
    log_info("training base model " + tag);
    ck = train(sd.poisoned.data, sd.splits.train.num_classes(), train_config(seed, augmentation, "base"),
               sd.poisoned.manifest.content_digest);
    const auto m = evaluate(ck.model, sd.splits.test, sd.trigger ? &*sd.trigger : nullptr, sd.attack.target_class);
    ck.metrics["clean_accuracy"] = m.clean_accuracy;
    if (m.asr) ck.metrics["asr"] = *m.asr;
    save_checkpoint(run_dir_ / artifact, ck);
    ledger_->record(stage, artifact);
  }
  return sd.models.emplace(augmentation, std::move(ck)).first->second;
}

ModelCheckpoint Pipeline::base_model(std::uint64_t seed, bool augmentation) {
  auto& ck = cached_model(seed, augmentation);
  ModelCheckpoint copy = ck;
  copy.model = clone_network(ck.model);
  return copy;
}

const Matrix& Pipeline::train_latents(std::uint64_t seed, bool augmentation) {
  auto& sd = seed_data(seed);
  if (auto it = sd.latents.find(augmentation); it != sd.latents.end()) return it->second;
  auto& ck = cached_model(seed, augmentation);
  return sd.latents.emplace(augmentation, extract_latents(ck.model, sd.poisoned.data)).first->second;
}

EvalRow Pipeline::compute_row(std::uint64_t seed, bool augmentation, const DefenseSpec& d, Json& details) {
  auto& sd = seed_data(seed);
  auto& base = cached_model(seed, augmentation);
  const auto& plan = sd.poisoned.manifest.plan;
  const auto& data = sd.poisoned.data;
  const int classes = data.num_classes();
  const std::string tag = variant_tag(seed, augmentation);
  const TriggerComposite* trig = sd.trigger ? &*sd.trigger : nullptr;
  const int target = sd.attack.target_class;

  EvalRow row;
  row.attack = attack_name();
  row.defense = d.name;
  row.seed = seed;
  row.augmentation = augmentation;

  auto set_eval = [&](Network net) {
    const auto m = evaluate(net, sd.splits.test, trig, target);
    row.clean_accuracy = m.clean_accuracy;
    row.asr = m.asr;
  };
  auto cleanse_and_retrain = [&](const CleanseResult& res) {
    const auto cm = cleanse_metrics(plan, data.size(), res.suspected_indices);
    row.elimination_rate = cm.elimination_rate;
    row.sacrifice_rate = cm.sacrifice_rate;
    row.cover_removed = cm.cover_removed;
    row.suspected = cm.suspected;
    details["cleanse"] = to_json(res);
    const auto kept = data.subset(complement(data.size(), res.suspected_indices));
    log_info(d.name + " removed " + std::to_string(res.suspected_indices.size()) + " samples; retraining " + tag);
    auto ck = train(kept, classes, train_config(seed, augmentation, "retrain-" + d.name), content_digest(kept));
    set_eval(ck.model);
    ck.metrics["clean_accuracy"] = *row.clean_accuracy;
    if (row.asr) ck.metrics["asr"] = *row.asr;
    save_checkpoint(run_dir_ / "checkpoints" / (tag + "-" + d.name + ".ckpt"), ck);
  };
  // Removal budgets need a payload rate; a clean run assumes the usual 0.5%.
  const double assumed_rate = sd.attack.payload_rate > 0.0 ? sd.attack.payload_rate : 0.005;
  const std::uint64_t defense_seed = derive_seed(seed, d.name + (augmentation ? "-aug" : "-no-aug"));

  if (d.name == "none") {
    check_params(d, {});
    set_eval(base.model);
  } else if (d.name == "spectral_signature") {
    check_params(d, {"payload_rate"});
    cleanse_and_retrain(spectral_signature(train_latents(seed, augmentation), data.labels(),
                                           param(d, "payload_rate", assumed_rate)));
  } else if (d.name == "activation_clustering") {
    check_params(d, {"silhouette_threshold", "min_cluster_fraction", "reduced_dim"});
    ActivationClusteringOptions o;
    o.silhouette_threshold = param(d, "silhouette_threshold", config_.dataset == "gtsrb" ? 0.25 : 0.15);
    if (d.params.count("min_cluster_fraction")) o.min_cluster_fraction = d.params.at("min_cluster_fraction");
    o.reduced_dim = iparam(d, "reduced_dim", o.reduced_dim);
    o.seed = defense_seed;
    cleanse_and_retrain(activation_clustering(train_latents(seed, augmentation), data.labels(), o));
  } else if (d.name == "scan") {
    check_params(d, {"threshold", "pca_dim", "split_restarts"});
    ScanOptions o;
    o.threshold = param(d, "threshold", std::numbers::e);
    const int pca = iparam(d, "pca_dim", base.model->architecture() == Architecture::mobilenetv2 ? 128 : 0);
    if (pca > 0) o.pca_dim = pca;
    o.split_restarts = iparam(d, "split_restarts", o.split_restarts);
    o.seed = defense_seed;
    const Matrix clean_base = extract_latents(base.model, sd.splits.validation);
    cleanse_and_retrain(scan(train_latents(seed, augmentation), data.labels(), clean_base,
                             sd.splits.validation.labels(), o));
  } else if (d.name == "spectre") {
    check_params(d, {"payload_rate"});
    cleanse_and_retrain(spectre(train_latents(seed, augmentation), data.labels(),
                                param(d, "payload_rate", assumed_rate)));
  } else if (d.name == "strip") {
    check_params(d, {"fpr", "overlays"});
    StripOptions o;
    o.fpr = param(d, "fpr", o.fpr);
    o.overlays = iparam(d, "overlays", o.overlays);
    o.seed = defense_seed;
    cleanse_and_retrain(strip_cleanser(base.model, data, sd.splits.validation, o));
  } else if (d.name == "strip_filter") {
    check_params(d, {"fpr", "overlays", "inputs"});
    if (!trig) throw ConfigError("strip_filter needs test-time triggers");
    StripOptions o;
    o.fpr = param(d, "fpr", o.fpr);
    o.overlays = iparam(d, "overlays", o.overlays);
    o.seed = defense_seed;
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < sd.splits.test.size(); ++i)
      if (sd.splits.test.label(i) != target) idx.push_back(i);
    Rng rng(defense_seed, "strip-filter-inputs");
    rng.shuffle(idx.begin(), idx.end());
    idx.resize(std::min<std::size_t>(idx.size(), static_cast<std::size_t>(iparam(d, "inputs", 2000))));
    std::sort(idx.begin(), idx.end());
    const auto clean = sd.splits.test.subset(idx);
    const auto poisoned = trig->apply_all(clean);
    const auto r = strip_filter(base.model, sd.splits.validation, clean, poisoned, o);
    row.elimination_rate = r.elimination_rate;
    row.sacrifice_rate = r.sacrifice_rate;
    // Triggered inputs count as successful attacks only when accepted and sent to the target.
    const auto pred = predict(base.model, poisoned);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hits += !r.poison_rejected[i] && pred[i] == target;
    row.asr = pred.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(pred.size());
    row.clean_accuracy = evaluate(base.model, sd.splits.test, nullptr, target).clean_accuracy;
    details["threshold"] = number_to_json(r.threshold);
    details["inputs"] = idx.size();
  } else if (d.name == "neural_cleanse") {
    check_params(d, {"epochs", "patience", "batch_size", "init_cost", "success_threshold", "lr", "unlearn_samples",
                     "unlearn_fraction", "unlearn_epochs", "unlearn_lr"});
    NeuralCleanseOptions o;
    o.epochs = iparam(d, "epochs", o.epochs);
    o.patience = iparam(d, "patience", o.patience);
    o.batch_size = iparam(d, "batch_size", o.batch_size);
    o.init_cost = param(d, "init_cost", o.init_cost);
    o.success_threshold = param(d, "success_threshold", o.success_threshold);
    o.lr = param(d, "lr", o.lr);
    o.seed = defense_seed;
    const auto nc = neural_cleanse(base.model, sd.splits.validation, o);
    row.anomaly_index = nc.anomaly_indices.at(static_cast<std::size_t>(target));
    details["mask_norms"] = json_numbers(nc.mask_norms);
    details["anomaly_indices"] = json_numbers(nc.anomaly_indices);
    details["selected_target"] = nc.selected_target ? Json(*nc.selected_target) : Json();
    details["parameters"] = {{"epochs", o.epochs},           {"patience", o.patience},
                             {"batch_size", o.batch_size},   {"init_cost", o.init_cost},
                             {"cost_multiplier", o.cost_multiplier}, {"success_threshold", o.success_threshold},
                             {"lr", o.lr}};
    const auto mask_dir = run_dir_ / "defenses" / d.name / tag;
    fs::create_directories(mask_dir);
    for (int k = 0; k < classes; ++k) write_mask_images(mask_dir, k, nc.triggers[static_cast<std::size_t>(k)]);
    if (nc.selected_target) {
      std::vector<std::size_t> clean_idx;
      const auto roles = sd.poisoned.manifest.roles();
      for (std::size_t i = 0; i < roles.size(); ++i)
        if (roles[i] == Role::clean) clean_idx.push_back(i);
      Rng rng(defense_seed, "nc-unlearn-samples");
      rng.shuffle(clean_idx.begin(), clean_idx.end());
      clean_idx.resize(std::min<std::size_t>(clean_idx.size(), static_cast<std::size_t>(iparam(d, "unlearn_samples", 5000))));
      std::sort(clean_idx.begin(), clean_idx.end());
      UnlearnOptions uo;
      uo.patched_fraction = param(d, "unlearn_fraction", uo.patched_fraction);
      uo.epochs = iparam(d, "unlearn_epochs", uo.epochs);
      uo.lr = param(d, "unlearn_lr", uo.lr);
      uo.batch_size = config_.train.batch_size;
      uo.seed = defense_seed;
      auto net = nc_unlearn(base.model, nc.triggers[static_cast<std::size_t>(*nc.selected_target)],
                            data.subset(clean_idx), config_.train, uo);
      set_eval(net);
      details["unlearned"] = true;
    } else {
      set_eval(base.model);
      details["unlearned"] = false;
      details["note"] = "no class passed the anomaly rule; model left unchanged";
    }
  } else if (d.name == "fine_prune") {
    check_params(d, {"max_ca_drop"});
    const auto r = fine_prune(base.model, sd.splits.validation, param(d, "max_ca_drop", 0.10));
    set_eval(r.model);
    details["pruned_channels"] = r.pruned_channels;
    details["probe_accuracy_before"] = number_to_json(r.probe_accuracy_before);
    details["probe_accuracy_after"] = number_to_json(r.probe_accuracy_after);
  } else if (d.name == "abl") {
    check_params(d, {"isolate", "isolation_epochs", "isolation_lr", "flooding", "finetune_epochs", "finetune_decay_epoch",
                     "finetune_lr", "unlearn_epochs", "unlearn_lr"});
    AblOptions o;
    o.isolate = static_cast<std::size_t>(iparam(d, "isolate", static_cast<int>(o.isolate)));
    o.isolation_epochs = iparam(d, "isolation_epochs", o.isolation_epochs);
    o.isolation_lr = param(d, "isolation_lr", o.isolation_lr);
    o.flooding = param(d, "flooding", o.flooding);
    o.finetune_epochs = iparam(d, "finetune_epochs", o.finetune_epochs);
    o.finetune_decay_epochs = {iparam(d, "finetune_decay_epoch", o.finetune_decay_epochs.at(0))};
    o.finetune_lr = param(d, "finetune_lr", o.finetune_lr);
    o.unlearn_epochs = iparam(d, "unlearn_epochs", o.unlearn_epochs);
    o.unlearn_lr = param(d, "unlearn_lr", o.unlearn_lr);
    const auto r = abl(data, classes, &plan, train_config(seed, augmentation, "abl"), o);
    set_eval(r.model);
    row.isolation_precision = r.isolation_precision;
    details["isolated"] = r.isolated;
  } else {
    throw ConfigError("unknown defense '" + d.name + "'");
  }
  return row;
}

EvalRow Pipeline::defend(std::uint64_t seed, bool augmentation, const DefenseSpec& defense) {
  if (!ledger_) prepare();
  const std::string tag = variant_tag(seed, augmentation);
  const std::string stage = "defend/" + defense.name + "/" + tag;
  const std::string artifact = "defenses/" + defense.name + "/" + tag + ".json";
  if (ledger_->done(stage)) return row_from_json(Json::parse(read_file(run_dir_ / artifact)).at("row"));
  Json details = Json::object();
  const auto row = compute_row(seed, augmentation, defense, details);
  Json j;
  j["row"] = row_to_json(row);
  j["params"] = defense.params;
  j["details"] = details;
  const std::string text = dump(j);
  write_file_atomic(run_dir_ / artifact, text);
  ledger_->record(stage, artifact);
  return row_from_json(Json::parse(text).at("row"));
}

std::vector<ClassProfile> separability_report(Network& model, const std::string& checkpoint_digest,
                                              const ImageSet& data, const PoisonedDatasetManifest& manifest,
                                              std::uint64_t seed, bool with_tsne) {
  if (checkpoint_digest != manifest.content_digest) {
    throw IntegrityError("manifest digest does not match the checkpoint's training data");
  }
  if (!verify_manifest(data, manifest)) throw IntegrityError("data does not match the manifest");
  const Matrix latents = extract_latents(model, data);
  std::vector<ClassProfile> out;
  for (const auto& [label, cl] : partition_by_class(latents, data.labels(), manifest)) {
    ClassProfile p;
    p.profile = build_profile(cl, derive_seed(seed, "profile-" + std::to_string(label)), with_tsne);
    p.poison = cl.oracle_assignment();
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<ClassProfile> Pipeline::profiles(std::uint64_t seed, bool augmentation) {
  if (!ledger_) prepare();
  const std::string tag = variant_tag(seed, augmentation);
  const std::string stage = "profile/" + tag;
  const std::string artifact = "reports/profiles/" + tag + ".json";
  std::vector<ClassProfile> out;
  if (ledger_->done(stage)) {
    const auto j = Json::parse(read_file(run_dir_ / artifact));
    for (const auto& c : j.at("classes")) {
      out.push_back({profile_from_json(c.at("profile")), c.at("poison").get<std::vector<int>>()});
    }
    return out;
  }
  auto& sd = seed_data(seed);
  auto& ck = cached_model(seed, augmentation);
  out = separability_report(ck.model, ck.dataset_digest, sd.poisoned.data, sd.poisoned.manifest, seed, config_.tsne);
  Json j;
  j["seed"] = seed;
  j["augmentation"] = augmentation;
  j["attack"] = attack_name();
  j["target_class"] = sd.attack.target_class;
  Json cs = Json::array();
  for (const auto& p : out) cs.push_back({{"profile", to_json(p.profile)}, {"poison", p.poison}});
  j["classes"] = cs;
  write_file_atomic(run_dir_ / artifact, dump(j));
  ledger_->record(stage, artifact);
  return out;
}

std::vector<SweepPoint> Pipeline::sweep(std::uint64_t seed, bool augmentation) {
  if (!ledger_) prepare();
  const std::string tag = variant_tag(seed, augmentation);
  const std::string stage = "sweep/" + tag;
  const std::string artifact = "reports/sweeps/" + tag + ".json";
  std::vector<SweepPoint> out;
  if (ledger_->done(stage)) {
    const auto stored = Json::parse(read_file(run_dir_ / artifact));
    for (const auto& p : stored.at("points")) {
      out.push_back({number_from_json(p.at("opacity")), number_from_json(p.at("asr"))});
    }
    return out;
  }
  auto& sd = seed_data(seed);
  if (sd.attack.test_triggers.empty()) throw ConfigError("opacity sweep needs a test-time trigger");
  const auto& trigger = find_trigger(sd.attack.triggers, sd.attack.test_triggers.front().id);
  auto& ck = cached_model(seed, augmentation);
  out = asr_opacity_sweep(ck.model, sd.splits.test, trigger, config_.sweep_opacities, sd.attack.target_class);
  Json j;
  j["seed"] = seed;
  j["augmentation"] = augmentation;
  j["trigger"] = trigger.name;
  j["train_opacity"] = trigger.train_opacity;
  Json pts = Json::array();
  for (const auto& p : out) pts.push_back({{"opacity", number_to_json(p.opacity)}, {"asr", number_to_json(p.asr)}});
  j["points"] = pts;
  write_file_atomic(run_dir_ / artifact, dump(j));
  ledger_->record(stage, artifact);
  return out;
}

EvalReport Pipeline::run() {
  prepare();
  EvalReport report;
  aux_failures_.clear();
  auto failed = [&](std::uint64_t seed, bool aug, const DefenseSpec& d, const std::string& stage,
                    const std::string& what) {
    EvalRow r;
    r.attack = attack_name();
    r.defense = d.name;
    r.seed = seed;
    r.augmentation = aug;
    r.status = "failed:" + stage;
    r.failure = what;
    return r;
  };
  for (auto seed : config_.seeds) {
    std::string seed_failure;
    try {
      poison(seed);
    } catch (const Error& e) {
      seed_failure = e.what();
      log_error("poison stage failed for seed " + std::to_string(seed) + ": " + seed_failure);
    }
    for (bool aug : config_.augmentation_variants) {
      std::string stage = seed_failure.empty() ? "" : "poison";
      std::string what = seed_failure;
      if (stage.empty()) {
        try {
          cached_model(seed, aug);
        } catch (const Error& e) {
          stage = "train";
          what = e.what();
          log_error("training failed for " + variant_tag(seed, aug) + ": " + what);
        }
      }
      if (!stage.empty()) {
        for (const auto& d : config_.defenses) report.rows.push_back(failed(seed, aug, d, stage, what));
        continue;
      }
      if (config_.profiles) {
        try {
          profiles(seed, aug);
        } catch (const Error& e) {
          aux_failures_.push_back(std::string("profile: ") + e.what());
          log_error("profiles failed for " + variant_tag(seed, aug) + ": " + e.what());
        }
      }
      if (!config_.sweep_opacities.empty()) {
        try {
          sweep(seed, aug);
        } catch (const Error& e) {
          aux_failures_.push_back(std::string("sweep: ") + e.what());
          log_error("opacity sweep failed for " + variant_tag(seed, aug) + ": " + e.what());
        }
      }
      for (const auto& d : config_.defenses) {
        try {
          report.rows.push_back(defend(seed, aug, d));
        } catch (const Error& e) {
          log_error("defense " + d.name + " failed for " + variant_tag(seed, aug) + ": " + e.what());
          report.rows.push_back(failed(seed, aug, d, "defend", e.what()));
        } catch (const c10::Error& e) {
          log_error("defense " + d.name + " failed for " + variant_tag(seed, aug) + ": " + e.what_without_backtrace());
          report.rows.push_back(failed(seed, aug, d, "defend", e.what_without_backtrace()));
        }
      }
    }
    current_.reset();
  }
  write_report(report);
  if (config_.profiles) {
    try {
      plot_run(run_dir_);
    } catch (const Error& e) {
      aux_failures_.push_back(std::string("profile: ") + e.what());
    }
  }
  return report;
}

EvalReport Pipeline::collect_report() const {
  EvalReport report;
  for (auto seed : config_.seeds) {
    for (bool aug : config_.augmentation_variants) {
      for (const auto& d : config_.defenses) {
        const auto path = run_dir_ / "defenses" / d.name / (variant_tag(seed, aug) + ".json");
        if (fs::exists(path)) {
          report.rows.push_back(row_from_json(Json::parse(read_file(path)).at("row")));
        } else {
          EvalRow r;
          r.attack = attack_name();
          r.defense = d.name;
          r.seed = seed;
          r.augmentation = aug;
          r.status = "failed:defend";
          r.failure = "not run";
          report.rows.push_back(std::move(r));
        }
      }
    }
  }
  return report;
}

void Pipeline::write_report(const EvalReport& report) const {
  write_file_atomic(run_dir_ / "reports" / "report.json", report.to_json());
  write_file_atomic(run_dir_ / "reports" / "report.txt", report.to_text());
}

std::vector<fs::path> plot_run(const fs::path& run_dir) {
  const auto dir = run_dir / "reports" / "profiles";
  std::vector<fs::path> files;
  if (fs::exists(dir)) {
    for (const auto& e : fs::directory_iterator(dir))
      if (e.path().extension() == ".json") files.push_back(e.path());
  }
  if (files.empty()) {
    throw IoError("no latent profiles under " + dir.string() + "; run the profile stage first (latsep run with profiles enabled)");
  }
  std::sort(files.begin(), files.end());
  std::vector<fs::path> written;
  for (const auto& f : files) {
    const auto j = Json::parse(read_file(f));
    const auto out_dir = run_dir / "figures" / f.stem();
    fs::create_directories(out_dir);
    for (const auto& c : j.at("classes")) {
      const auto p = profile_from_json(c.at("profile"));
      const auto poison = c.at("poison").get<std::vector<int>>();
      const std::string stem = "class-" + std::to_string(p.label);
      auto scatter = [&](const Matrix& coords, const std::string& method) {
        const auto base = out_dir / (stem + "-" + method);
        write_file_atomic(fs::path(base).concat(".svg"),
                          scatter_svg(coords, poison, ScatterStyle{"class " + std::to_string(p.label) + " " + method}));
        write_scatter_png(fs::path(base).concat(".png"), coords, poison);
        written.push_back(fs::path(base).concat(".svg"));
      };
      scatter(p.pca_coords, "pca");
      if (p.tsne_coords) scatter(*p.tsne_coords, "tsne");
      if (p.svm_signed_distances) {
        std::vector<double> clean, planted;
        for (std::size_t i = 0; i < poison.size(); ++i) {
          (poison[i] ? planted : clean).push_back((*p.svm_signed_distances)(static_cast<Eigen::Index>(i)));
        }
        const auto base = out_dir / (stem + "-svm-distance");
        write_file_atomic(fs::path(base).concat(".svg"),
                          histogram_svg(clean, planted, "class " + std::to_string(p.label) + " oracle SVM"));
        write_histogram_png(fs::path(base).concat(".png"), clean, planted);
        written.push_back(fs::path(base).concat(".svg"));
      }
    }
  }
  return written;
}

}  // namespace latsep::nn
