#include <CLI11.hpp>
#include <torch/torch.h>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "latsep/config.hpp"
#include "latsep/errors.hpp"
#include "latsep/fsutil.hpp"
#include "latsep/imageio.hpp"
#include "latsep/log.hpp"
#include "latsep/nn/pipeline.hpp"
#include "latsep/serialize.hpp"

namespace fs = std::filesystem;
using namespace latsep;
using namespace latsep::nn;

namespace {

struct ConfigFlags {
  std::string config;
  std::vector<std::string> overrides;
  std::string seeds;
  std::string defenses;
  std::string output_dir;
  std::string data_root;
  bool desk_scale = false;
};

void add_config_flags(CLI::App* cmd, ConfigFlags& f, bool required = true) {
  auto* opt = cmd->add_option("-c,--config", f.config, "experiment config file")->check(CLI::ExistingFile);
  if (required) opt->required();
  cmd->add_option("--set", f.overrides, "override a config key, e.g. train.epochs=5 (repeatable)");
  cmd->add_option("--seeds", f.seeds, "comma-separated seeds, replaces 'seeds'");
  cmd->add_option("--defenses", f.defenses, "comma-separated defenses, replaces 'defenses'");
  cmd->add_option("--output-dir", f.output_dir, "run directory, replaces 'output_dir'");
  cmd->add_option("--data-root", f.data_root, "dataset cache root (default: $LATSEP_DATA_ROOT or ./data)");
  cmd->add_flag("--desk-scale", f.desk_scale, "sets 'desk_scale' to true");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string defense_name(const Json& entry) {
  if (entry.is_string()) return entry.get<std::string>();
  if (entry.is_object() && entry.contains("name") && entry["name"].is_string()) return entry["name"].get<std::string>();
  return {};
}

ExperimentConfig build_config(const ConfigFlags& f) {
  const fs::path path(f.config);
  Json j = load_config_json(path);
  if (!f.seeds.empty()) {
    Json seeds = Json::array();
    for (const auto& s : split_list(f.seeds)) {
      try {
        std::size_t used = 0;
        const auto v = std::stoull(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        seeds.push_back(v);
      } catch (const std::exception&) {
        throw ConfigError("--seeds: '" + s + "' is not a non-negative integer");
      }
    }
    j["seeds"] = seeds;
  }
  if (!f.defenses.empty()) {
    // Configured parameters of a listed defense are kept.
    const Json old = j.contains("defenses") ? j["defenses"] : Json::array();
    Json defs = Json::array();
    for (const auto& name : split_list(f.defenses)) {
      Json entry = name;
      for (const auto& e : old) {
        if (defense_name(e) == name) entry = e;
      }
      defs.push_back(entry);
    }
    j["defenses"] = defs;
  }
  if (!f.output_dir.empty()) j["output_dir"] = f.output_dir;
  if (f.desk_scale) j["desk_scale"] = true;
  for (const auto& o : f.overrides) apply_override(j, o);
  ExperimentConfig c = config_from_json(j, path.parent_path().string());
  c.validate();
  return c;
}

RunOptions run_options(const ConfigFlags& f) {
  RunOptions o;
  if (!f.data_root.empty()) o.data_root = f.data_root;
  return o;
}

std::vector<std::uint64_t> pick_seeds(const ExperimentConfig& c, const std::optional<std::uint64_t>& seed) {
  if (seed) return {*seed};
  return c.seeds;
}

std::vector<bool> pick_variants(const ExperimentConfig& c, const std::string& variant) {
  if (variant == "aug") return {true};
  if (variant == "no-aug") return {false};
  return c.augmentation_variants;
}

std::string fmt_metric(const std::optional<double>& v) { return v ? format_double(*v) : std::string("-"); }

int report_exit(const EvalReport& report, const std::vector<std::string>& aux) {
  for (const auto& row : report.rows) {
    if (!row.ok()) {
      const std::string stage = row.status.substr(row.status.find(':') + 1);
      return stage_exit_code(stage);
    }
  }
  if (!aux.empty()) return stage_exit_code(aux.front().substr(0, aux.front().find(':')));
  return 0;
}

int cmd_poison(const ConfigFlags& f, const std::optional<std::uint64_t>& seed, bool write_data) {
  Pipeline p(build_config(f), run_options(f));
  p.prepare();
  for (auto s : pick_seeds(p.config(), seed)) {
    const auto m = p.poison(s);
    std::cout << "seed " << s << ": " << m.plan.payload_count() << " payload, " << m.plan.cover_count()
              << " cover of " << m.n << ", digest " << m.content_digest << "\n";
    std::cout << "  manifest " << (p.run_dir() / "manifest" / ("seed-" + std::to_string(s) + ".json")).string()
              << "\n";
    if (write_data) {
      const auto path = p.run_dir() / "data" / ("seed-" + std::to_string(s) + ".imageset");
      fs::create_directories(path.parent_path());
      write_image_set(path, p.poisoned_data(s).data);
      std::cout << "  data " << path.string() << "\n";
    }
  }
  return 0;
}

int cmd_train(const ConfigFlags& f, const std::optional<std::uint64_t>& seed, const std::string& variant) {
  Pipeline p(build_config(f), run_options(f));
  p.prepare();
  for (auto s : pick_seeds(p.config(), seed)) {
    for (bool aug : pick_variants(p.config(), variant)) {
      const auto ck = p.base_model(s, aug);
      std::cout << variant_tag(s, aug) << ":";
      for (const auto& [k, v] : ck.metrics) std::cout << " " << k << "=" << format_double(v);
      std::cout << "\n";
    }
  }
  return 0;
}

int cmd_defend(const ConfigFlags& f, const std::optional<std::uint64_t>& seed, const std::string& variant) {
  Pipeline p(build_config(f), run_options(f));
  p.prepare();
  int code = 0;
  for (auto s : pick_seeds(p.config(), seed)) {
    for (bool aug : pick_variants(p.config(), variant)) {
      for (const auto& d : p.config().defenses) {
        const auto row = p.defend(s, aug, d);
        std::cout << variant_tag(s, aug) << " " << d.name << ": " << row.status;
        if (row.ok()) {
          std::cout << " elimination=" << fmt_metric(row.elimination_rate) << " sacrifice="
                    << fmt_metric(row.sacrifice_rate) << " asr=" << fmt_metric(row.asr)
                    << " ca=" << fmt_metric(row.clean_accuracy);
        } else {
          std::cout << " (" << row.failure << ")";
          if (code == 0) code = stage_exit_code(row.status.substr(row.status.find(':') + 1));
        }
        std::cout << "\n";
      }
    }
  }
  return code;
}

int cmd_evaluate(const ConfigFlags& f, const std::string& checkpoint, const std::optional<std::uint64_t>& seed) {
  Pipeline p(build_config(f), run_options(f));
  if (!checkpoint.empty()) {
    auto ck = load_checkpoint(checkpoint);
    const auto s = seed ? *seed : p.config().seeds.front();
    const auto m = p.evaluate_model(s, ck.model);
    Json j;
    j["checkpoint"] = checkpoint;
    j["seed"] = s;
    j["clean_accuracy"] = number_to_json(m.clean_accuracy);
    j["asr"] = m.asr ? number_to_json(*m.asr) : Json(nullptr);
    j["asr_samples"] = m.asr_samples;
    std::cout << dump(j);
    return 0;
  }
  const auto report = p.collect_report();
  p.write_report(report);
  std::cout << report.to_text();
  return report_exit(report, {});
}

int cmd_plot(const ConfigFlags& f, const std::string& run_dir) {
  fs::path dir = run_dir;
  if (dir.empty()) {
    if (f.config.empty()) throw ConfigError("plot needs --run-dir or --config");
    dir = build_config(f).output_dir;
  }
  const auto files = plot_run(dir);
  for (const auto& file : files) std::cout << file.string() << "\n";
  return 0;
}

int cmd_run(const ConfigFlags& f) {
  Pipeline p(build_config(f), run_options(f));
  const auto report = p.run();
  std::cout << report.to_text();
  for (const auto& a : p.auxiliary_failures()) std::cerr << "failed " << a << "\n";
  return report_exit(report, p.auxiliary_failures());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Backdoor poisoning attacks and latent-separability defenses"};
  app.require_subcommand(1);
  std::string level = "info";
  app.add_option("--log-level", level, "debug, info, warn, error or quiet")
      ->check(CLI::IsMember({"debug", "info", "warn", "error", "quiet"}));

  ConfigFlags flags;
  std::optional<std::uint64_t> seed;
  std::string variant = "all";
  bool write_data = false;
  std::string checkpoint;
  std::string run_dir;

  auto* poison = app.add_subcommand("poison", "materialize poisoned training sets and write their manifests");
  add_config_flags(poison, flags);
  poison->add_option("--seed", seed, "only this seed");
  poison->add_flag("--write-data", write_data, "also write the poisoned images to <run>/data/");

  auto* train = app.add_subcommand("train", "train base models on the poisoned sets");
  add_config_flags(train, flags);
  train->add_option("--seed", seed, "only this seed");
  train->add_option("--variant", variant, "aug, no-aug or all")->check(CLI::IsMember({"aug", "no-aug", "all"}));

  auto* defend = app.add_subcommand("defend", "run the configured defenses and evaluate the retrained models");
  add_config_flags(defend, flags);
  defend->add_option("--seed", seed, "only this seed");
  defend->add_option("--variant", variant, "aug, no-aug or all")->check(CLI::IsMember({"aug", "no-aug", "all"}));

  auto* evaluate = app.add_subcommand("evaluate", "assemble the report from stored rows, or score one checkpoint");
  add_config_flags(evaluate, flags);
  evaluate->add_option("--checkpoint", checkpoint, "checkpoint to score on the test split")
      ->check(CLI::ExistingFile);
  evaluate->add_option("--seed", seed, "seed whose test split and trigger to use");

  auto* plot = app.add_subcommand("plot", "draw scatter plots and SVM distance histograms of a run");
  add_config_flags(plot, flags, false);
  plot->add_option("--run-dir", run_dir, "run directory (default: the config's output_dir)");

  auto* run = app.add_subcommand("run", "poison, train, defend, profile, sweep and report");
  add_config_flags(run, flags);

  CLI11_PARSE(app, argc, argv);

  set_log_level(level == "debug"  ? LogLevel::debug
                : level == "warn"  ? LogLevel::warn
                : level == "error" ? LogLevel::error
                : level == "quiet" ? LogLevel::quiet
                                   : LogLevel::info);
  torch::set_num_threads(1);

  int failure_code = static_cast<int>(StageExit::report);
  if (*poison) failure_code = static_cast<int>(StageExit::poison);
  if (*train) failure_code = static_cast<int>(StageExit::train);
  if (*defend) failure_code = static_cast<int>(StageExit::defend);
  if (*plot) failure_code = static_cast<int>(StageExit::profile);

  try {
    if (*poison) return cmd_poison(flags, seed, write_data);
    if (*train) return cmd_train(flags, seed, variant);
    if (*defend) return cmd_defend(flags, seed, variant);
    if (*evaluate) return cmd_evaluate(flags, checkpoint, seed);
    if (*plot) return cmd_plot(flags, run_dir);
    return cmd_run(flags);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return static_cast<int>(StageExit::config);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return failure_code;
  }
}
