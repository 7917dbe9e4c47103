#include "torch_doctest.hpp"

#include <filesystem>

#include "latsep/errors.hpp"
#include "latsep/fsutil.hpp"
#include "latsep/nn/pipeline.hpp"

using namespace latsep;
using namespace latsep::nn;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny_config(const fs::path& out) {
  auto c = config_from_json(Json::parse(R"({
    "dataset": "synthetic",
    "desk_scale": true,
    "dataset_options": {"validation_size": 100, "synthetic": {"train_size": 400, "test_size": 300}},
    "attack": {"strategy": "adaptive_blend", "payload_rate": 0.03, "cover_rate": 0.03},
    "train": {"epochs": 2, "decay_epochs": [1], "batch_size": 32, "lr": 0.05},
    "defenses": ["none", "spectral_signature", {"name": "strip", "params": {"overlays": 4}}],
    "seeds": [1],
    "augmentation_variants": ["no-aug"],
    "sweep_opacities": [0.0, 0.2],
    "tsne": false
  })"));
  c.output_dir = out.string();
  return c;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) { fs::remove_all(path); }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("stage ledger persists completed stages") {
  TempDir dir("latsep_ledger_test");
  fs::create_directories(dir.path);
  {
    StageLedger l(dir.path / "ledger.jsonl");
    CHECK(!l.done("a"));
    write_file_atomic(dir.path / "a.json", "{}");
    l.record("a", "a.json");
    l.record("b", "missing.json");
    CHECK(l.done("a"));
    CHECK(!l.done("b"));
  }
  StageLedger again(dir.path / "ledger.jsonl");
  CHECK(again.done("a"));
  write_file_atomic(dir.path / "bad.jsonl", "not json\n");
  CHECK_THROWS_AS(StageLedger(dir.path / "bad.jsonl"), IntegrityError);
}

TEST_CASE("pipeline runs end to end and resumes byte-identically") {
  TempDir dir("latsep_pipeline_test");
  const auto cfg = tiny_config(dir.path / "run");
  Pipeline p(cfg);
  const auto report = p.run();
  CHECK(report.complete());
  REQUIRE(report.rows.size() == 3);
  CHECK(report.rows[0].defense == "none");
  CHECK(report.rows[0].asr.has_value());
  CHECK(!report.rows[0].elimination_rate);
  const auto& ss = report.rows[1];
  REQUIRE(ss.suspected);
  // Budget: round(1.5 · 0.03 · n_c) per class; with 10 classes of about 40, 2 each.
  CHECK(*ss.suspected > 0);
  const auto details = Json::parse(read_file(p.run_dir() / "defenses" / "spectral_signature" / "seed-1-no-aug.json"));
  CHECK(details.at("details").at("cleanse").at("suspected_indices").size() == *ss.suspected);
  for (const char* f : {"config.snapshot", "ledger.jsonl", "manifest/seed-1.json", "checkpoints/seed-1-no-aug.ckpt",
                        "checkpoints/seed-1-no-aug-spectral_signature.ckpt", "reports/report.json", "reports/report.txt",
                        "reports/profiles/seed-1-no-aug.json", "reports/sweeps/seed-1-no-aug.json",
                        "figures/seed-1-no-aug/class-0-pca.svg", "figures/seed-1-no-aug/class-0-svm-distance.png"}) {
    CHECK_MESSAGE(fs::exists(p.run_dir() / f), f);
  }
  const auto sweep = Json::parse(read_file(p.run_dir() / "reports/sweeps/seed-1-no-aug.json"));
  CHECK(sweep.at("points").size() == 2);

  const std::string first = read_file(p.run_dir() / "reports/report.json");
  const std::string ledger = read_file(p.run_dir() / "ledger.jsonl");
  Pipeline again(cfg);
  again.run();
  CHECK(read_file(p.run_dir() / "reports/report.json") == first);
  CHECK(read_file(p.run_dir() / "ledger.jsonl") == ledger);
  CHECK(again.collect_report().to_json() == first);
  CHECK((EvalReport::from_json(first).rows == report.rows));
  const auto fresh_sweep = p.sweep(1, false);
  const auto stored_sweep = again.sweep(1, false);
  REQUIRE(stored_sweep.size() == 2);
  CHECK(stored_sweep[1].opacity == 0.2);
  CHECK(stored_sweep[1].asr == fresh_sweep[1].asr);
  CHECK(again.profiles(1, false).size() == 10);

  auto moved = cfg;
  moved.output_dir = (fs::path(".") / fs::relative(cfg.output_dir)).string();
  CHECK_NOTHROW(Pipeline(moved).prepare());

  auto other = cfg;
  other.seeds = {2};
  Pipeline mismatch(other);
  CHECK_THROWS_AS(mismatch.prepare(), ConfigError);
}

TEST_CASE("stage failures become failure rows") {
  TempDir dir("latsep_pipeline_fail");
  auto cfg = tiny_config(dir.path / "run");
  cfg.defenses = {{"none", {}}, {"spectre", {{"bogus", 1.0}}}};
  cfg.profiles = false;
  cfg.sweep_opacities.clear();
  Pipeline p(cfg);
  const auto report = p.run();
  CHECK(!report.complete());
  CHECK(report.rows[0].ok());
  CHECK(report.rows[1].status == "failed:defend");
  CHECK(report.rows[1].failure.find("bogus") != std::string::npos);
  CHECK(stage_exit_code("defend") == 12);
  CHECK_THROWS_AS(plot_run(p.run_dir()), IoError);
}

TEST_CASE("defenses none yields only baseline rows") {
  TempDir dir("latsep_pipeline_none");
  auto cfg = tiny_config(dir.path / "run");
  cfg.defenses = {{"none", {}}};
  cfg.profiles = false;
  cfg.sweep_opacities.clear();
  cfg.attack.strategy = Strategy::none;
  cfg.attack.payload_rate.reset();
  cfg.attack.cover_rate.reset();
  Pipeline p(cfg);
  const auto report = p.run();
  REQUIRE(report.rows.size() == 1);
  CHECK(report.rows[0].defense == "none");
  CHECK(!report.rows[0].asr);
  const auto m = read_manifest(p.run_dir() / "manifest/seed-1.json");
  CHECK(m.plan.entries.empty());
}

TEST_CASE("separability report checks digests") {
  TempDir dir("latsep_pipeline_sep");
  auto cfg = tiny_config(dir.path / "run");
  Pipeline p(cfg);
  auto ck = p.base_model(1, false);
  auto manifest = p.poison(1);
  const auto data = load_dataset("synthetic", "", cfg.dataset_options, 1);
  CHECK_THROWS_AS(separability_report(ck.model, "other", data.train, manifest, 1, false), IntegrityError);
  const auto profiles = p.profiles(1, false);
  CHECK(profiles.size() == 10);
  std::size_t planted = 0;
  for (const auto& c : profiles) {
    CHECK(c.poison.size() == static_cast<std::size_t>(c.profile.pca_coords.rows()));
    for (int v : c.poison) planted += v;
  }
  CHECK(planted == manifest.plan.entries.size());
}
