#include <doctest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "latsep/attacks.hpp"
#include "latsep/config.hpp"
#include "latsep/fsutil.hpp"
#include "latsep/imageio.hpp"
#include "latsep/poison.hpp"
#include "latsep/report.hpp"

using namespace latsep;
namespace fs = std::filesystem;

namespace {

const fs::path kPresets = LATSEP_PRESETS_DIR;

int latsep_cli(const std::vector<std::string>& args) {
  std::string cmd = std::string("'") + LATSEP_BINARY + "' --log-level error";
  for (const auto& a : args) cmd += " '" + a + "'";
  cmd += " > /dev/null";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("latsep-cli-" + name);
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("presets load and validate") {
  for (const char* name : {"full_cifar10.json", "full_gtsrb.json", "desk_cifar10.json", "desk_synthetic.json"}) {
    CAPTURE(name);
    ExperimentConfig c;
    CHECK_NOTHROW(c = load_config(kPresets / name));
  }
  const auto gtsrb = load_config(kPresets / "full_gtsrb.json");
  CHECK(gtsrb.dataset == "gtsrb");
  CHECK(gtsrb.train.recipe == "gtsrb");
  CHECK(gtsrb.defenses.size() == 10);
  const auto desk = load_config(kPresets / "desk_cifar10.json");
  CHECK(desk.desk_scale);
  CHECK(desk.train.epochs == 30);
  CHECK(desk.seeds == std::vector<std::uint64_t>{666});
}

TEST_CASE("full preset plans 250 payload and 250 cover samples on 50000 images") {
  const auto config = load_config(kPresets / "full_cifar10.json");
  const auto attack = resolve_attack(config, ImageShape{32, 32, 3});
  std::vector<int> labels(50000);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 10);
  const auto plan = make_attack(attack, labels, 10, 666);
  CHECK(plan.payload_count() == 250);
  CHECK(plan.cover_count() == 250);
}

TEST_CASE("poison command is deterministic and writes verifiable data") {
  const auto preset = (kPresets / "desk_synthetic.json").string();
  const auto a = scratch("poison-a"), b = scratch("poison-b");
  REQUIRE(latsep_cli({"poison", "-c", preset, "--output-dir", a.string(), "--write-data"}) == 0);
  REQUIRE(latsep_cli({"poison", "-c", preset, "--output-dir", b.string()}) == 0);
  const auto ma = read_manifest(a / "manifest" / "seed-1.json");
  const auto mb = read_manifest(b / "manifest" / "seed-1.json");
  CHECK(ma == mb);
  CHECK(ma.plan.payload_count() == 30);
  CHECK(ma.plan.cover_count() == 30);
  const auto data = read_image_set(a / "data" / "seed-1.imageset");
  CHECK(verify_manifest(data, ma));

  const auto clean = scratch("poison-clean");
  REQUIRE(latsep_cli({"poison", "-c", preset, "--output-dir", clean.string(), "--set", "attack.strategy=none",
                      "--set", "attack.payload_rate=0", "--set", "attack.cover_rate=0"}) == 0);
  CHECK(read_manifest(clean / "manifest" / "seed-1.json").plan.entries.empty());
}

TEST_CASE("configuration and missing-stage errors map to exit codes") {
  const auto preset = (kPresets / "desk_synthetic.json").string();
  const auto dir = scratch("errors");
  CHECK(latsep_cli({"poison", "-c", preset, "--output-dir", dir.string(), "--set", "attack.bogus=1"}) == 2);
  CHECK(latsep_cli({"poison", "-c", preset, "--output-dir", dir.string(), "--seeds", "1,x"}) == 2);
  CHECK(latsep_cli({"plot", "--run-dir", dir.string()}) == 13);
  CHECK(latsep_cli({"poison", "-c", preset, "--output-dir", dir.string()}) == 0);
  CHECK(latsep_cli({"poison", "-c", preset, "--output-dir", dir.string(), "--set", "attack.payload_rate=0.05"}) == 2);
}

TEST_CASE("run with only the no-defense baseline") {
  const auto preset = (kPresets / "desk_synthetic.json").string();
  const auto dir = scratch("baseline");
  REQUIRE(latsep_cli({"run", "-c", preset, "--output-dir", dir.string(), "--defenses", "none", "--seeds", "3,4",
                      "--set", "train.epochs=1", "--set", "train.decay_epochs=[]", "--set", "sweep_opacities=[]",
                      "--set", "profiles=false", "--set", "augmentation_variants=[\"no-aug\"]"}) == 0);
  const auto report = EvalReport::from_json(read_file(dir / "reports" / "report.json"));
  REQUIRE(report.rows.size() == 2);
  for (const auto& row : report.rows) CHECK(row.defense == "none");
  CHECK(report.rows[0].seed == 3);
  CHECK(report.rows[1].seed == 4);
  REQUIRE(report.cells().size() == 1);
  CHECK(report.cells()[0].seeds == 2);

  CHECK(latsep_cli({"evaluate", "-c", preset, "--output-dir", dir.string(), "--defenses", "none", "--seeds", "3,4",
                    "--set", "train.epochs=1", "--set", "train.decay_epochs=[]", "--set", "sweep_opacities=[]",
                    "--set", "profiles=false", "--set", "augmentation_variants=[\"no-aug\"]",
                    "--checkpoint", (dir / "checkpoints" / "seed-3-no-aug.ckpt").string()}) == 0);
}
