// End-to-end acceptance criteria, driven through the latsep command line.
//
//   acceptance_pipeline reproducibility <latsep> <presets-dir> <work-dir>
//   acceptance_pipeline desk-cifar10 <latsep> <presets-dir> <work-dir>
//
// desk-cifar10 exits 77 when CIFAR-10 is not under $LATSEP_DATA_ROOT (or ./data).
#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "checks.hpp"
#include "latsep/datasets.hpp"
#include "latsep/errors.hpp"
#include "latsep/fsutil.hpp"
#include "latsep/report.hpp"
#include "latsep/serialize.hpp"

namespace fs = std::filesystem;
using namespace latsep;
using acceptance::Checklist;
using acceptance::fmt;

namespace {

// Criterion 3.
constexpr double kMinBlendAsr = 0.80;
constexpr double kAdaptiveAsrLow = 0.35;
constexpr double kAdaptiveAsrHigh = 0.70;
constexpr double kMaxCaGap = 0.02;
constexpr double kMinSvmGap = 0.05;
constexpr double kMaxAdaptiveElimination = 0.10;
constexpr double kMinBlendElimination = 0.60;
// Criterion 4.
constexpr double kStripSacrifice = 0.10;
constexpr double kStripSacrificeTol = 0.02;
constexpr double kMaxStripElimination = 0.15;
// Criterion 5.
constexpr double kSweepNoise = 0.05;
constexpr double kMaxAsrAtZero = 0.05;
const std::vector<double> kSweepOpacities{0.0, 0.1, 0.2, 0.25, 0.3};

constexpr int kSkip = 77;

struct Cli {
  std::string binary;
  fs::path presets;

  int operator()(const std::vector<std::string>& args) const {
    std::string cmd = quote(binary) + " --log-level warn";
    for (const auto& a : args) cmd += " " + quote(a);
    std::cerr << "$ " << cmd << "\n";
    const int status = std::system(cmd.c_str());
    if (status == -1 || !WIFEXITED(status)) return -1;
    return WEXITSTATUS(status);
  }

  static std::string quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) out += c == '\'' ? std::string("'\\''") : std::string(1, c);
    return out + "'";
  }
};

std::string read_or_empty(const fs::path& p) { return fs::exists(p) ? read_file(p) : std::string(); }

int reproducibility(const Cli& cli, const fs::path& work) {
  Checklist c("acceptance-reproducibility");
  const std::string crit = "6 reproducibility";
  fs::remove_all(work);
  fs::create_directories(work);
  const auto preset = (cli.presets / "desk_synthetic.json").string();
  auto run = [&](const fs::path& dir) {
    return cli({"run", "-c", preset, "--output-dir", dir.string(), "--set", "train.epochs=2", "--set",
                "train.decay_epochs=[1]"});
  };
  const auto a = work / "a", b = work / "b";
  const int first = run(a);
  const int second = run(b);
  c.expect(crit, first == 0 && second == 0,
           "fresh runs exit " + std::to_string(first) + " and " + std::to_string(second));

  const auto report_a = read_or_empty(a / "reports" / "report.json");
  const auto report_b = read_or_empty(b / "reports" / "report.json");
  c.expect(crit, !report_a.empty() && report_a == report_b,
           "independent fresh runs give byte-identical report.json (" + std::to_string(report_a.size()) + " bytes)");
  c.expect(crit, read_or_empty(a / "reports" / "report.txt") == read_or_empty(b / "reports" / "report.txt"),
           "report.txt identical");

  const auto ledger_before = read_or_empty(a / "ledger.jsonl");
  const int resumed = run(a);
  c.expect(crit, resumed == 0 && read_or_empty(a / "reports" / "report.json") == report_a,
           "resumed run over the intact cache reproduces report.json (exit " + std::to_string(resumed) + ")");
  c.expect(crit, read_or_empty(a / "ledger.jsonl") == ledger_before, "resume recomputes no stage");

  try {
    const auto report = EvalReport::from_json(report_a);
    c.expect(crit, report.complete() && report.rows.size() == 20,
             std::to_string(report.rows.size()) + " rows, averages verified on load");
  } catch (const Error& e) {
    c.expect(crit, false, std::string("report does not load: ") + e.what());
  }
  return c.finish();
}

const EvalRow* find_row(const EvalReport& r, const std::string& defense) {
  for (const auto& row : r.rows) {
    if (row.defense == defense && row.ok()) return &row;
  }
  return nullptr;
}

double value_or_nan(const EvalRow* row, std::optional<double> EvalRow::*field) {
  return row && (row->*field) ? *(row->*field) : std::nan("");
}

struct TargetProfile {
  double svm_accuracy = std::nan("");
  double silhouette = std::nan("");
};

TargetProfile target_profile(const fs::path& run, const std::string& tag) {
  TargetProfile out;
  const auto path = run / "reports" / "profiles" / (tag + ".json");
  if (!fs::exists(path)) return out;
  const auto j = Json::parse(read_file(path));
  const int target = j.at("target_class").get<int>();
  for (const auto& cls : j.at("classes")) {
    const auto p = profile_from_json(cls.at("profile"));
    if (p.label != target) continue;
    if (p.svm_train_accuracy) out.svm_accuracy = *p.svm_train_accuracy;
    if (p.silhouette) out.silhouette = *p.silhouette;
  }
  return out;
}

int desk_cifar10(const Cli& cli, const fs::path& work) {
  Checklist c("acceptance-desk-cifar10");
  const std::string c3 = "3 desk-scale end-to-end", c4 = "4 STRIP property", c5 = "5 asymmetric sweep";
  const auto root = default_data_root();
  if (!dataset_available("cifar10", root)) {
    const std::string why = "CIFAR-10 binary batches not found under " + root.string() + " (set LATSEP_DATA_ROOT)";
    c.not_run(c3, why);
    c.not_run(c4, why);
    c.not_run(c5, why);
    c.finish();
    return kSkip;
  }
  fs::create_directories(work);
  const auto preset = (cli.presets / "desk_cifar10.json").string();
  const std::string tag = "seed-666-aug";
  const auto clean_dir = work / "clean", blend_dir = work / "blend", adaptive_dir = work / "adaptive-blend";
  std::string sweep = "sweep_opacities=[";
  for (std::size_t i = 0; i < kSweepOpacities.size(); ++i) sweep += (i ? "," : "") + format_double(kSweepOpacities[i]);
  sweep += "]";

  const int clean_exit = cli({"run", "-c", preset, "--output-dir", clean_dir.string(), "--set", "attack.strategy=none",
                              "--defenses", "none", "--set", "sweep_opacities=[]", "--set", "profiles=false"});
  const int blend_exit = cli({"run", "-c", preset, "--output-dir", blend_dir.string(), "--set",
                              "attack.strategy=blend", "--defenses", "none,activation_clustering,scan", "--set",
                              "sweep_opacities=[]"});
  const int adaptive_exit = cli({"run", "-c", preset, "--output-dir", adaptive_dir.string(), "--defenses",
                                 "none,activation_clustering,scan,strip", "--set", sweep});
  c.expect(c3, clean_exit == 0 && blend_exit == 0 && adaptive_exit == 0,
           "runs exit " + std::to_string(clean_exit) + "/" + std::to_string(blend_exit) + "/" +
               std::to_string(adaptive_exit));

  auto load = [&](const fs::path& dir) {
    const auto p = dir / "reports" / "report.json";
    return fs::exists(p) ? EvalReport::from_json(read_file(p)) : EvalReport{};
  };
  const auto clean = load(clean_dir), blend = load(blend_dir), adaptive = load(adaptive_dir);

  const double blend_asr = value_or_nan(find_row(blend, "none"), &EvalRow::asr);
  c.expect(c3, blend_asr >= kMinBlendAsr, "(a) Blend ASR " + fmt(blend_asr) + " >= " + fmt(kMinBlendAsr));
  const double ab_asr = value_or_nan(find_row(adaptive, "none"), &EvalRow::asr);
  c.expect(c3, ab_asr >= kAdaptiveAsrLow && ab_asr <= kAdaptiveAsrHigh,
           "(b) Adaptive-Blend ASR " + fmt(ab_asr) + " in [" + fmt(kAdaptiveAsrLow) + ", " + fmt(kAdaptiveAsrHigh) + "]");
  const double clean_ca = value_or_nan(find_row(clean, "none"), &EvalRow::clean_accuracy);
  const double ab_ca = value_or_nan(find_row(adaptive, "none"), &EvalRow::clean_accuracy);
  c.expect(c3, std::abs(ab_ca - clean_ca) <= kMaxCaGap,
           "(c) CA " + fmt(ab_ca) + " vs clean baseline " + fmt(clean_ca) + ", gap <= " + fmt(kMaxCaGap));

  const auto pb = target_profile(blend_dir, tag), pa = target_profile(adaptive_dir, tag);
  c.expect(c3, pa.svm_accuracy <= pb.svm_accuracy - kMinSvmGap,
           "(d) target-class SVM accuracy " + fmt(pa.svm_accuracy) + " vs Blend " + fmt(pb.svm_accuracy));
  c.expect(c3, pa.silhouette < pb.silhouette,
           "(d) target-class silhouette " + fmt(pa.silhouette) + " vs Blend " + fmt(pb.silhouette));

  for (const std::string d : {"activation_clustering", "scan"}) {
    const double ea = value_or_nan(find_row(adaptive, d), &EvalRow::elimination_rate);
    const double eb = value_or_nan(find_row(blend, d), &EvalRow::elimination_rate);
    c.expect(c3, ea <= kMaxAdaptiveElimination && eb >= kMinBlendElimination,
             "(e) " + d + " elimination " + fmt(ea) + " on Adaptive-Blend, " + fmt(eb) + " on Blend");
  }

  const auto* strip = find_row(adaptive, "strip");
  const double ss = value_or_nan(strip, &EvalRow::sacrifice_rate);
  const double se = value_or_nan(strip, &EvalRow::elimination_rate);
  c.expect(c4, std::abs(ss - kStripSacrifice) <= kStripSacrificeTol,
           "sacrifice " + fmt(ss) + " within " + fmt(kStripSacrificeTol) + " of " + fmt(kStripSacrifice));
  c.expect(c4, se <= kMaxStripElimination, "Adaptive-Blend elimination " + fmt(se) + " <= " + fmt(kMaxStripElimination));

  const auto sweep_path = adaptive_dir / "reports" / "sweeps" / (tag + ".json");
  std::vector<std::pair<double, double>> points;
  if (fs::exists(sweep_path)) {
    const auto stored = Json::parse(read_file(sweep_path));
    for (const auto& p : stored.at("points")) {
      points.emplace_back(number_from_json(p.at("opacity")), number_from_json(p.at("asr")));
    }
  }
  bool grid = points.size() == kSweepOpacities.size();
  for (std::size_t i = 0; grid && i < points.size(); ++i) grid = points[i].first == kSweepOpacities[i];
  std::string curve;
  for (const auto& [o, a] : points) curve += " " + fmt(o, 2) + ":" + fmt(a);
  c.expect(c5, grid, "ASR at" + curve);
  bool monotone = grid;
  for (std::size_t i = 1; monotone && i < points.size(); ++i) monotone = points[i].second >= points[i - 1].second - kSweepNoise;
  c.expect(c5, monotone, "non-decreasing within " + fmt(kSweepNoise));
  c.expect(c5, grid && points.front().second <= kMaxAsrAtZero,
           "ASR at opacity 0 is " + (grid ? fmt(points.front().second) : std::string("missing")) + " <= " + fmt(kMaxAsrAtZero));
  return c.finish();
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 5) {
    std::cerr << "usage: acceptance_pipeline reproducibility|desk-cifar10 <latsep> <presets-dir> <work-dir>\n";
    return 2;
  }
  const std::string mode = argv[1];
  const Cli cli{argv[2], argv[3]};
  const fs::path work = argv[4];
  try {
    if (mode == "reproducibility") return reproducibility(cli, work);
    if (mode == "desk-cifar10") return desk_cifar10(cli, work);
  } catch (const std::exception& e) {
    std::cerr << "acceptance_pipeline: " << e.what() << "\n";
    return 1;
  }
  std::cerr << "unknown mode " << mode << "\n";
  return 2;
}
