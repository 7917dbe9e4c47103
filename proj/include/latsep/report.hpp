#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "latsep/serialize.hpp"

namespace latsep {

/// One (attack, defense, seed, augmentation) outcome.
struct EvalRow {
  std::string attack;
  std::string defense;
  std::uint64_t seed = 0;
  bool augmentation = false;
  std::string status = "ok";  // otherwise "failed:<stage>"
  std::string failure;        // message of a failed stage
  std::optional<double> elimination_rate;
  std::optional<double> sacrifice_rate;
  std::optional<std::size_t> cover_removed;
  std::optional<std::size_t> suspected;
  std::optional<double> asr;
  std::optional<double> clean_accuracy;
  std::optional<double> anomaly_index;
  std::optional<double> isolation_precision;

  bool ok() const { return status == "ok"; }
  bool operator==(const EvalRow&) const = default;
};

/// Mean over seeds of the selected rows of one (attack, defense) pair.
struct EvalCell {
  std::string attack;
  std::string defense;
  std::size_t seeds = 0;
  std::vector<std::string> aug_selection;  // "aug" or "no-aug", per seed in row order
  std::optional<double> elimination_rate;
  std::optional<double> sacrifice_rate;
  std::optional<double> cover_removed;
  std::optional<double> asr;
  std::optional<double> clean_accuracy;
  std::optional<double> anomaly_index;
  std::optional<double> isolation_precision;

  bool operator==(const EvalCell&) const = default;
};

inline constexpr std::string_view kSelectionRule =
    "better of aug/no-aug per defense and seed: lower post-defense ASR, ties broken by higher clean accuracy";
inline constexpr std::string_view kAsrConvention =
    "ASR over triggered test samples whose true class is not the target class";

struct EvalReport {
  std::vector<EvalRow> rows;

  /// Per (attack, defense, seed), the better successful row of the two augmentation settings.
  std::vector<EvalRow> selected() const;
  std::vector<EvalCell> cells() const;
  bool complete() const;

  std::string to_json() const;
  /// Throws IntegrityError when the stored averages disagree with the rows.
  static EvalReport from_json(std::string_view text);
  std::string to_text() const;

  bool operator==(const EvalReport&) const = default;
};

Json row_to_json(const EvalRow& r);
EvalRow row_from_json(const Json& j);

/// True when `a` is the better defense outcome under kSelectionRule.
bool better_outcome(const EvalRow& a, const EvalRow& b);

}  // namespace latsep
