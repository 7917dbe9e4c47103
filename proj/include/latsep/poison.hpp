#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "latsep/image.hpp"
#include "latsep/trigger.hpp"

namespace latsep {

enum class Role { clean, payload, cover };

std::string_view to_string(Role role);
Role role_from_string(std::string_view s);

/// One trigger-planted training sample.
/// Payload entries carry the target class; cover entries keep their ground truth.
struct PlanEntry {
  std::size_t index = 0;
  Role role = Role::payload;
  std::string trigger_id;
  int assigned_label = 0;

  bool operator==(const PlanEntry&) const = default;
};

/// Payload and cover rates, as fractions of the training-set size.
struct PoisonRates {
  double payload = 0.0;
  double cover = 0.0;

  bool operator==(const PoisonRates&) const = default;
};

struct PoisonPlan {
  int target_class = 0;
  std::uint64_t seed = 0;
  PoisonRates rates;
  std::vector<PlanEntry> entries;  // sorted by index

  std::size_t payload_count() const;
  std::size_t cover_count() const;
  /// Entries with the given role, in index order.
  std::vector<PlanEntry> entries_with(Role role) const;

  bool operator==(const PoisonPlan&) const = default;
};

struct SourceConstraints {
  std::optional<std::vector<int>> payload_source_classes;
  std::optional<std::vector<int>> cover_source_classes;
};

/// floor(x + 1/2), tolerant to representation error just below the half.
std::size_t round_half_up(double x);

/// Selects round(payload·n) payload and round(cover·n) cover samples without
/// replacement and assigns each a trigger uniformly from `trigger_ids`.
///
/// Payload selection and payload trigger draws use their own seed streams, so
/// adding cover samples never changes which samples become payload. Cover
/// samples are drawn from the eligible samples not already taken as payload.
/// Payload candidates may already belong to the target class unless the
/// constraints restrict the source classes.
PoisonPlan build_plan(std::span<const int> labels, int num_classes, int target_class, PoisonRates rates,
                      std::span<const std::string> trigger_ids, std::uint64_t seed,
                      const SourceConstraints& constraints = {});

struct PoisonedDatasetManifest {
  std::string dataset_id;
  std::size_t n = 0;
  PoisonPlan plan;
  std::string content_digest;

  /// Role of every sample in [0, n).
  std::vector<Role> roles() const;

  bool operator==(const PoisonedDatasetManifest&) const = default;
};

/// SHA-256 over (index, label, pixels) of every sample, in order.
std::string content_digest(const ImageSet& data);

struct MaterializedDataset {
  ImageSet data;
  PoisonedDatasetManifest manifest;
};

/// Plants each planned trigger at its training opacity and applies the planned
/// label. Samples outside the plan are copied unchanged.
MaterializedDataset materialize(const ImageSet& clean, const PoisonPlan& plan,
                                std::span<const TriggerSpec> triggers, std::string dataset_id);

bool verify_manifest(const ImageSet& data, const PoisonedDatasetManifest& manifest);
/// Throws IoError when the manifest file is missing or unreadable.
bool verify_manifest(const ImageSet& data, const std::filesystem::path& manifest_path);

std::string serialize_manifest(const PoisonedDatasetManifest& manifest);
PoisonedDatasetManifest parse_manifest(std::string_view text);
void write_manifest(const std::filesystem::path& path, const PoisonedDatasetManifest& manifest);
PoisonedDatasetManifest read_manifest(const std::filesystem::path& path);

}  // namespace latsep
