#include "latsep/poison.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <memory>
#include <set>
#include <sstream>

#include "latsep/errors.hpp"
#include "latsep/fsutil.hpp"
#include "latsep/rng.hpp"

namespace latsep {

static_assert(std::endian::native == std::endian::little, "digest layout assumes a little-endian host");

std::string_view to_string(Role role) {
  switch (role) {
    case Role::clean: return "clean";
    case Role::payload: return "payload";
    case Role::cover: return "cover";
  }
  return "clean";
}

Role role_from_string(std::string_view s) {
  if (s == "clean") return Role::clean;
  if (s == "payload") return Role::payload;
  if (s == "cover") return Role::cover;
  throw InvalidInput("unknown role '" + std::string(s) + "'");
}

std::size_t PoisonPlan::payload_count() const {
  return static_cast<std::size_t>(
      std::count_if(entries.begin(), entries.end(), [](const PlanEntry& e) { return e.role == Role::payload; }));
}

std::size_t PoisonPlan::cover_count() const {
  return static_cast<std::size_t>(
      std::count_if(entries.begin(), entries.end(), [](const PlanEntry& e) { return e.role == Role::cover; }));
}

std::vector<PlanEntry> PoisonPlan::entries_with(Role role) const {
  std::vector<PlanEntry> out;
  std::copy_if(entries.begin(), entries.end(), std::back_inserter(out),
               [role](const PlanEntry& e) { return e.role == role; });
  return out;
}

std::size_t round_half_up(double x) {
  if (!(x >= 0.0)) throw InvalidInput("cannot round a negative count");
  return static_cast<std::size_t>(std::floor(x + 0.5 + 1e-9));
}

namespace {

std::string class_list(const std::vector<int>& classes) {
  std::string s;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(classes[i]);
  }
  return s;
}

std::vector<std::size_t> eligible(std::span<const int> labels, const std::optional<std::vector<int>>& sources,
                                  const std::set<std::size_t>& excluded) {
  std::vector<std::size_t> out;
  out.reserve(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (excluded.contains(i)) continue;
    if (sources && std::find(sources->begin(), sources->end(), labels[i]) == sources->end()) continue;
    out.push_back(i);
  }
  return out;
}

void check_classes(const std::optional<std::vector<int>>& classes, int num_classes, const char* what) {
  if (!classes) return;
  if (classes->empty()) throw PlanningError(std::string(what) + " source-class list is empty");
  for (int c : *classes) {
    if (c < 0 || c >= num_classes) {
      throw PlanningError(std::string(what) + " source class " + std::to_string(c) + " is out of range");
    }
  }
}

}  // namespace

PoisonPlan build_plan(std::span<const int> labels, int num_classes, int target_class, PoisonRates rates,
                      std::span<const std::string> trigger_ids, std::uint64_t seed,
                      const SourceConstraints& constraints) {
  if (target_class < 0 || target_class >= num_classes) {
    throw PlanningError("target class " + std::to_string(target_class) + " is out of range");
  }
  if (rates.payload < 0.0 || rates.cover < 0.0 || rates.payload + rates.cover >= 1.0) {
    throw PlanningError("payload and cover rates must be non-negative and sum to less than 1");
  }
  check_classes(constraints.payload_source_classes, num_classes, "payload");
  check_classes(constraints.cover_source_classes, num_classes, "cover");

  const std::size_t n = labels.size();
  const std::size_t n_payload = round_half_up(rates.payload * static_cast<double>(n));
  const std::size_t n_cover = round_half_up(rates.cover * static_cast<double>(n));
  if (n_payload + n_cover > 0 && trigger_ids.empty()) throw PlanningError("poisoning needs at least one trigger");

  PoisonPlan plan{target_class, seed, rates, {}};

  auto payload_pool = eligible(labels, constraints.payload_source_classes, {});
  if (payload_pool.size() < n_payload) {
    throw PlanningError("payload needs " + std::to_string(n_payload) + " samples but source classes {" +
                        class_list(constraints.payload_source_classes.value_or(std::vector<int>{})) +
                        "} hold only " + std::to_string(payload_pool.size()));
  }
  Rng payload_select(seed, "payload-select");
  payload_select.shuffle(payload_pool.begin(), payload_pool.end());
  payload_pool.resize(n_payload);

  Rng payload_trigger(seed, "payload-trigger");
  for (std::size_t idx : payload_pool) {
    plan.entries.push_back({idx, Role::payload, trigger_ids[payload_trigger.uniform_index(trigger_ids.size())],
                            target_class});
  }

  if (n_cover > 0) {
    std::set<std::size_t> taken(payload_pool.begin(), payload_pool.end());
    auto cover_pool = eligible(labels, constraints.cover_source_classes, taken);
    if (cover_pool.size() < n_cover) {
      throw PlanningError("cover needs " + std::to_string(n_cover) + " samples but source classes {" +
                          class_list(constraints.cover_source_classes.value_or(std::vector<int>{})) +
                          "} hold only " + std::to_string(cover_pool.size()) + " unused samples");
    }
    Rng cover_select(seed, "cover-select");
    cover_select.shuffle(cover_pool.begin(), cover_pool.end());
    cover_pool.resize(n_cover);

    Rng cover_trigger(seed, "cover-trigger");
    for (std::size_t idx : cover_pool) {
      plan.entries.push_back(
          {idx, Role::cover, trigger_ids[cover_trigger.uniform_index(trigger_ids.size())], labels[idx]});
    }
  }

  std::sort(plan.entries.begin(), plan.entries.end(),
            [](const PlanEntry& a, const PlanEntry& b) { return a.index < b.index; });
  return plan;
}

std::vector<Role> PoisonedDatasetManifest::roles() const {
  std::vector<Role> out(n, Role::clean);
  for (const auto& e : plan.entries) {
    if (e.index >= n) throw IntegrityError("manifest entry index beyond dataset size");
    out[e.index] = e.role;
  }
  return out;
}

std::string content_digest(const ImageSet& data) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw Error("SHA-256 unavailable");
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto index = static_cast<std::uint64_t>(i);
    const auto label = static_cast<std::int32_t>(data.label(i));
    auto img = data.image(i);
    EVP_DigestUpdate(ctx.get(), &index, sizeof index);
    EVP_DigestUpdate(ctx.get(), &label, sizeof label);
    EVP_DigestUpdate(ctx.get(), img.data(), img.size_bytes());
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md, &len);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex += kHex[md[i] >> 4];
    hex += kHex[md[i] & 0xf];
  }
  return hex;
}

MaterializedDataset materialize(const ImageSet& clean, const PoisonPlan& plan,
                                std::span<const TriggerSpec> triggers, std::string dataset_id) {
  MaterializedDataset out{clean, {std::move(dataset_id), clean.size(), plan, {}}};
  for (const auto& e : plan.entries) {
    if (e.index >= clean.size()) {
      throw InvalidInput("plan index " + std::to_string(e.index) + " beyond dataset of " +
                         std::to_string(clean.size()));
    }
    const TriggerSpec& spec = find_trigger(triggers, e.trigger_id);
    auto img = out.data.image(e.index);
    apply_trigger(img, spec, spec.train_opacity, img);
    out.data.set_label(e.index, e.assigned_label);
  }
  out.manifest.content_digest = content_digest(out.data);
  return out;
}

bool verify_manifest(const ImageSet& data, const PoisonedDatasetManifest& manifest) {
  return data.size() == manifest.n && content_digest(data) == manifest.content_digest;
}

bool verify_manifest(const ImageSet& data, const std::filesystem::path& manifest_path) {
  if (!std::filesystem::exists(manifest_path)) throw IoError("manifest " + manifest_path.string() + " not found");
  return verify_manifest(data, read_manifest(manifest_path));
}

std::string serialize_manifest(const PoisonedDatasetManifest& m) {
  std::ostringstream out;
  out << "# latsep poisoned-dataset manifest v1\n";
  out << "dataset_id=" << m.dataset_id << "\n";
  out << "n=" << m.n << "\n";
  out << "target_class=" << m.plan.target_class << "\n";
  out << "payload_rate=" << format_double(m.plan.rates.payload) << "\n";
  out << "cover_rate=" << format_double(m.plan.rates.cover) << "\n";
  out << "seed=" << m.plan.seed << "\n";
  out << "digest=" << m.content_digest << "\n";
  out << "index,role,trigger_id,assigned_label\n";
  for (const auto& e : m.plan.entries) {
    out << e.index << "," << to_string(e.role) << "," << e.trigger_id << "," << e.assigned_label << "\n";
  }
  return out.str();
}

namespace {

template <class T>
T parse_number(std::string_view s, std::string_view field) {
  T v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw IoError("manifest field '" + std::string(field) + "' is not a number: " + std::string(s));
  }
  return v;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(sep, start);
    out.push_back(line.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

PoisonedDatasetManifest parse_manifest(std::string_view text) {
  PoisonedDatasetManifest m;
  bool in_records = false;
  std::set<std::string> seen;
  for (auto line : split(text, '\n')) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == '#') continue;
    if (!in_records) {
      if (line == "index,role,trigger_id,assigned_label") {
        in_records = true;
        continue;
      }
      auto eq = line.find('=');
      if (eq == std::string_view::npos) throw IoError("malformed manifest header line: " + std::string(line));
      auto key = line.substr(0, eq);
      auto value = line.substr(eq + 1);
      seen.emplace(key);
      if (key == "dataset_id") m.dataset_id = value;
      else if (key == "n") m.n = parse_number<std::size_t>(value, key);
      else if (key == "target_class") m.plan.target_class = parse_number<int>(value, key);
      else if (key == "payload_rate") m.plan.rates.payload = parse_number<double>(value, key);
      else if (key == "cover_rate") m.plan.rates.cover = parse_number<double>(value, key);
      else if (key == "seed") m.plan.seed = parse_number<std::uint64_t>(value, key);
      else if (key == "digest") m.content_digest = value;
      else throw IoError("unknown manifest header key '" + std::string(key) + "'");
      continue;
    }
    auto fields = split(line, ',');
    if (fields.size() != 4) throw IoError("malformed manifest record: " + std::string(line));
    m.plan.entries.push_back({parse_number<std::size_t>(fields[0], "index"), role_from_string(fields[1]),
                              std::string(fields[2]), parse_number<int>(fields[3], "assigned_label")});
  }
  for (const char* key : {"dataset_id", "n", "target_class", "payload_rate", "cover_rate", "seed", "digest"}) {
    if (!seen.contains(key)) throw IoError(std::string("manifest is missing header key '") + key + "'");
  }
  return m;
}

void write_manifest(const std::filesystem::path& path, const PoisonedDatasetManifest& manifest) {
  write_file_atomic(path, serialize_manifest(manifest));
}

PoisonedDatasetManifest read_manifest(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("manifest " + path.string() + " not found");
  return parse_manifest(read_file(path));
}

}  // namespace latsep
