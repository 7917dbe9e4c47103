#include "latsep/report.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "latsep/errors.hpp"
#include "latsep/serialize.hpp"

namespace latsep {

namespace {

struct Mean {
  double sum = 0.0;
  std::size_t n = 0;
  void add(const std::optional<double>& v) {
    if (v) {
      sum += *v;
      ++n;
    }
  }
  std::optional<double> get() const {
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
  }
};

template <typename T>
Json opt_to_json(const std::optional<T>& v) {
  if (!v) return nullptr;
  if constexpr (std::is_floating_point_v<T>) {
    return number_to_json(*v);
  } else {
    return *v;
  }
}

std::optional<double> opt_double(const Json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return number_from_json(j.at(key));
}

std::optional<std::size_t> opt_size(const Json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<std::size_t>();
}

bool close(const std::optional<double>& a, const std::optional<double>& b) {
  if (a.has_value() != b.has_value()) return false;
  if (!a) return true;
  if (std::isnan(*a) || std::isnan(*b)) return std::isnan(*a) && std::isnan(*b);
  return std::abs(*a - *b) <= 1e-12 * std::max(1.0, std::abs(*a));
}

std::string pct(const std::optional<double>& v) {
  if (!v) return "N.A.";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f%%", 100.0 * *v);
  return buf;
}

std::string num(const std::optional<double>& v, const char* fmt = "%.3f") {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, fmt, *v);
  return buf;
}

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

}  // namespace

bool better_outcome(const EvalRow& a, const EvalRow& b) {
  const double inf = std::numeric_limits<double>::infinity();
  const double asr_a = a.asr.value_or(inf);
  const double asr_b = b.asr.value_or(inf);
  if (asr_a != asr_b) return asr_a < asr_b;
  return a.clean_accuracy.value_or(-inf) > b.clean_accuracy.value_or(-inf);
}

std::vector<EvalRow> EvalReport::selected() const {
  std::vector<EvalRow> out;
  std::map<std::tuple<std::string, std::string, std::uint64_t>, std::size_t> slot;
  for (const auto& r : rows) {
    if (!r.ok()) continue;
    auto key = std::make_tuple(r.attack, r.defense, r.seed);
    auto it = slot.find(key);
    if (it == slot.end()) {
      slot.emplace(key, out.size());
      out.push_back(r);
    } else if (better_outcome(r, out[it->second])) {
      out[it->second] = r;
    }
  }
  return out;
}

std::vector<EvalCell> EvalReport::cells() const {
  std::vector<EvalCell> out;
  std::map<std::pair<std::string, std::string>, std::size_t> slot;
  struct Acc {
    Mean elim, sac, cover, asr, ca, ai, ip;
  };
  std::vector<Acc> acc;
  for (const auto& r : selected()) {
    auto key = std::make_pair(r.attack, r.defense);
    auto it = slot.find(key);
    if (it == slot.end()) {
      it = slot.emplace(key, out.size()).first;
      EvalCell c;
      c.attack = r.attack;
      c.defense = r.defense;
      out.push_back(c);
      acc.emplace_back();
    }
    EvalCell& c = out[it->second];
    Acc& a = acc[it->second];
    ++c.seeds;
    c.aug_selection.push_back(r.augmentation ? "aug" : "no-aug");
    a.elim.add(r.elimination_rate);
    a.sac.add(r.sacrifice_rate);
    a.cover.add(r.cover_removed ? std::optional<double>(static_cast<double>(*r.cover_removed)) : std::nullopt);
    a.asr.add(r.asr);
    a.ca.add(r.clean_accuracy);
    a.ai.add(r.anomaly_index);
    a.ip.add(r.isolation_precision);
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].elimination_rate = acc[i].elim.get();
    out[i].sacrifice_rate = acc[i].sac.get();
    out[i].cover_removed = acc[i].cover.get();
    out[i].asr = acc[i].asr.get();
    out[i].clean_accuracy = acc[i].ca.get();
    out[i].anomaly_index = acc[i].ai.get();
    out[i].isolation_precision = acc[i].ip.get();
  }
  return out;
}

bool EvalReport::complete() const {
  for (const auto& r : rows) {
    if (!r.ok()) return false;
  }
  return true;
}

Json row_to_json(const EvalRow& r) {
  Json o;
  o["attack"] = r.attack;
  o["defense"] = r.defense;
  o["seed"] = r.seed;
  o["augmentation"] = r.augmentation;
  o["status"] = r.status;
  o["failure"] = r.failure;
  o["elimination_rate"] = opt_to_json(r.elimination_rate);
  o["sacrifice_rate"] = opt_to_json(r.sacrifice_rate);
  o["cover_removed"] = opt_to_json(r.cover_removed);
  o["suspected"] = opt_to_json(r.suspected);
  o["asr"] = opt_to_json(r.asr);
  o["clean_accuracy"] = opt_to_json(r.clean_accuracy);
  o["anomaly_index"] = opt_to_json(r.anomaly_index);
  o["isolation_precision"] = opt_to_json(r.isolation_precision);
  return o;
}

EvalRow row_from_json(const Json& o) {
  EvalRow r;
  r.attack = o.at("attack").get<std::string>();
  r.defense = o.at("defense").get<std::string>();
  r.seed = o.at("seed").get<std::uint64_t>();
  r.augmentation = o.at("augmentation").get<bool>();
  r.status = o.at("status").get<std::string>();
  r.failure = o.value("failure", "");
  r.elimination_rate = opt_double(o, "elimination_rate");
  r.sacrifice_rate = opt_double(o, "sacrifice_rate");
  r.cover_removed = opt_size(o, "cover_removed");
  r.suspected = opt_size(o, "suspected");
  r.asr = opt_double(o, "asr");
  r.clean_accuracy = opt_double(o, "clean_accuracy");
  r.anomaly_index = opt_double(o, "anomaly_index");
  r.isolation_precision = opt_double(o, "isolation_precision");
  return r;
}

std::string EvalReport::to_json() const {
  Json j;
  j["format"] = "latsep-eval-report-v1";
  j["selection_rule"] = kSelectionRule;
  j["asr_convention"] = kAsrConvention;
  j["complete"] = complete();
  Json rs = Json::array();
  for (const auto& r : rows) rs.push_back(row_to_json(r));
  j["rows"] = rs;
  Json cs = Json::array();
  for (const auto& c : cells()) {
    Json o;
    o["attack"] = c.attack;
    o["defense"] = c.defense;
    o["seeds"] = c.seeds;
    o["aug_selection"] = c.aug_selection;
    o["elimination_rate"] = opt_to_json(c.elimination_rate);
    o["sacrifice_rate"] = opt_to_json(c.sacrifice_rate);
    o["cover_removed"] = opt_to_json(c.cover_removed);
    o["asr"] = opt_to_json(c.asr);
    o["clean_accuracy"] = opt_to_json(c.clean_accuracy);
    o["anomaly_index"] = opt_to_json(c.anomaly_index);
    o["isolation_precision"] = opt_to_json(c.isolation_precision);
    cs.push_back(std::move(o));
  }
  j["averages"] = cs;
  return dump(j);
}

EvalReport EvalReport::from_json(std::string_view text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const std::exception& e) {
    throw IntegrityError(std::string("report is not valid JSON: ") + e.what());
  }
  EvalReport rep;
  for (const auto& o : j.at("rows")) {
    rep.rows.push_back(row_from_json(o));
  }
  const auto cells = rep.cells();
  const Json& stored = j.at("averages");
  if (stored.size() != cells.size()) throw IntegrityError("report averages do not match its rows");
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const Json& o = stored[i];
    const EvalCell& c = cells[i];
    const bool same = o.at("attack") == c.attack && o.at("defense") == c.defense &&
                      o.at("seeds").get<std::size_t>() == c.seeds &&
                      close(opt_double(o, "elimination_rate"), c.elimination_rate) &&
                      close(opt_double(o, "sacrifice_rate"), c.sacrifice_rate) &&
                      close(opt_double(o, "cover_removed"), c.cover_removed) && close(opt_double(o, "asr"), c.asr) &&
                      close(opt_double(o, "clean_accuracy"), c.clean_accuracy) &&
                      close(opt_double(o, "anomaly_index"), c.anomaly_index) &&
                      close(opt_double(o, "isolation_precision"), c.isolation_precision);
    if (!same) {
      throw IntegrityError("stored averages for " + c.attack + "/" + c.defense + " differ from the per-seed rows");
    }
  }
  return rep;
}

std::string EvalReport::to_text() const {
  std::ostringstream os;
  os << "Selection: " << kSelectionRule << "\n";
  os << "ASR: " << kAsrConvention << "\n";
  std::set<std::string> attacks_seen;
  std::vector<std::string> attacks;
  for (const auto& r : rows) {
    if (attacks_seen.insert(r.attack).second) attacks.push_back(r.attack);
  }
  const auto all_cells = cells();
  for (const auto& attack : attacks) {
    os << "\nAttack: " << attack << "\n";
    os << pad("defense", 22) << pad("ASR", 9) << pad("CA", 9) << pad("elim", 9) << pad("sacr", 9)
       << pad("cover", 8) << pad("anomaly", 9) << pad("iso.prec", 10) << "seeds  aug\n";
    for (const auto& c : all_cells) {
      if (c.attack != attack) continue;
      std::string aug;
      for (const auto& a : c.aug_selection) aug += (aug.empty() ? "" : ",") + a;
      os << pad(c.defense, 22) << pad(pct(c.asr), 9) << pad(pct(c.clean_accuracy), 9)
         << pad(pct(c.elimination_rate), 9) << pad(pct(c.sacrifice_rate), 9)
         << pad(num(c.cover_removed, "%.1f"), 8) << pad(num(c.anomaly_index, "%.2f"), 9)
         << pad(pct(c.isolation_precision), 10) << pad(std::to_string(c.seeds), 7) << aug << "\n";
    }
  }
  bool header = false;
  for (const auto& r : rows) {
    if (r.ok()) continue;
    if (!header) {
      os << "\nFailures:\n";
      header = true;
    }
    os << "  " << r.attack << "/" << r.defense << " seed " << r.seed << (r.augmentation ? " aug" : " no-aug")
       << ": " << r.status << (r.failure.empty() ? "" : " (" + r.failure + ")") << "\n";
  }
  return os.str();
}

}  // namespace latsep
