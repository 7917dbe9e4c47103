#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <numbers>

#include "latsep/attacks.hpp"
#include "latsep/cleansers.hpp"
#include "latsep/config.hpp"
#include "latsep/defense_stats.hpp"
#include "latsep/errors.hpp"
#include "latsep/fsutil.hpp"
#include "latsep/latent.hpp"
#include "latsep/metrics.hpp"
#include "latsep/poison.hpp"
#include "latsep/report.hpp"
#include "latsep/serialize.hpp"
#include "latsep/trigger.hpp"

namespace py = pybind11;
using namespace latsep;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

ImageShape shape_of(const py::tuple& t) {
  if (t.size() != 3) throw InvalidInput("shape must be (height, width, channels)");
  return {t[0].cast<int>(), t[1].cast<int>(), t[2].cast<int>()};
}

py::tuple shape_tuple(const ImageShape& s) { return py::make_tuple(s.height, s.width, s.channels); }

FloatArray image_array(const ImageShape& s, std::span<const float> pixels) {
  FloatArray out({s.height, s.width, s.channels});
  std::copy(pixels.begin(), pixels.end(), out.mutable_data());
  return out;
}

std::vector<std::size_t> to_indices(const std::vector<long long>& v) {
  std::vector<std::size_t> out;
  out.reserve(v.size());
  for (long long i : v) {
    if (i < 0) throw InvalidInput("negative sample index");
    out.push_back(static_cast<std::size_t>(i));
  }
  return out;
}

py::object json_object(const std::string& text) { return py::module_::import("json").attr("loads")(text); }

ClassLatents class_latents(const Matrix& reps, const std::vector<bool>& poison) {
  if (static_cast<std::size_t>(reps.rows()) != poison.size()) throw InvalidInput("one poison flag per row expected");
  ClassLatents cl;
  cl.reps = reps;
  for (std::size_t i = 0; i < poison.size(); ++i) {
    cl.roles.push_back(poison[i] ? Role::payload : Role::clean);
    cl.indices.push_back(i);
  }
  return cl;
}

}  // namespace

PYBIND11_MODULE(_latsep, m) {
  m.doc() = "Backdoor poisoning plans, triggers and latent-separability cleansers.";

  py::register_exception<Error>(m, "Error");
  py::register_exception<ConfigError>(m, "ConfigError", m.attr("Error"));
  py::register_exception<IntegrityError>(m, "IntegrityError", m.attr("Error"));
  py::register_exception<InvalidInput>(m, "InvalidInput", m.attr("Error"));
  py::register_exception<PlanningError>(m, "PlanningError", m.attr("Error"));
  py::register_exception<UndefinedProfile>(m, "UndefinedProfile", m.attr("Error"));
  py::register_exception<IoError>(m, "IoError", m.attr("Error"));

  py::class_<TriggerSpec>(m, "TriggerSpec")
      .def_readonly("name", &TriggerSpec::name)
      .def_property_readonly("shape", [](const TriggerSpec& t) { return shape_tuple(t.shape); })
      .def_property_readonly("pattern", [](const TriggerSpec& t) { return image_array(t.shape, t.pattern); })
      .def_property_readonly("mask",
                             [](const TriggerSpec& t) {
                               py::array_t<std::uint8_t> out({t.shape.height, t.shape.width});
                               std::copy(t.mask.begin(), t.mask.end(), out.mutable_data());
                               return out;
                             })
      .def_readwrite("train_opacity", &TriggerSpec::train_opacity)
      .def_readwrite("test_opacity", &TriggerSpec::test_opacity);

  m.def("builtin_trigger_names", &builtin_trigger_names);
  m.def(
      "make_builtin_trigger",
      [](const std::string& name, const py::tuple& shape) { return make_builtin_trigger(name, shape_of(shape)); },
      py::arg("name"), py::arg("shape"));
  m.def(
      "apply_trigger",
      [](const FloatArray& image, const TriggerSpec& spec, double opacity) {
        if (image.ndim() != 3 || image.shape(0) != spec.shape.height || image.shape(1) != spec.shape.width ||
            image.shape(2) != spec.shape.channels) {
          throw InvalidInput("image shape does not match trigger shape " + spec.shape.str());
        }
        const auto out = apply_trigger(std::span<const float>(image.data(), image.size()), spec, opacity);
        return image_array(spec.shape, out);
      },
      py::arg("image"), py::arg("spec"), py::arg("opacity"), "Blends the trigger into an HWC float image.");

  py::class_<AttackConfig>(m, "AttackConfig")
      .def_property_readonly("strategy", [](const AttackConfig& a) { return std::string(to_string(a.strategy)); })
      .def_readonly("triggers", &AttackConfig::triggers)
      .def_readwrite("target_class", &AttackConfig::target_class)
      .def_readwrite("payload_rate", &AttackConfig::payload_rate)
      .def_readwrite("cover_rate", &AttackConfig::cover_rate)
      .def_property_readonly("test_triggers", [](const AttackConfig& a) {
        py::list out;
        for (const auto& t : a.test_triggers) out.append(py::make_tuple(t.id, t.opacity));
        return out;
      });

  m.def(
      "preset_attack",
      [](const std::string& strategy, const py::tuple& shape, const std::string& dataset) {
        return preset_attack(strategy_from_string(strategy), shape_of(shape), dataset);
      },
      py::arg("strategy"), py::arg("shape") = py::make_tuple(32, 32, 3), py::arg("dataset") = "cifar10");
  m.def("expected_asr", &expected_asr, py::arg("config"));

  py::class_<PoisonPlan>(m, "PoisonPlan")
      .def_readonly("target_class", &PoisonPlan::target_class)
      .def_readonly("seed", &PoisonPlan::seed)
      .def_property_readonly("payload_count", &PoisonPlan::payload_count)
      .def_property_readonly("cover_count", &PoisonPlan::cover_count)
      .def_property_readonly("entries",
                             [](const PoisonPlan& p) {
                               py::list out;
                               for (const auto& e : p.entries) {
                                 out.append(py::make_tuple(e.index, std::string(to_string(e.role)), e.trigger_id,
                                                           e.assigned_label));
                               }
                               return out;
                             })
      .def(
          "indices",
          [](const PoisonPlan& p, const std::string& role) {
            std::vector<std::size_t> out;
            for (const auto& e : p.entries_with(role_from_string(role))) out.push_back(e.index);
            return out;
          },
          py::arg("role"));

  m.def(
      "make_attack",
      [](const AttackConfig& config, const std::vector<int>& labels, int num_classes, std::uint64_t seed) {
        return make_attack(config, labels, num_classes, seed);
      },
      py::arg("config"), py::arg("labels"), py::arg("num_classes"), py::arg("seed"));
  m.def(
      "build_plan",
      [](const std::vector<int>& labels, int num_classes, int target, double payload, double cover,
         const std::vector<std::string>& trigger_ids, std::uint64_t seed) {
        return build_plan(labels, num_classes, target, PoisonRates{payload, cover}, trigger_ids, seed);
      },
      py::arg("labels"), py::arg("num_classes"), py::arg("target_class"), py::arg("payload_rate"),
      py::arg("cover_rate"), py::arg("trigger_ids"), py::arg("seed"));

  m.def(
      "elimination_rate",
      [](const PoisonPlan& p, const std::vector<long long>& s) { return elimination_rate(p, to_indices(s)); },
      py::arg("plan"), py::arg("suspected"));
  m.def(
      "sacrifice_rate",
      [](const PoisonPlan& p, std::size_t n, const std::vector<long long>& s) {
        return sacrifice_rate(p, n, to_indices(s));
      },
      py::arg("plan"), py::arg("n"), py::arg("suspected"));
  m.def(
      "cover_removed",
      [](const PoisonPlan& p, const std::vector<long long>& s) { return cover_removed(p, to_indices(s)); },
      py::arg("plan"), py::arg("suspected"));

  py::class_<CleanseResult>(m, "CleanseResult")
      .def_readonly("method", &CleanseResult::method)
      .def_readonly("parameters", &CleanseResult::parameters)
      .def_readonly("per_class_scores", &CleanseResult::per_class_scores)
      .def_readonly("flagged_classes", &CleanseResult::flagged_classes)
      .def_readonly("low_confidence_classes", &CleanseResult::low_confidence_classes)
      .def_readonly("suspected_indices", &CleanseResult::suspected_indices)
      .def("to_json", [](const CleanseResult& r) { return dump(to_json(r)); });

  m.def(
      "spectral_signature",
      [](const Matrix& latents, const std::vector<int>& labels, double payload_rate) {
        return spectral_signature(latents, labels, payload_rate);
      },
      py::arg("latents"), py::arg("labels"), py::arg("payload_rate"));
  m.def(
      "activation_clustering",
      [](const Matrix& latents, const std::vector<int>& labels, double silhouette_threshold,
         std::optional<double> min_cluster_fraction, int reduced_dim, std::uint64_t seed) {
        return activation_clustering(latents, labels,
                                     {silhouette_threshold, min_cluster_fraction, reduced_dim, seed});
      },
      py::arg("latents"), py::arg("labels"), py::arg("silhouette_threshold") = 0.15,
      py::arg("min_cluster_fraction") = py::none(), py::arg("reduced_dim") = 10, py::arg("seed") = 0);
  m.def(
      "scan",
      [](const Matrix& latents, const std::vector<int>& labels, const Matrix& clean_base,
         const std::vector<int>& clean_base_labels, double threshold, std::optional<int> pca_dim, int split_restarts) {
        ScanOptions o;
        o.threshold = threshold;
        o.pca_dim = pca_dim;
        o.split_restarts = split_restarts;
        return scan(latents, labels, clean_base, clean_base_labels, o);
      },
      py::arg("latents"), py::arg("labels"), py::arg("clean_base"), py::arg("clean_base_labels"),
      py::arg("threshold") = std::numbers::e, py::arg("pca_dim") = py::none(), py::arg("split_restarts") = 8);
  m.def(
      "spectre",
      [](const Matrix& latents, const std::vector<int>& labels, double payload_rate, int pca_dim) {
        SpectreOptions o;
        o.pca_dim = pca_dim;
        return spectre(latents, labels, payload_rate, o);
      },
      py::arg("latents"), py::arg("labels"), py::arg("payload_rate"), py::arg("pca_dim") = 32);

  m.def(
      "synth_latents",
      [](std::size_t n_clean, std::size_t n_poison, int dim, double separation, std::uint64_t seed) {
        const auto cl = synth_latents(n_clean, n_poison, dim, separation, seed);
        std::vector<bool> poison;
        for (auto r : cl.roles) poison.push_back(r != Role::clean);
        return py::make_tuple(cl.reps, poison);
      },
      py::arg("n_clean"), py::arg("n_poison"), py::arg("dim"), py::arg("separation"), py::arg("seed"),
      "Returns (latents, poison flags) of one synthetic class.");
  m.def(
      "synth_multiclass_latents",
      [](int num_classes, std::size_t n_per_class, std::size_t n_poison, int dim, double separation,
         int poisoned_class, std::size_t base_per_class, std::uint64_t seed) {
        const auto d = synth_multiclass_latents(num_classes, n_per_class, n_poison, dim, separation, poisoned_class,
                                                base_per_class, seed);
        py::dict out;
        out["latents"] = d.latents;
        out["labels"] = d.labels;
        out["poison"] = d.poison;
        out["clean_base"] = d.clean_base;
        out["clean_base_labels"] = d.clean_base_labels;
        return out;
      },
      py::arg("num_classes"), py::arg("n_per_class"), py::arg("n_poison"), py::arg("dim"), py::arg("separation"),
      py::arg("poisoned_class"), py::arg("base_per_class"), py::arg("seed"));

  m.def(
      "separability_score",
      [](const Matrix& reps, const std::vector<bool>& poison) {
        const auto s = separability_score(class_latents(reps, poison));
        py::dict out;
        out["silhouette"] = s.silhouette;
        out["svm_train_accuracy"] = s.svm_train_accuracy;
        out["low_confidence"] = s.low_confidence;
        return out;
      },
      py::arg("latents"), py::arg("poison"), "Silhouette of the oracle split and oracle linear-SVM train accuracy.");
  m.def(
      "oracle_svm_distances",
      [](const Matrix& reps, const std::vector<bool>& poison) {
        return oracle_svm_profile(class_latents(reps, poison)).signed_distances;
      },
      py::arg("latents"), py::arg("poison"));
  m.def(
      "project_pca", [](const Matrix& reps) { return project_pca(reps).coords; }, py::arg("latents"));

  m.def(
      "mad_anomaly_indices", [](const std::vector<double>& v) { return mad_anomaly_indices(v); }, py::arg("values"));
  m.def(
      "select_nc_target",
      [](const std::vector<double>& norms, const std::vector<double>& indices, double threshold) {
        return select_nc_target(norms, indices, threshold);
      },
      py::arg("mask_norms"), py::arg("anomaly_indices"), py::arg("threshold") = 2.0);
  m.def(
      "shannon_entropy", [](const std::vector<float>& p) { return shannon_entropy(p); }, py::arg("probabilities"));
  m.def(
      "strip_threshold", [](const std::vector<double>& v, double fpr) { return strip_threshold(v, fpr); },
      py::arg("validation_entropies"), py::arg("fpr") = 0.10);
  m.def(
      "strip_cleanse",
      [](const std::vector<double>& train, const std::vector<double>& validation, double fpr) {
        return strip_cleanse(train, validation, fpr);
      },
      py::arg("train_entropies"), py::arg("validation_entropies"), py::arg("fpr") = 0.10);
  m.def(
      "isolation_precision",
      [](const PoisonPlan& p, const std::vector<long long>& isolated) {
        return isolation_precision(p, to_indices(isolated));
      },
      py::arg("plan"), py::arg("isolated"));

  m.def(
      "load_config",
      [](const std::filesystem::path& path, const std::vector<std::string>& overrides) {
        Json j = load_config_json(path);
        for (const auto& o : overrides) apply_override(j, o);
        auto c = config_from_json(j, path.parent_path().string());
        c.validate();
        return json_object(dump(to_json(c)));
      },
      py::arg("path"), py::arg("overrides") = std::vector<std::string>{},
      "Resolved experiment config, with includes merged and defaults filled in, as a dict.");
  m.def(
      "read_report",
      [](const std::filesystem::path& path) { return json_object(EvalReport::from_json(read_file(path)).to_json()); },
      py::arg("path"), "Loads report.json, checking its averages against the per-seed rows.");
  m.def(
      "render_report", [](const std::filesystem::path& path) { return EvalReport::from_json(read_file(path)).to_text(); },
      py::arg("path"));
}
