#include "latsep/serialize.hpp"

#include <cmath>
#include <limits>

#include "latsep/errors.hpp"

namespace latsep {

Json number_to_json(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

double number_from_json(const Json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  }
  throw InvalidInput("expected a number, got " + j.dump());
}

Json matrix_to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(number_to_json(m(i, k)));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const Json& j) {
  if (!j.is_array()) throw InvalidInput("expected a matrix as an array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows > 0 ? static_cast<Eigen::Index>(j.at(0).size()) : 0;
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const Json& row = j.at(static_cast<std::size_t>(i));
    if (static_cast<Eigen::Index>(row.size()) != cols) throw InvalidInput("ragged matrix");
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = number_from_json(row.at(static_cast<std::size_t>(k)));
  }
  return m;
}

Json to_json(const CleanseResult& r) {
  Json j;
  j["method"] = r.method;
  Json params = Json::object();
  for (const auto& [k, v] : r.parameters) params[k] = number_to_json(v);
  j["parameters"] = params;
  Json scores = Json::object();
  for (const auto& [c, v] : r.per_class_scores) scores[std::to_string(c)] = number_to_json(v);
  j["per_class_scores"] = scores;
  j["flagged_classes"] = r.flagged_classes;
  j["low_confidence_classes"] = r.low_confidence_classes;
  j["suspected_indices"] = r.suspected_indices;
  return j;
}

CleanseResult cleanse_result_from_json(const Json& j) {
  CleanseResult r;
  r.method = j.at("method").get<std::string>();
  for (const auto& [k, v] : j.at("parameters").items()) r.parameters[k] = number_from_json(v);
  for (const auto& [k, v] : j.at("per_class_scores").items()) r.per_class_scores[std::stoi(k)] = number_from_json(v);
  r.flagged_classes = j.at("flagged_classes").get<std::set<int>>();
  r.low_confidence_classes = j.at("low_confidence_classes").get<std::set<int>>();
  r.suspected_indices = j.at("suspected_indices").get<std::vector<std::size_t>>();
  return r;
}

Json to_json(const SeparabilityProfile& p) {
  Json j;
  j["label"] = p.label;
  j["low_confidence"] = p.low_confidence;
  j["silhouette"] = p.silhouette ? number_to_json(*p.silhouette) : Json();
  j["svm_train_accuracy"] = p.svm_train_accuracy ? number_to_json(*p.svm_train_accuracy) : Json();
  if (p.svm_signed_distances) {
    Json d = Json::array();
    for (double v : *p.svm_signed_distances) d.push_back(number_to_json(v));
    j["svm_signed_distances"] = d;
  } else {
    j["svm_signed_distances"] = nullptr;
  }
  j["pca_coords"] = matrix_to_json(p.pca_coords);
  j["tsne_coords"] = p.tsne_coords ? matrix_to_json(*p.tsne_coords) : Json();
  return j;
}

SeparabilityProfile profile_from_json(const Json& j) {
  SeparabilityProfile p;
  p.label = j.at("label").get<int>();
  p.low_confidence = j.at("low_confidence").get<bool>();
  if (!j.at("silhouette").is_null()) p.silhouette = number_from_json(j.at("silhouette"));
  if (!j.at("svm_train_accuracy").is_null()) p.svm_train_accuracy = number_from_json(j.at("svm_train_accuracy"));
  if (!j.at("svm_signed_distances").is_null()) {
    const Json& d = j.at("svm_signed_distances");
    Vector v(static_cast<Eigen::Index>(d.size()));
    for (std::size_t i = 0; i < d.size(); ++i) v(static_cast<Eigen::Index>(i)) = number_from_json(d[i]);
    p.svm_signed_distances = v;
  }
  p.pca_coords = matrix_from_json(j.at("pca_coords"));
  if (!j.at("tsne_coords").is_null()) p.tsne_coords = matrix_from_json(j.at("tsne_coords"));
  return p;
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

}  // namespace latsep
