#pragma once

#include <json.hpp>

#include "latsep/cleansers.hpp"
#include "latsep/latent.hpp"

namespace latsep {

using Json = nlohmann::ordered_json;

/// Non-finite values are written as the strings "inf", "-inf" and "nan".
Json number_to_json(double v);
double number_from_json(const Json& j);

Json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const Json& j);

Json to_json(const CleanseResult& r);
CleanseResult cleanse_result_from_json(const Json& j);

Json to_json(const SeparabilityProfile& p);
SeparabilityProfile profile_from_json(const Json& j);

/// Stable text form: two-space indentation and a trailing newline.
std::string dump(const Json& j);

}  // namespace latsep
