#pragma once

#include <nlohmann/json.hpp>
#include <span>
#include <string>

#include "lagscope/autodiff/tape.hpp"

namespace lagscope::ad {

/// Shortest-safe decimal form with 17 significant digits ("%.17g"), which
/// round-trips every finite double bit-exactly.
std::string format_double(double value);

/// {"name": {"shape": [...], "values": [...]}, ...} in parameter order.
std::string parameters_to_json(std::span<const Parameter> params);

/// Fills params from a parsed parameter object, matching by name. Every
/// parameter must be present with an identical shape.
void parameters_from_json(const nlohmann::json& doc, std::span<Parameter> params);

}  // namespace lagscope::ad
