#include "lagscope/autodiff/checkpoint.hpp"

#include <cmath>
#include <cstdio>

#include "lagscope/error.hpp"

namespace lagscope::ad {

std::string format_double(double value) {
  if (!std::isfinite(value)) throw NumericalError("checkpoint: non-finite value");
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

std::string parameters_to_json(std::span<const Parameter> params) {
  std::string out = "{";
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (p) out += ",";
    out += nlohmann::json(params[p].name).dump();
    out += ":{\"shape\":[";
    const Shape& shape = params[p].value.shape();
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (i) out += ",";
      out += std::to_string(shape[i]);
    }
    out += "],\"values\":[";
    const auto values = params[p].value.values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (i) out += ",";
      out += format_double(values[i]);
    }
    out += "]}";
  }
  return out + "}";
}

void parameters_from_json(const nlohmann::json& doc, std::span<Parameter> params) {
  if (!doc.is_object()) throw Error("checkpoint: parameter block must be an object");
  for (Parameter& p : params) {
    auto it = doc.find(p.name);
    if (it == doc.end()) throw Error("checkpoint: missing parameter '" + p.name + "'");
    const Shape shape = it->at("shape").get<Shape>();
    if (shape != p.value.shape()) {
      throw Error("checkpoint: parameter '" + p.name + "' has shape " + shape_string(shape) +
                  ", expected " + shape_string(p.value.shape()));
    }
    std::vector<double> values = it->at("values").get<std::vector<double>>();
    p.value = Tensor(shape, std::move(values));
  }
}

}  // namespace lagscope::ad
