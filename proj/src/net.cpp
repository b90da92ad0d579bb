#include "nfbst/net.hpp"

#include <sstream>

namespace nfbst {

namespace {

std::string dimension_message(const std::string& what, Index expected, Index actual) {
  std::ostringstream out;
  out << what << ": expected " << expected << ", got " << actual;
  return out.str();
}

}  // namespace

DimensionError::DimensionError(const std::string& what, Index expected, Index actual)
    : std::invalid_argument(dimension_message(what, expected, actual)), expected_(expected), actual_(actual) {}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::relu:
      return "relu";
    case Activation::tanh:
      return "tanh";
    case Activation::identity:
      return "identity";
  }
  return "unknown";
}

Activation activation_from_string(const std::string& name) {
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  if (name == "identity") return Activation::identity;
  throw std::invalid_argument("unknown activation '" + name + "'");
}

Index Architecture::fan_in(Index layer) const {
  return layer == 0 ? input_dim : hidden_widths[static_cast<std::size_t>(layer - 1)];
}

Index Architecture::fan_out(Index layer) const {
  return layer + 1 == layer_count() ? 1 : hidden_widths[static_cast<std::size_t>(layer)];
}

Index Architecture::weight_offset(Index layer) const {
  Index offset = 0;
  for (Index l = 0; l < layer; ++l) {
    offset += fan_in(l) * fan_out(l) + fan_out(l);
  }
  return offset;
}

Index Architecture::parameter_count() const { return weight_offset(layer_count()); }

void Architecture::validate() const {
  if (input_dim < 1) {
    throw std::invalid_argument("architecture: input_dim must be positive");
  }
  if (hidden_widths.empty()) {
    throw std::invalid_argument("architecture: at least one hidden layer is required");
  }
  for (Index w : hidden_widths) {
    if (w < 1) {
      throw std::invalid_argument("architecture: hidden widths must be positive");
    }
  }
}

void check_parameters(const Architecture& arch, const ParameterVector& params) {
  detail::check_parameter_count(arch, params.size());
  if (!params.allFinite()) {
    throw std::invalid_argument("parameter vector contains non-finite entries");
  }
}

namespace detail {

void check_input(const Architecture& arch, Index actual) {
  if (actual != arch.input_dim) {
    throw DimensionError("input dimension", arch.input_dim, actual);
  }
}

void check_parameter_count(const Architecture& arch, Index actual) {
  const Index expected = arch.parameter_count();
  if (actual != expected) {
    throw DimensionError("parameter count", expected, actual);
  }
}

}  // namespace detail

}  // namespace nfbst
