#include "trace/tensor.hpp"

namespace trace {

Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::relu;
  if (name == "selu") return Activation::selu;
  if (name == "sigmoid") return Activation::sigmoid;
  throw ConfigError("unknown activation '" + name + "'");
}

std::string to_string(Activation kind) {
  switch (kind) {
    case Activation::relu:
      return "relu";
    case Activation::selu:
      return "selu";
    case Activation::sigmoid:
      return "sigmoid";
  }
  return "?";
}

}  // namespace trace
