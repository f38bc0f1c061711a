#include "dpars/error.hpp"

#include <utility>

namespace dpars {

Error::Error(std::string module, const std::string& message)
    : std::runtime_error("[" + module + "] " + message), module_(std::move(module)) {}

}  // namespace dpars
