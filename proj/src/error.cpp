#include "opinet/error.hpp"

namespace opinet {

int exit_code(ErrorCategory category) noexcept {
  switch (category) {
    case ErrorCategory::config: return 2;
    case ErrorCategory::data: return 3;
    case ErrorCategory::numeric: return 4;
    case ErrorCategory::resource: return 5;
    case ErrorCategory::generic: break;
  }
  return 1;
}

std::string_view category_name(ErrorCategory category) noexcept {
  switch (category) {
    case ErrorCategory::config: return "config";
    case ErrorCategory::data: return "data";
    case ErrorCategory::numeric: return "numeric";
    case ErrorCategory::resource: return "resource";
    case ErrorCategory::generic: break;
  }
  return "generic";
}

}  // namespace opinet
