#include "bnnp/errors.hpp"

namespace bnnp {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_shape: return "InvalidShape";
    case ErrorKind::invalid_mask: return "InvalidMask";
    case ErrorKind::numerical_failure: return "NumericalFailure";
    case ErrorKind::degenerate_batch: return "DegenerateBatch";
    case ErrorKind::degenerate_labels: return "DegenerateLabels";
    case ErrorKind::invalid_config: return "InvalidConfig";
    case ErrorKind::format_error: return "FormatError";
    case ErrorKind::io_error: return "IoError";
  }
  return "Error";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind), detail_(message) {}

}  // namespace bnnp
