#pragma once

#include <stdexcept>
#include <string>

namespace bnnp {

enum class ErrorKind {
  invalid_shape,
  invalid_mask,
  numerical_failure,
  degenerate_batch,
  degenerate_labels,
  invalid_config,
  format_error,
  io_error,
};

const char* to_string(ErrorKind kind);

// Base of every library error. `kind()` lets the CLI map failures to exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);
  ErrorKind kind() const noexcept { return kind_; }
  // Message without the kind prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorKind kind_;
  std::string detail_;
};

#define BNNP_DEFINE_ERROR(Name, Kind)                                   \
  class Name : public Error {                                          \
   public:                                                             \
    explicit Name(const std::string& message) : Error(Kind, message) {} \
  };

BNNP_DEFINE_ERROR(InvalidShape, ErrorKind::invalid_shape)
BNNP_DEFINE_ERROR(InvalidMask, ErrorKind::invalid_mask)
BNNP_DEFINE_ERROR(NumericalFailure, ErrorKind::numerical_failure)
BNNP_DEFINE_ERROR(DegenerateBatch, ErrorKind::degenerate_batch)
BNNP_DEFINE_ERROR(DegenerateLabels, ErrorKind::degenerate_labels)
BNNP_DEFINE_ERROR(InvalidConfig, ErrorKind::invalid_config)
BNNP_DEFINE_ERROR(FormatError, ErrorKind::format_error)
BNNP_DEFINE_ERROR(IoError, ErrorKind::io_error)

#undef BNNP_DEFINE_ERROR

}  // namespace bnnp
