#pragma once

#include <stdexcept>
#include <string>

namespace clinmcq {

/// Base for every error raised by the toolkit. `kind()` is a stable tag used
/// in structured CLI error output.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
  virtual const char* kind() const noexcept { return "error"; }
};

#define CLINMCQ_DEFINE_ERROR(Name, tag)                           \
  class Name : public Error {                                     \
   public:                                                        \
    using Error::Error;                                           \
    const char* kind() const noexcept override { return tag; }   \
  }

CLINMCQ_DEFINE_ERROR(SchemaError, "schema");
CLINMCQ_DEFINE_ERROR(DataError, "data");
CLINMCQ_DEFINE_ERROR(InvalidArgument, "invalid_argument");
CLINMCQ_DEFINE_ERROR(GenerationError, "generation");
CLINMCQ_DEFINE_ERROR(TransportError, "transport");
CLINMCQ_DEFINE_ERROR(ProtocolError, "protocol");
CLINMCQ_DEFINE_ERROR(CapabilityError, "capability");
CLINMCQ_DEFINE_ERROR(FixtureMissError, "fixture_miss");
CLINMCQ_DEFINE_ERROR(NumericError, "numeric");
CLINMCQ_DEFINE_ERROR(IoError, "io");

#undef CLINMCQ_DEFINE_ERROR

/// Data-row error carrying the 0-based data row index (header excluded).
class RowError : public DataError {
 public:
  RowError(std::size_t row, const std::string& what)
      : DataError("row " + std::to_string(row) + ": " + what), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw InvalidArgument(message);
}

}  // namespace clinmcq
