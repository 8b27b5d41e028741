#include "semcon/core/errors.hpp"

namespace semcon {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidLabel: return "invalid-label";
    case ErrorKind::InvalidEncoding: return "invalid-encoding";
    case ErrorKind::Shape: return "shape";
    case ErrorKind::Schema: return "schema";
    case ErrorKind::Config: return "config";
    case ErrorKind::Prerequisite: return "prerequisite";
    case ErrorKind::NumericalFault: return "numerical-fault";
    case ErrorKind::Io: return "io";
    case ErrorKind::UndefinedGap: return "undefined-gap";
    case ErrorKind::EmptySubset: return "empty-subset";
  }
  return "unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + " error: " + message), kind_(kind) {}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace semcon
