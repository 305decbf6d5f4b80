#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pvot {

enum class ErrorKind {
  InvalidArgument,
  GridTooCoarse,
  GridMismatch,
  EmptyReference,
  BadDgp,
  SingularDesign,
  DegenerateVariance,
  UnsupportedLevel,
  NoConvergence,
  PathUnreliable,
  SingularSegment,
  ExperimentUnreliable,
  MalformedCsv,
  Io,
};

std::string_view to_string(ErrorKind kind);

/// Single exception type for the library; `kind()` identifies the failure.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace pvot
