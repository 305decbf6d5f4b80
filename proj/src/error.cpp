#include "pvot/error.hpp"

namespace pvot {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::GridTooCoarse: return "GridTooCoarse";
    case ErrorKind::GridMismatch: return "GridMismatch";
    case ErrorKind::EmptyReference: return "EmptyReference";
    case ErrorKind::BadDgp: return "BadDgp";
    case ErrorKind::SingularDesign: return "SingularDesign";
    case ErrorKind::DegenerateVariance: return "DegenerateVariance";
    case ErrorKind::UnsupportedLevel: return "UnsupportedLevel";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::PathUnreliable: return "PathUnreliable";
    case ErrorKind::SingularSegment: return "SingularSegment";
    case ErrorKind::ExperimentUnreliable: return "ExperimentUnreliable";
    case ErrorKind::MalformedCsv: return "MalformedCsv";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

}  // namespace pvot
