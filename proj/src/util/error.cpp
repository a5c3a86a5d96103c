#include "tadascope/error.hpp"

namespace tadascope {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NotPE: return "NotPE";
    case ErrorCode::CorruptHeader: return "CorruptHeader";
    case ErrorCode::UnsupportedArch: return "UnsupportedArch";
    case ErrorCode::MalformedManifest: return "MalformedManifest";
    case ErrorCode::EntryOutOfRange: return "EntryOutOfRange";
    case ErrorCode::BackendUnavailable: return "BackendUnavailable";
    case ErrorCode::UnparsableResponse: return "UnparsableResponse";
    case ErrorCode::ManifestError: return "ManifestError";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

}  // namespace tadascope
