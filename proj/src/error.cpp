#include "coldcarve/error.hpp"

namespace coldcarve {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::MalformedXml: return "MalformedXml";
    case ErrorCode::SchemaViolation: return "SchemaViolation";
    case ErrorCode::TooSmall: return "TooSmall";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::EvenTrialCount: return "EvenTrialCount";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::Unrepairable: return "Unrepairable";
    case ErrorCode::NoMatch: return "NoMatch";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::InvalidDistribution: return "InvalidDistribution";
    case ErrorCode::UnlabeledData: return "UnlabeledData";
    case ErrorCode::ArchitectureMismatch: return "ArchitectureMismatch";
    case ErrorCode::ZeroTeacherAccuracy: return "ZeroTeacherAccuracy";
    case ErrorCode::Io: return "Io";
    case ErrorCode::Config: return "Config";
    case ErrorCode::EmptyResults: return "EmptyResults";
    case ErrorCode::SchemaError: return "SchemaError";
  }
  return "Unknown";
}

}  // namespace coldcarve
