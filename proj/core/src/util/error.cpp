#include "dlrepro/util/error.hpp"

namespace dlrepro {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::GrammarUnavailable: return "GrammarUnavailable";
    case ErrorKind::NoChunks: return "NoChunks";
    case ErrorKind::EmbeddingDimMismatch: return "EmbeddingDimMismatch";
    case ErrorKind::ProviderFailure: return "ProviderFailure";
    case ErrorKind::ReplayMiss: return "ReplayMiss";
    case ErrorKind::UnknownChunk: return "UnknownChunk";
    case ErrorKind::DimMismatch: return "DimMismatch";
    case ErrorKind::EmptyIndex: return "EmptyIndex";
    case ErrorKind::ScorerFailure: return "ScorerFailure";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::Io: return "Io";
    case ErrorKind::Parse: return "Parse";
    case ErrorKind::SandboxFailure: return "SandboxFailure";
    case ErrorKind::LockHeld: return "LockHeld";
  }
  return "Unknown";
}

}  // namespace dlrepro
