#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dlrepro {

enum class ErrorKind {
  GrammarUnavailable,
  NoChunks,
  EmbeddingDimMismatch,
  ProviderFailure,
  ReplayMiss,
  UnknownChunk,
  DimMismatch,
  EmptyIndex,
  ScorerFailure,
  InvalidArgument,
  Io,
  Parse,
  SandboxFailure,
  LockHeld,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  // Replay misses are provider failures from the caller's point of view.
  bool is_provider_error() const noexcept {
    return kind_ == ErrorKind::ProviderFailure || kind_ == ErrorKind::ReplayMiss;
  }

 private:
  ErrorKind kind_;
};

}  // namespace dlrepro
