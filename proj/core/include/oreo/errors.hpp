#pragma once

#include <stdexcept>
#include <string>

namespace oreo {

// Error taxonomy shared by the library and the CLI. The CLI prints
// code_name() as the first stderr line so scripts can branch on it.
enum class ErrorCode {
  kConfig,
  kDomain,
  kContract,
  kSupport,
  kResource,
  kTraining,
  kNumeric,
  kIo,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  const char* code_name() const noexcept {
    switch (code_) {
      case ErrorCode::kConfig: return "E_CONFIG";
      case ErrorCode::kDomain: return "E_DOMAIN";
      case ErrorCode::kContract: return "E_CONTRACT";
      case ErrorCode::kSupport: return "E_SUPPORT";
      case ErrorCode::kResource: return "E_RESOURCE";
      case ErrorCode::kTraining: return "E_TRAIN";
      case ErrorCode::kNumeric: return "E_NUMERIC";
      case ErrorCode::kIo: return "E_IO";
    }
    return "E_INTERNAL";
  }

 private:
  ErrorCode code_;
};

/// Invalid user-supplied configuration (env spec, CLI flags, run config).
struct ConfigError : Error {
  explicit ConfigError(const std::string& w) : Error(ErrorCode::kConfig, w) {}
};

/// An action that is not legal in the source state.
struct DomainError : Error {
  explicit DomainError(const std::string& w) : Error(ErrorCode::kDomain, w) {}
};

/// A violated API precondition (missing table entry, terminal source state).
struct ContractError : Error {
  explicit ContractError(const std::string& w) : Error(ErrorCode::kContract, w) {}
};

/// The reference policy assigns zero probability to a required action.
struct SupportError : Error {
  explicit SupportError(const std::string& w) : Error(ErrorCode::kSupport, w) {}
};

/// Enumeration or state-space caps exceeded.
struct ResourceError : Error {
  explicit ResourceError(const std::string& w) : Error(ErrorCode::kResource, w) {}
};

/// Training diverged; the message carries the offending step index.
struct TrainingError : Error {
  explicit TrainingError(const std::string& w) : Error(ErrorCode::kTraining, w) {}
};

/// A non-finite intermediate value.
struct NumericError : Error {
  explicit NumericError(const std::string& w) : Error(ErrorCode::kNumeric, w) {}
};

struct IoError : Error {
  explicit IoError(const std::string& w) : Error(ErrorCode::kIo, w) {}
};

}  // namespace oreo
