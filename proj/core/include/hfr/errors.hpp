#pragma once

#include <stdexcept>
#include <string>

namespace hfr {

// Error categories map onto CLI exit codes (see tools/): config -> 2,
// dependency -> 3, diverged -> 4, everything else -> 1.
enum class ErrorCode {
  invalid_input,
  shape_mismatch,
  config,
  dependency,
  diverged,
  degenerate,
  protocol,
  io,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

struct InvalidInputError : Error {
  explicit InvalidInputError(const std::string& what)
      : Error(ErrorCode::invalid_input, what) {}
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& what)
      : Error(ErrorCode::shape_mismatch, what) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what)
      : Error(ErrorCode::config, what) {}
};

struct DependencyError : Error {
  explicit DependencyError(const std::string& what)
      : Error(ErrorCode::dependency, what) {}
};

// Non-finite loss or an otherwise unrecoverable optimization state.
struct TrainingDivergedError : Error {
  explicit TrainingDivergedError(const std::string& what)
      : Error(ErrorCode::diverged, what) {}
};

// Degenerate mathematical situations: coincident eye landmarks, constant
// score matrices, zero vectors in cosine similarity, collapsed mappings.
struct DegenerateError : Error {
  explicit DegenerateError(const std::string& what)
      : Error(ErrorCode::degenerate, what) {}
};

struct ProtocolError : Error {
  explicit ProtocolError(const std::string& what)
      : Error(ErrorCode::protocol, what) {}
};

struct IoError : Error {
  explicit IoError(const std::string& what) : Error(ErrorCode::io, what) {}
};

}  // namespace hfr
