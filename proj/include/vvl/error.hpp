#pragma once

#include <stdexcept>
#include <string>

namespace vvl {

// Exit codes shared by the command-line front end.
enum class ErrorCode : int {
  kUsage = 2,
  kValidation = 3,
  kSolverLimit = 4,
  kPlantNonConvergence = 5,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Malformed input files and feeders that fail validation.
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what) : Error(ErrorCode::kValidation, what) {}
};

class SolverError : public Error {
 public:
  explicit SolverError(const std::string& what) : Error(ErrorCode::kSolverLimit, what) {}
};

class PlantNonConvergence : public Error {
 public:
  explicit PlantNonConvergence(const std::string& what)
      : Error(ErrorCode::kPlantNonConvergence, what) {}
};

}  // namespace vvl
