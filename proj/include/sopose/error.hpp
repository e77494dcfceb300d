#pragma once

#include <stdexcept>
#include <string>

namespace sopose {

enum class ErrorKind {
  kBehindCamera,
  kDegenerateParameterization,
  kDegenerateTranslation,
  kInvalidMesh,
  kShape,
  kNoDetection,
  kNoSolution,
  kUndefinedRate,
  kParse,
  kIo,
  kUsage,
};

const char* to_string(ErrorKind kind);

// Single exception type for the library; callers dispatch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace sopose
