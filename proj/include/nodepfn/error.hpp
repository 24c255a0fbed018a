#pragma once

#include <stdexcept>
#include <string>

namespace nodepfn {

// Invalid inputs, malformed files, broken invariants. CLI exit code 2.
struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values, solver failures, retry exhaustion. CLI exit code 3.
struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace nodepfn
