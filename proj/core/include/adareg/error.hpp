#pragma once

#include <stdexcept>
#include <string>

namespace adareg {

// Bad input: malformed config, out-of-range argument, invalid file contents.
// The CLI maps this to exit code 1.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Failure while running an otherwise valid request (non-finite loss, I/O).
// The CLI maps this to exit code 2.
class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace adareg
