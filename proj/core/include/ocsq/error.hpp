#pragma once

#include <stdexcept>
#include <string>

namespace ocsq {

// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent .qnt / JSON input.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Invalid user configuration (maps to exit code 2 in the CLI).
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace ocsq
