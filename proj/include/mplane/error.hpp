#pragma once

#include <stdexcept>
#include <string>

namespace mplane {

/// Base for every error raised by the library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DegenerateError : Error {
  using Error::Error;
};

struct ShapeMismatchError : Error {
  using Error::Error;
};

struct InvalidConfigError : Error {
  using Error::Error;
};

struct InsufficientDataError : Error {
  using Error::Error;
};

struct MissingPrerequisiteError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

}  // namespace mplane
