#pragma once
#include <stdexcept>
#include <string>

namespace ricnn {

// Base for everything thrown on purpose. The CLI maps subclasses to exit
// codes: UsageError -> 2, IoError -> 3, anything else -> 1.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Contract violation inside the library: bad shape, unsupported K, label out
// of range, mismatched extents.
struct InvalidArgument : Error {
  using Error::Error;
};

// Unreadable/corrupt file, bad magic, short read, unwritable output.
struct IoError : Error {
  using Error::Error;
};

// Bad flag or config value at the CLI boundary.
struct UsageError : Error {
  using Error::Error;
};

}  // namespace ricnn
