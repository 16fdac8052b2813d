#pragma once

#include <stdexcept>
#include <string>

namespace noctis {

// Base of everything the library throws. Callers that only care about
// "bad data" vs. "filesystem trouble" can catch the two subclasses.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Malformed or out-of-contract input: bad values, broken containers, schema errors.
class InvalidInput : public Error {
  public:
    using Error::Error;
};

// Missing files, unreadable/unwritable paths.
class IoError : public Error {
  public:
    using Error::Error;
};

} // namespace noctis
