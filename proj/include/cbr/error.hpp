#pragma once

#include <stdexcept>
#include <string>

namespace cbr {

// All library failures derive from Error so callers can catch one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed on-disk data. `offset` is a byte offset (or line number for
// line-oriented formats) where the problem was detected, -1 if unknown.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, long long offset = -1)
      : Error(offset >= 0 ? what + " (at offset " + std::to_string(offset) + ")"
                          : what),
        offset_(offset) {}
  long long offset() const { return offset_; }

 private:
  long long offset_;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class LookupError : public Error {
 public:
  using Error::Error;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

// Retrieval produced no usable case for a query.
class NoCaseError : public Error {
 public:
  using Error::Error;
};

}  // namespace cbr
