#pragma once

#include <stdexcept>
#include <string>

namespace tempnet {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes or extents that do not fit an operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Overflow or NaN produced by a forward op.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Malformed files, configs and manifests.
class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Invalid argument values (bad config keys, ranges, labels).
class ValueError : public Error {
 public:
  using Error::Error;
};

}  // namespace tempnet
