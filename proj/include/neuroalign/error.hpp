#pragma once

#include <stdexcept>
#include <string>

namespace neuroalign {

/// Runtime failure inside a computation or while touching the filesystem.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Inputs or configuration rejected before any work was done.
class ValidationError : public Error {
public:
  using Error::Error;
};

} // namespace neuroalign
