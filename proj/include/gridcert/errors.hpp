#pragma once

#include <stdexcept>
#include <string>

namespace gridcert {

/// Bad or inconsistent input data (files, schemas, network validation).
/// Maps to CLI exit code 1.
class InputError : public std::runtime_error {
 public:
  explicit InputError(const std::string& what) : std::runtime_error(what) {}
};

/// A numerical procedure failed (divergence, infeasibility, singularity).
/// Maps to CLI exit code 2.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace gridcert
