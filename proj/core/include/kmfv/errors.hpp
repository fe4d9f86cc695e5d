#pragma once

#include <stdexcept>
#include <string>

namespace kmfv {

// Bad arguments / bad command usage -> CLI exit code 1.
struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& m) : std::runtime_error(m) {}
};

// Malformed or inconsistent input data (files, bitstreams) -> exit code 2.
struct DataError : std::runtime_error {
  explicit DataError(const std::string& m) : std::runtime_error(m) {}
};

// Violated internal contract (model bug, numeric fault) -> exit code 3.
struct InternalError : std::runtime_error {
  explicit InternalError(const std::string& m) : std::runtime_error(m) {}
};

} // namespace kmfv
