// SPDX-License-Identifier: Apache-2.0
//
// Exception types shared across the toolkit. Precondition violations use
// std::invalid_argument; the types below mark failures callers may want to
// tell apart (divergence, depth, data problems).

#pragma once

#include <stdexcept>
#include <string>

namespace ncap {

// Non-finite loss, gradient or state encountered during training/integration.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A capacitance probe needs at least three hidden layers (L >= 4).
class DepthError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed or inconsistent input files / datasets.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// RunConfig / system config validation failure.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace ncap
