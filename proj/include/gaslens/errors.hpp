// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace gaslens {

/// Bad or unreadable input: I/O failure, malformed file, shape mismatch,
/// non-finite values. The CLI maps these to exit code 2.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeMismatch : public InputError {
 public:
  using InputError::InputError;
};

class NonFiniteValue : public InputError {
 public:
  using InputError::InputError;
};

/// A policy left nothing to work with (no kept tokens, no blocks, every
/// token suppressed). The CLI maps these to exit code 3.
class DegeneratePolicy : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EmptyKeptSet : public DegeneratePolicy {
 public:
  EmptyKeptSet() : DegeneratePolicy("no token survives the filter policy") {}
};

class AllTokensSuppressed : public DegeneratePolicy {
 public:
  AllTokensSuppressed() : DegeneratePolicy("every token is suppressed") {}
};

class EmptyBlockSelection : public DegeneratePolicy {
 public:
  explicit EmptyBlockSelection(const std::string& policy)
      : DegeneratePolicy("block policy '" + policy + "' selects no block") {}
};

class DegenerateRow : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gaslens
