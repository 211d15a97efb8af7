// Copyright 2026 The georecon Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace georecon {

/// A NaN or Inf showed up in a tensor. Training aborts on this.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shape or argument contract violated by the caller.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace georecon
