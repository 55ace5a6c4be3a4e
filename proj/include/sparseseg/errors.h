/* Copyright 2026 The sparseseg Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#ifndef SPARSESEG_ERRORS_H_
#define SPARSESEG_ERRORS_H_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sparseseg {

// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor extents are incompatible with the requested operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A configuration value (encoder geometry, loss settings, ...) is invalid.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Input data violates a documented precondition (label range, bounds, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// A primitive produced or received a non-finite value.
class NumericError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// API misuse, e.g. calling backward on a non-scalar node.
class UsageError : public Error {
 public:
  using Error::Error;
};

// A checkpoint does not match the model configuration.
class CheckpointError : public Error {
 public:
  using Error::Error;
};

class GenerationError : public Error {
 public:
  using Error::Error;
};

// Training loss became non-finite.
class DivergenceError : public Error {
 public:
  DivergenceError(int step, const std::string& what)
      : Error("diverged at step " + std::to_string(step) + ": " + what),
        step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

}  // namespace sparseseg

#endif  // SPARSESEG_ERRORS_H_
