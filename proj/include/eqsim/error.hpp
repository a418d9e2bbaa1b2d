// Copyright (C) 2026 The eqsim-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace eqsim {

enum class ErrorKind {
  DimensionMismatch,
  DegenerateVector,
  NonFinite,
  BadTemperature,
  AlreadyNormalized,
  IndexOutOfRange,
  SamePairIndex,
  BadK,
  NormalizationMismatch,
  InvalidConfig,
  NonFiniteLoss,
  EmptyEvalSet,
  LengthMismatch,
  EmptyValues,
  SlotOutOfRange,
  UneditableAspect,
  MissingField,
  BadSegment,
  EmptySubset,
  Schema,
  Io,
  ShapeMismatch,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Process exit code for an error surfaced by the command-line runner:
/// 2 config/schema, 3 I/O, 4 numeric failure, 5 shape mismatch.
int exit_code(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Raised by training when a loss or gradient stops being finite.
class NonFiniteLossError : public Error {
 public:
  NonFiniteLossError(long step, const std::string& what)
      : Error(ErrorKind::NonFiniteLoss, "step " + std::to_string(step) + ": " + what), step_(step) {}

  long step() const noexcept { return step_; }

 private:
  long step_;
};

inline void require(bool condition, ErrorKind kind, const std::string& what) {
  if (!condition) throw Error(kind, what);
}

}  // namespace eqsim
