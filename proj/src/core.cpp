// Copyright (C) 2026 The eqsim-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <string>

#include "eqsim/core.hpp"
#include "eqsim/error.hpp"
#include "eqsim/losses.hpp"

namespace eqsim {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::DegenerateVector: return "DegenerateVector";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::BadTemperature: return "BadTemperature";
    case ErrorKind::AlreadyNormalized: return "AlreadyNormalized";
    case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorKind::SamePairIndex: return "SamePairIndex";
    case ErrorKind::BadK: return "BadK";
    case ErrorKind::NormalizationMismatch: return "NormalizationMismatch";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::EmptyEvalSet: return "EmptyEvalSet";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::EmptyValues: return "EmptyValues";
    case ErrorKind::SlotOutOfRange: return "SlotOutOfRange";
    case ErrorKind::UneditableAspect: return "UneditableAspect";
    case ErrorKind::MissingField: return "MissingField";
    case ErrorKind::BadSegment: return "BadSegment";
    case ErrorKind::EmptySubset: return "EmptySubset";
    case ErrorKind::Schema: return "Schema";
    case ErrorKind::Io: return "Io";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
  }
  return "Unknown";
}

int exit_code(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidConfig:
    case ErrorKind::Schema:
    case ErrorKind::MissingField:
    case ErrorKind::BadSegment:
    case ErrorKind::BadK:
    case ErrorKind::UneditableAspect:
    case ErrorKind::EmptySubset:
    case ErrorKind::SlotOutOfRange:
      return 2;
    case ErrorKind::Io:
      return 3;
    case ErrorKind::NonFiniteLoss:
    case ErrorKind::NonFinite:
    case ErrorKind::DegenerateVector:
      return 4;
    case ErrorKind::DimensionMismatch:
    case ErrorKind::ShapeMismatch:
    case ErrorKind::LengthMismatch:
      return 5;
    default:
      return 4;
  }
}

std::string_view to_string(EqSimMode mode) noexcept {
  switch (mode) {
    case EqSimMode::off: return "off";
    case EqSimMode::hybrid: return "hybrid";
    case EqSimMode::v1_all: return "v1_all";
    case EqSimMode::v2_all: return "v2_all";
    case EqSimMode::v2_close_only: return "v2_close_only";
  }
  return "off";
}

EqSimMode parse_eqsim_mode(std::string_view text) {
  for (auto mode : {EqSimMode::off, EqSimMode::hybrid, EqSimMode::v1_all, EqSimMode::v2_all, EqSimMode::v2_close_only})
    if (to_string(mode) == text) return mode;
  throw Error(ErrorKind::InvalidConfig,
              "unknown eqsim mode '" + std::string(text) + "' (off|hybrid|v1_all|v2_all|v2_close_only)");
}

}  // namespace eqsim
