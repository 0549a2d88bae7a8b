// Copyright (c) 2026, The depthroute Authors
// SPDX-License-Identifier: Apache-2.0
//
// Exception hierarchy shared by every module.

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace depthroute {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define DEPTHROUTE_DEFINE_ERROR(Name)        \
  class Name : public Error {                \
   public:                                   \
    using Error::Error;                      \
  };

DEPTHROUTE_DEFINE_ERROR(DimensionError)
DEPTHROUTE_DEFINE_ERROR(DomainError)
DEPTHROUTE_DEFINE_ERROR(IndexError)
DEPTHROUTE_DEFINE_ERROR(ConfigError)
DEPTHROUTE_DEFINE_ERROR(ContractError)
DEPTHROUTE_DEFINE_ERROR(CacheError)
DEPTHROUTE_DEFINE_ERROR(LengthError)
DEPTHROUTE_DEFINE_ERROR(InputError)
DEPTHROUTE_DEFINE_ERROR(LookupError)
DEPTHROUTE_DEFINE_ERROR(CompatibilityError)
DEPTHROUTE_DEFINE_ERROR(TrainingError)
DEPTHROUTE_DEFINE_ERROR(IoError)

#undef DEPTHROUTE_DEFINE_ERROR

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Raised by the pipeline; wraps the failing stage's name.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error("[" + stage + "] " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace depthroute
