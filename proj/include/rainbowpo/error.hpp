// Copyright 2026 The RainbowPO Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rainbow {

// Malformed data handed to an operation (bad token ids, missing scores, ...).
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Invalid or mutually inconsistent configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A mathematical precondition was violated by otherwise well-formed input.
class PreconditionError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// A non-finite value appeared during evaluation. `where` is the pair index
// (loss evaluation) or the optimizer step (training).
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, std::size_t where)
      : std::runtime_error(what), where_(where) {}

  std::size_t where() const noexcept { return where_; }

 private:
  std::size_t where_;
};

}  // namespace rainbow
