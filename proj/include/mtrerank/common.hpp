#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace mtrerank {

using TokenId = std::int32_t;
using TokenIds = std::vector<TokenId>;

// Error hierarchy. Each maps onto one failure class named by the pipeline
// (CLI exit codes are derived from these in tools/).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidInput : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class CorruptCheckpoint : public Error {
 public:
  using Error::Error;
};

class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

class UndefinedCorrelation : public Error {
 public:
  using Error::Error;
};

class NonFiniteGradient : public Error {
 public:
  using Error::Error;
};

}  // namespace mtrerank
