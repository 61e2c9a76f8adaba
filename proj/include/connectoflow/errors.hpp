#pragma once

#include <stdexcept>
#include <string>

namespace connectoflow {

// Error taxonomy shared by all modules. The CLI maps these onto exit codes.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeError : Error {
  using Error::Error;
};

struct DomainError : Error {
  using Error::Error;
};

struct ContractError : Error {
  using Error::Error;
};

struct InputError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct ScheduleError : Error {
  using Error::Error;
};

struct StatsError : Error {
  using Error::Error;
};

struct StructuralError : Error {
  using Error::Error;
};

struct StateError : Error {
  using Error::Error;
};

// Numerical blow-up: NaN/Inf produced during integration or training.
struct DivergenceError : Error {
  using Error::Error;
};

struct TrainingError : DivergenceError {
  using DivergenceError::DivergenceError;
};

}  // namespace connectoflow
