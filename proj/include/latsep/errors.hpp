#pragma once

#include <stdexcept>
#include <string>

namespace latsep {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input shape or value outside an operation's domain.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

class PlanningError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Digest, size or manifest mismatch between artifacts that must agree.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, int epoch) : Error(what), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

/// A diagnostic that needs both clean and trigger-planted rows got only one role.
class UndefinedProfile : public Error {
 public:
  using Error::Error;
};

}  // namespace latsep
