#pragma once

#include <stdexcept>
#include <string>

namespace emoprompt {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

/// A caller broke a documented precondition (e.g. scoring an instance without gold).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

class UndefinedMetric : public Error {
 public:
  using Error::Error;
};

class ReportError : public Error {
 public:
  using Error::Error;
};

class PrefixRejected : public Error {
 public:
  using Error::Error;
};

/// Transport failed after exhausting the retry budget.
class RetryableError : public Error {
 public:
  RetryableError(const std::string& what, int attempts) : Error(what), attempts_(attempts) {}
  int attempts() const { return attempts_; }

 private:
  int attempts_;
};

/// Response body could not be understood; the raw payload is kept for debugging.
class ProtocolError : public Error {
 public:
  ProtocolError(const std::string& what, std::string raw) : Error(what), raw_(std::move(raw)) {}
  const std::string& raw() const { return raw_; }

 private:
  std::string raw_;
};

class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

/// A pipeline stage needs an artifact that an earlier stage has not produced.
class UpstreamMissing : public Error {
 public:
  UpstreamMissing(const std::string& what, std::string stage) : Error(what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

}  // namespace emoprompt
