#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace ptrig {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using AgentId = int;

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid model, parameters or run configuration. Raised before any
/// computation starts whenever possible.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A lookup outside the tabulated range.
class QueryError : public Error {
 public:
  using Error::Error;
};

class SchedulerError : public Error {
 public:
  using Error::Error;
};

class AccountingError : public Error {
 public:
  using Error::Error;
};

/// A corrupted or unreadable table file.
class TableFormatError : public Error {
 public:
  using Error::Error;
};

/// An upstream invariant was broken (e.g. a probability escaped [0, 1]).
class InternalError : public Error {
 public:
  using Error::Error;
};

}  // namespace ptrig
