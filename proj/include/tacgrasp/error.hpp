#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tacgrasp {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidArgument : Error {
  using Error::Error;
};

// Malformed dataset / script / config text. line is 1-based, record is the
// 0-based data row (header excluded) or -1 when not applicable.
struct ParseError : Error {
  ParseError(const std::string& what, std::size_t line, long record)
      : Error(what + " (line " + std::to_string(line) + ")"), line(line), record(record) {}
  std::size_t line;
  long record;
};

struct TrainingError : Error {
  TrainingError(const std::string& what, int epoch)
      : Error(what + " at epoch " + std::to_string(epoch)), epoch(epoch) {}
  int epoch;
};

struct LoadError : Error {
  using Error::Error;
};

struct NetworkError : Error {
  using Error::Error;
};

struct AggregationError : Error {
  using Error::Error;
};

}  // namespace tacgrasp
