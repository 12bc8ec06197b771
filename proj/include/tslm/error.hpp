#pragma once

#include <stdexcept>
#include <string>

namespace tslm {

// Library error taxonomy. The CLI maps these onto process exit codes:
// usage -> 1, data/format -> 2, numeric/training -> 3, transport -> 4.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor dimensions disagree with an operation's contract.
class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// An id or index falls outside its valid range.
class IndexError : public Error {
 public:
  explicit IndexError(const std::string& msg) : Error(msg) {}
};

// A scalar argument violates a precondition (lengths, rates, ratios).
class ParameterError : public Error {
 public:
  explicit ParameterError(const std::string& msg) : Error(msg) {}
};

// An API was used outside its contract (non-scalar backward root, unscored pairs).
class ContractError : public Error {
 public:
  explicit ContractError(const std::string& msg) : Error(msg) {}
};

// Non-finite values where finite ones are required.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& msg) : Error(msg) {}
};

// Malformed files: checkpoints, JSONL datasets, vocabulary files.
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& msg) : Error(msg) {}
};

// HTTP/transport failure after retries.
class TransportError : public Error {
 public:
  explicit TransportError(const std::string& msg) : Error(msg) {}
};

// Transport succeeded but the response body is not the expected shape.
class ProtocolError : public Error {
 public:
  explicit ProtocolError(const std::string& msg) : Error(msg) {}
};

}  // namespace tslm
