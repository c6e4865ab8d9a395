#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sgcn {

// Every error message is prefixed with the module that raised it, e.g.
// "tensor_core: matmul: inner dimensions differ ([2,3] x [4,5])".
class Error : public std::runtime_error {
 public:
  Error(const std::string& module, const std::string& what)
      : std::runtime_error(module + ": " + what) {}
};

class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& what) : Error("tensor_core", what) {}
};

class ContractError : public Error {
 public:
  ContractError(const std::string& module, const std::string& what) : Error(module, what) {}
};

class LabelError : public Error {
 public:
  explicit LabelError(const std::string& what) : Error("tensor_core", what) {}
};

// Malformed corpus line. `line` is 1-based.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("corpus", "line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Structurally valid line whose content violates a Record invariant.
// `record` is the 0-based index of the record in the file.
class ValidationError : public Error {
 public:
  ValidationError(std::size_t record, const std::string& what)
      : Error("corpus", "record " + std::to_string(record) + ": " + what), record_(record) {}
  std::size_t record() const { return record_; }

 private:
  std::size_t record_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error("training", what) {}
};

class InitError : public Error {
 public:
  explicit InitError(const std::string& what) : Error("training", what) {}
};

class NonFiniteGradient : public Error {
 public:
  explicit NonFiniteGradient(const std::string& param)
      : Error("training", "non-finite gradient in parameter '" + param + "'"), param_(param) {}
  const std::string& param() const { return param_; }

 private:
  std::string param_;
};

class CheckpointError : public Error {
 public:
  explicit CheckpointError(const std::string& what) : Error("checkpoint", what) {}
};

}  // namespace sgcn
