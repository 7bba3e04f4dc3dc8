#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace hml {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file. `location` is a 1-based line number for text
/// formats and a byte offset for binary ones.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t location)
      : Error(what), location_(location) {}
  std::size_t location() const noexcept { return location_; }

 private:
  std::size_t location_;
};

class EmptyInputError : public Error {
 public:
  using Error::Error;
};

class FileError : public Error {
 public:
  using Error::Error;
};

/// Dimension or size mismatch between operands.
class ShapeError : public Error {
 public:
  using Error::Error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// A stratified split would leave a class with no train or no test samples.
class SplitInfeasibleError : public Error {
 public:
  SplitInfeasibleError(const std::string& what, int class_id)
      : Error(what), class_id_(class_id) {}
  int class_id() const noexcept { return class_id_; }

 private:
  int class_id_;
};

/// Input admits no meaningful solution (e.g. all points identical).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

/// Iterative solver hit its iteration cap before reaching tolerance.
class SolverError : public Error {
 public:
  SolverError(const std::string& what, double last_objective)
      : Error(what), last_objective_(last_objective) {}
  double last_objective() const noexcept { return last_objective_; }

 private:
  double last_objective_;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

/// A tree node cannot be trained, e.g. one child has no training samples.
class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, std::uint64_t node)
      : Error(what), node_(node) {}
  std::uint64_t node() const noexcept { return node_; }

 private:
  std::uint64_t node_;
};

class ModelFormatError : public Error {
 public:
  enum class Kind { bad_magic, version, truncated, checksum, corrupt };
  ModelFormatError(const std::string& what, Kind kind)
      : Error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace hml
