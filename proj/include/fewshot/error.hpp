#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fewshot {

enum class ErrorKind {
  MalformedLine,
  EmptyQuery,
  EmptyCorpus,
  TooFewClasses,
  MissingEmbedding,
  DimensionMismatch,
  BackendNotTrainable,
  EmptyTargets,
  AllStopwords,
  BatchTooSmall,
  InsufficientClasses,
  InsufficientSamples,
  ClassTooSmall,
  AllMasked,
  ZeroNormVector,
  IndexOutOfRange,
  EmptyConfusion,
  InvalidArgument,
  Io,
  Format,
};

const char* to_string(ErrorKind kind);

// Every failure raised by the library. `line()` is set for parser errors
// (1-based), zero otherwise.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what, std::size_t line = 0);

  ErrorKind kind() const noexcept { return kind_; }
  std::size_t line() const noexcept { return line_; }

 private:
  ErrorKind kind_;
  std::size_t line_;
};

}  // namespace fewshot
