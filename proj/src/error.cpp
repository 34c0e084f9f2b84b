#include "fewshot/error.hpp"

namespace fewshot {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MalformedLine: return "MalformedLine";
    case ErrorKind::EmptyQuery: return "EmptyQuery";
    case ErrorKind::EmptyCorpus: return "EmptyCorpus";
    case ErrorKind::TooFewClasses: return "TooFewClasses";
    case ErrorKind::MissingEmbedding: return "MissingEmbedding";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::BackendNotTrainable: return "BackendNotTrainable";
    case ErrorKind::EmptyTargets: return "EmptyTargets";
    case ErrorKind::AllStopwords: return "AllStopwords";
    case ErrorKind::BatchTooSmall: return "BatchTooSmall";
    case ErrorKind::InsufficientClasses: return "InsufficientClasses";
    case ErrorKind::InsufficientSamples: return "InsufficientSamples";
    case ErrorKind::ClassTooSmall: return "ClassTooSmall";
    case ErrorKind::AllMasked: return "AllMasked";
    case ErrorKind::ZeroNormVector: return "ZeroNormVector";
    case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorKind::EmptyConfusion: return "EmptyConfusion";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::Io: return "Io";
    case ErrorKind::Format: return "Format";
  }
  return "Unknown";
}

static std::string decorate(ErrorKind kind, const std::string& what, std::size_t line) {
  std::string out = to_string(kind);
  if (line != 0) out += " (line " + std::to_string(line) + ")";
  if (!what.empty()) out += ": " + what;
  return out;
}

Error::Error(ErrorKind kind, const std::string& what, std::size_t line)
    : std::runtime_error(decorate(kind, what, line)), kind_(kind), line_(line) {}

}  // namespace fewshot
