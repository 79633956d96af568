#pragma once

#include <stdexcept>
#include <string>

namespace facet {

// Base class for all library errors. Anything not transport/IO related maps
// to CLI exit code 1 (validation), IoError and below map to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class TransportError : public IoError {
 public:
  using IoError::IoError;
};

class BadResponseError : public TransportError {
 public:
  using TransportError::TransportError;
};

class GeneratorUnavailableError : public TransportError {
 public:
  using TransportError::TransportError;
};

class SelectorUnavailableError : public TransportError {
 public:
  using TransportError::TransportError;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class NormError : public Error {
 public:
  using Error::Error;
};

class ZeroVectorError : public Error {
 public:
  using Error::Error;
};

class DuplicateIdError : public Error {
 public:
  using Error::Error;
};

class UnknownIdError : public Error {
 public:
  using Error::Error;
};

class DimMismatchError : public Error {
 public:
  using Error::Error;
};

class EmptyInputError : public Error {
 public:
  using Error::Error;
};

class UnknownCaseError : public Error {
 public:
  using Error::Error;
};

class InvariantViolationError : public Error {
 public:
  using Error::Error;
};

class MalformedQuestionError : public Error {
 public:
  using Error::Error;
};

class ValidationFailedError : public Error {
 public:
  using Error::Error;
};

class UnparseableAnswerError : public Error {
 public:
  using Error::Error;
};

class UnknownImageError : public Error {
 public:
  using Error::Error;
};

class UnknownFacetError : public Error {
 public:
  using Error::Error;
};

class UnsupportedError : public Error {
 public:
  using Error::Error;
};

class EmptyPoolError : public Error {
 public:
  using Error::Error;
};

class ProviderError : public Error {
 public:
  using Error::Error;
};

class MissingPromptError : public Error {
 public:
  using Error::Error;
};

class ConfigInvalidError : public Error {
 public:
  using Error::Error;
};

class InsufficientNegativesError : public Error {
 public:
  using Error::Error;
};

class InvalidArgumentError : public Error {
 public:
  using Error::Error;
};

}  // namespace facet
