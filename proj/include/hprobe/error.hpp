#ifndef HPROBE_ERROR_HPP_
#define HPROBE_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace hprobe {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration value; the message names the violated bound.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Operand shapes or lengths disagree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Non-finite loss or a numerically unusable matrix.
class NumericError : public Error {
 public:
  using Error::Error;
};

// A metric is undefined for the given input (e.g. single-class labels).
class MetricError : public Error {
 public:
  using Error::Error;
};

// Required data is missing (layer not stored, distributions absent, ...).
class MissingDataError : public Error {
 public:
  using Error::Error;
};

// On-disk format problems. Subclasses distinguish the failure.
class FormatError : public Error {
 public:
  using Error::Error;
};

class BadMagicError : public FormatError {
 public:
  using FormatError::FormatError;
};

class VersionMismatchError : public FormatError {
 public:
  using FormatError::FormatError;
};

class TruncatedBlobError : public FormatError {
 public:
  TruncatedBlobError(const std::string& what, std::string sequence_id)
      : FormatError(what), sequence_id_(std::move(sequence_id)) {}
  const std::string& sequence_id() const { return sequence_id_; }

 private:
  std::string sequence_id_;
};

class OffsetOutOfBoundsError : public FormatError {
 public:
  OffsetOutOfBoundsError(const std::string& what, std::string sequence_id)
      : FormatError(what), sequence_id_(std::move(sequence_id)) {}
  const std::string& sequence_id() const { return sequence_id_; }

 private:
  std::string sequence_id_;
};

}  // namespace hprobe

#endif  // HPROBE_ERROR_HPP_
