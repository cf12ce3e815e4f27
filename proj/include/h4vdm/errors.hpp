#pragma once

#include <stdexcept>
#include <string>

namespace h4vdm {

// Exit-code classes used by the CLI: ParseError -> 2, MismatchError -> 3,
// ConfigError -> 4, DataError -> 5, anything else -> 1.

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NoStartCode : ParseError {
  using ParseError::ParseError;
};
struct BitstreamExhausted : ParseError {
  using ParseError::ParseError;
};
struct MalformedSps : ParseError {
  using ParseError::ParseError;
};
struct MalformedPps : ParseError {
  using ParseError::ParseError;
};
struct MalformedSliceHeader : ParseError {
  using ParseError::ParseError;
};
struct UnsupportedSliceType : ParseError {
  using ParseError::ParseError;
};
struct NoIFrame : ParseError {
  using ParseError::ParseError;
};

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct FormatError : DataError {
  using DataError::DataError;
};
struct ChecksumMismatch : DataError {
  using DataError::DataError;
};
struct ShortGop : DataError {
  using DataError::DataError;
};
struct SmallFrame : DataError {
  using DataError::DataError;
};
struct DimensionMismatch : DataError {
  using DataError::DataError;
};
struct InsufficientPairs : DataError {
  using DataError::DataError;
};
struct UnknownDevice : DataError {
  using DataError::DataError;
};
struct SingleClass : DataError {
  using DataError::DataError;
};
struct DataUnavailable : DataError {
  using DataError::DataError;
};
struct NonFiniteLoss : DataError {
  using DataError::DataError;
};
struct IoError : DataError {
  using DataError::DataError;
};

// Model/record/checkpoint incompatibilities (CLI exit 3).
struct MismatchError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ShapeMismatch : MismatchError {
  using MismatchError::MismatchError;
};
struct IndexOutOfRange : MismatchError {
  using MismatchError::MismatchError;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace h4vdm
