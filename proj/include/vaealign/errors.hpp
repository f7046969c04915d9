// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace vaealign {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public Error {
 public:
  IoError(const std::string& path, const std::string& what)
      : Error(what + ": " + path), path_(path) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

enum class ParseErrorKind {
  bad_magic,
  bad_version,
  unsupported_dtype,
  bad_header,
  truncated_payload,
  shape_mismatch,
};

const char* to_string(ParseErrorKind kind) noexcept;

// Malformed tensor file (or an attempt to write an unsupported dtype).
class FormatError : public Error {
 public:
  FormatError(ParseErrorKind kind, const std::string& detail)
      : Error(std::string(to_string(kind)) + ": " + detail), kind_(kind) {}
  ParseErrorKind kind() const noexcept { return kind_; }

 private:
  ParseErrorKind kind_;
};

// WAV files outside the PCM16 / mono / 16 kHz subset.
class UnsupportedFormat : public Error {
 public:
  using Error::Error;
};

// Mismatched or degenerate array shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Out-of-range values, inconsistent configs, bad metric records.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class InputTooShort : public Error {
 public:
  using Error::Error;
};

}  // namespace vaealign
