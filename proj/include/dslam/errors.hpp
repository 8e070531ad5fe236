#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dslam {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Point at or behind the z_min plane; the residual must be discarded.
class BehindCameraError : public Error {
 public:
  using Error::Error;
};

/// Unknown frame, patch or file.
class LookupError : public Error {
 public:
  using Error::Error;
};

/// Malformed config, raster or text file.
class ParseError : public Error {
 public:
  using Error::Error;
};

class UnderconstrainedError : public Error {
 public:
  using Error::Error;
};

/// Static region too small for the requested patch count.
class NoStaticRegionError : public Error {
 public:
  explicit NoStaticRegionError(std::size_t available)
      : Error("static region has " + std::to_string(available) +
              " candidate pixels"),
        available_(available) {}
  std::size_t available() const { return available_; }

 private:
  std::size_t available_;
};

class InsufficientSamplesError : public Error {
 public:
  explicit InsufficientSamplesError(std::size_t retained)
      : Error("only " + std::to_string(retained) +
              " scale samples survived gating"),
        retained_(retained) {}
  std::size_t retained() const { return retained_; }

 private:
  std::size_t retained_;
};

/// Too few matched poses or pixels between an estimate and ground truth.
class AssociationError : public Error {
 public:
  using Error::Error;
};

class EstimateFailedError : public Error {
 public:
  using Error::Error;
};

}  // namespace dslam
