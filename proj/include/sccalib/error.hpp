#pragma once

#include <stdexcept>
#include <string>

namespace sccalib {

// All library failures derive from Error so callers can catch one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidParameter : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class BehindCamera : public Error {
 public:
  using Error::Error;
};

class AlignmentFailure : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class SeedingFailure : public Error {
 public:
  SeedingFailure(int frame, const std::string& what)
      : Error("seeding failure at frame " + std::to_string(frame) + ": " + what), frame_(frame) {}
  int frame() const noexcept { return frame_; }

 private:
  int frame_;
};

class DivergenceError : public Error {
 public:
  DivergenceError(int iteration, const std::string& what)
      : Error("divergence at iteration " + std::to_string(iteration) + ": " + what),
        iteration_(iteration) {}
  int iteration() const noexcept { return iteration_; }

 private:
  int iteration_;
};

// Thrown when a pipeline stage is invoked before the stage producing its inputs.
class MissingStageInput : public Error {
 public:
  using Error::Error;
};

}  // namespace sccalib
