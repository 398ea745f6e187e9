#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ba {

// Base class for all recoverable failures raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Point lies behind (or too close to) the camera.
class CheiralityError : public Error {
 public:
  CheiralityError(std::ptrdiff_t point, std::ptrdiff_t camera)
      : Error("cheirality violated for point " + std::to_string(point) +
              " in camera " + std::to_string(camera)),
        point_(point),
        camera_(camera) {}
  CheiralityError() : CheiralityError(-1, -1) {}

  std::ptrdiff_t point() const { return point_; }
  std::ptrdiff_t camera() const { return camera_; }

 private:
  std::ptrdiff_t point_;
  std::ptrdiff_t camera_;
};

class NoConvergence : public Error {
 public:
  using Error::Error;
};

// A 3x3 point block V_i could not be factored.
class SingularPointBlock : public Error {
 public:
  explicit SingularPointBlock(std::size_t point)
      : Error("singular point block " + std::to_string(point)), point_(point) {}
  std::size_t point() const { return point_; }

 private:
  std::size_t point_;
};

class NotPositiveDefinite : public Error {
 public:
  explicit NotPositiveDefinite(std::ptrdiff_t index)
      : Error("matrix not positive definite at pivot/block " +
              std::to_string(index)),
        index_(index) {}
  std::ptrdiff_t index() const { return index_; }

 private:
  std::ptrdiff_t index_;
};

class RankDeficientColumn : public Error {
 public:
  RankDeficientColumn(std::size_t index, bool is_camera)
      : Error(std::string("rank deficient block column for ") +
              (is_camera ? "camera " : "point ") + std::to_string(index)),
        index_(index),
        is_camera_(is_camera) {}
  std::size_t index() const { return index_; }
  bool is_camera() const { return is_camera_; }

 private:
  std::size_t index_;
  bool is_camera_;
};

class DampingOverflow : public Error {
 public:
  DampingOverflow() : Error("LM damping exceeded 1e32") {}
};

class InvalidProblem : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& reason)
      : Error("parse error at line " + std::to_string(line) + ": " + reason),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class IndexOutOfRange : public Error {
 public:
  using Error::Error;
};

class InfeasibleSpec : public Error {
 public:
  using Error::Error;
};

class InvalidPartitionCount : public Error {
 public:
  using Error::Error;
};

// Inner solve of one partition failed; wraps the original message.
class PartitionError : public Error {
 public:
  PartitionError(int partition, const std::string& what)
      : Error("partition " + std::to_string(partition) + ": " + what), partition_(partition) {}
  int partition() const { return partition_; }

 private:
  int partition_;
};

}  // namespace ba
