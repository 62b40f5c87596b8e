#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pano {

// Argument outside the mathematical domain of an operation (angles, depths).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Malformed input file. `offset` is a byte offset or a 1-based line number,
// depending on the format.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (at " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

// Structurally valid input the pipeline cannot use: shape mismatches,
// missing ground truth, empty valid sets, I/O failures.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// NaN poisoning or a failed numerical self-check.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace pano
