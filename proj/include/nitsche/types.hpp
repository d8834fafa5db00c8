#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace nitsche {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

using Index = std::int64_t;

// Raised on malformed input, broken preconditions and numerical breakdown.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
public:
  ParseError(const std::string& what, int line)
      : Error(line > 0 ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
  int line() const { return line_; }

private:
  int line_;
};

class SingularSystemError : public Error {
public:
  using Error::Error;
};

class PointLocationError : public Error {
public:
  PointLocationError(const std::string& what, Index point) : Error(what), point_(point) {}
  Index point() const { return point_; }

private:
  Index point_;
};

inline Mat2 skew_unit() {
  Mat2 j;
  j << 0.0, 1.0, -1.0, 0.0;
  return j;
}

inline double frob(const Mat2& a, const Mat2& b) { return (a.array() * b.array()).sum(); }

} // namespace nitsche
