#pragma once

#include <array>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace sigma_forge {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent algebra data (user input, not arithmetic).
class AlgebraError : public Error {
 public:
  using Error::Error;
};

class AntisymmetryViolation : public AlgebraError {
 public:
  AntisymmetryViolation(double residual, std::array<int, 3> where)
      : AlgebraError("structure constants not antisymmetric: residual " + std::to_string(residual) +
                     " at (l,m,n)=(" + std::to_string(where[0]) + "," + std::to_string(where[1]) + "," +
                     std::to_string(where[2]) + ")"),
        residual_(residual),
        where_(where) {}

  double residual() const { return residual_; }
  std::array<int, 3> where() const { return where_; }

 private:
  double residual_;
  std::array<int, 3> where_;
};

class JacobiViolation : public AlgebraError {
 public:
  /// `where` holds the free indices (k, l, u, v) of the worst Jacobi component.
  JacobiViolation(double residual, std::array<int, 4> where)
      : AlgebraError("Jacobi identity violated: residual " + std::to_string(residual) + " at (k,l,u,v)=(" +
                     std::to_string(where[0]) + "," + std::to_string(where[1]) + "," + std::to_string(where[2]) +
                     "," + std::to_string(where[3]) + ")"),
        residual_(residual),
        where_(where) {}

  double residual() const { return residual_; }
  std::array<int, 4> where() const { return where_; }

 private:
  double residual_;
  std::array<int, 4> where_;
};

class UnknownAlgebra : public AlgebraError {
 public:
  explicit UnknownAlgebra(const std::string& name) : AlgebraError("unknown algebra '" + name + "'") {}
};

/// Failures of numerical preconditions: singular forms, divergent series, singular solves.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class DegenerateTraceForm : public NumericalError {
 public:
  explicit DegenerateTraceForm(double condition)
      : NumericalError("trace form is degenerate: condition number " + std::to_string(condition)),
        condition_(condition) {}

  double condition() const { return condition_; }

 private:
  double condition_;
};

class SeriesDivergence : public NumericalError {
 public:
  SeriesDivergence(double norm, double cap)
      : NumericalError("W series argument norm " + std::to_string(norm) + " exceeds cap " + std::to_string(cap)) {}
};

class IntertwiningFailure : public NumericalError {
 public:
  explicit IntertwiningFailure(double residual)
      : NumericalError("dual constants fail the intertwining relation: residual " + std::to_string(residual)) {}
};

class SingularEvolutionMatrix : public NumericalError {
 public:
  SingularEvolutionMatrix(double time, std::size_t point)
      : NumericalError("evolution matrix T*W singular at t=" + std::to_string(time) +
                       ", grid point " + std::to_string(point)),
        time_(time),
        point_(point) {}

  double time() const { return time_; }
  std::size_t point() const { return point_; }

 private:
  double time_;
  std::size_t point_;
};

/// Form-degree bookkeeping errors.
class DegreeOverflow : public Error {
 public:
  using Error::Error;
};

class GridError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace sigma_forge
