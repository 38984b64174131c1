#pragma once

#include <stdexcept>
#include <string>

namespace anova {

/// Base class for every domain error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input that violates an operation's precondition.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A requested computation exceeds a configured size cap.
class CapacityError : public Error {
 public:
  using Error::Error;
};

/// Successive quadrature refinements disagree by more than the tolerance.
class QuadratureError : public Error {
 public:
  QuadratureError(const std::string& what, double coarse, double fine)
      : Error(what + " (coarse=" + std::to_string(coarse) + ", fine=" + std::to_string(fine) + ")"),
        coarse_(coarse),
        fine_(fine) {}

  double coarse() const noexcept { return coarse_; }
  double fine() const noexcept { return fine_; }

 private:
  double coarse_;
  double fine_;
};

/// Joint density vanishes where its product of marginals does not.
class EquivalenceViolation : public Error {
 public:
  using Error::Error;
};

/// File could not be read or parsed.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace anova
