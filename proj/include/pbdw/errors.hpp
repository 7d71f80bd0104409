#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pbdw {

/// Failure categories. The CLI maps them onto process exit codes.
enum class ErrorKind {
  validation,    // bad parameters, preconditions, configuration
  dimension,     // vector/matrix length mismatch
  incompatible,  // objects living on different discrete spaces
  rank_zero,     // nothing left after orthonormalization / POD
  contract,      // API used outside its contract (e.g. non-orthonormal basis)
  ill_posed,     // inf-sup constant below the floor
  coverage,      // no partition cell for a parameter point
  io,            // filesystem failures
  integrity,     // corrupt or inconsistent files on disk
  invariant,     // a numerical invariant was violated at run time
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define PBDW_DEFINE_ERROR(Name, Kind)                                   \
  class Name : public Error {                                           \
   public:                                                              \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {} \
  };

PBDW_DEFINE_ERROR(ValidationError, validation)
PBDW_DEFINE_ERROR(DimensionError, dimension)
PBDW_DEFINE_ERROR(IncompatibleSpaceError, incompatible)
PBDW_DEFINE_ERROR(RankZeroError, rank_zero)
PBDW_DEFINE_ERROR(ContractError, contract)
PBDW_DEFINE_ERROR(CoverageError, coverage)
PBDW_DEFINE_ERROR(IoError, io)
PBDW_DEFINE_ERROR(IntegrityError, integrity)
PBDW_DEFINE_ERROR(InvariantError, invariant)
// OMP ran out of admissible (measurement-visible) candidates.
PBDW_DEFINE_ERROR(SelectionExhaustedError, ill_posed)

#undef PBDW_DEFINE_ERROR

/// Raised when beta(V_n, W_m) does not clear the stability floor.
class IllPosedError : public Error {
 public:
  IllPosedError(std::size_t dimension, double beta, const std::string& what)
      : Error(ErrorKind::ill_posed, what), dimension_(dimension), beta_(beta) {}
  std::size_t dimension() const noexcept { return dimension_; }
  double beta() const noexcept { return beta_; }

 private:
  std::size_t dimension_;
  double beta_;
};

/// Exit codes: 0 success, 2 validation, 3 ill-posedness, 4 invariant failure.
inline int exit_code(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::ill_posed:
      return 3;
    case ErrorKind::invariant:
      return 4;
    default:
      return 2;
  }
}

}  // namespace pbdw
