#pragma once

// Inner-product algebra on the discrete ambient space: weighted inner products,
// Gram matrices, orthonormalization, orthogonal projection and the inf-sup
// constant between two subspaces.

#include <memory>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace pbdw {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Background discretization with a diagonal (lumped quadrature) metric.
class DiscreteSpace {
 public:
  /// Throws ValidationError unless every weight is finite and strictly positive.
  explicit DiscreteSpace(Vector weights);

  Index dim() const noexcept { return weights_.size(); }
  const Vector& weights() const noexcept { return weights_; }

  bool operator==(const DiscreteSpace& other) const;

 private:
  Vector weights_;
};

using SpacePtr = std::shared_ptr<const DiscreteSpace>;

SpacePtr make_space(Vector weights);

/// Same object, or bitwise-equal weights.
bool compatible(const DiscreteSpace& a, const DiscreteSpace& b);

double inner(const DiscreteSpace& space, const Vector& a, const Vector& b);
double norm(const DiscreteSpace& space, const Vector& a);

/// Ordered family of coefficient vectors (stored as matrix columns).
///
/// When constructed with orthonormal = true the metric Gram matrix is checked
/// against the identity (1e-10 entrywise) and a ContractError is thrown if it
/// fails. Every basis is checked for linear independence.
class Basis {
 public:
  Basis(SpacePtr space, Matrix vectors, bool orthonormal);

  const SpacePtr& space() const noexcept { return space_; }
  const Matrix& vectors() const noexcept { return vectors_; }
  auto vector(Index i) const { return vectors_.col(i); }
  Index size() const noexcept { return vectors_.cols(); }
  bool orthonormal() const noexcept { return orthonormal_; }

  /// First n vectors, keeping the orthonormal flag.
  Basis prefix(Index n) const;

  /// Linear combination sum_i coeffs[i] * vectors[i].
  Vector combine(const Vector& coeffs) const;

 private:
  SpacePtr space_;
  Matrix vectors_;
  bool orthonormal_;
};

/// Entry (i, j) = inner(A[i], B[j]).
Matrix gram(const Basis& a, const Basis& b);

/// Metric-weighted cross products A^T diag(w) B for raw column blocks.
Matrix weighted_cross(const DiscreteSpace& space, const Matrix& a, const Matrix& b);

/// Modified Gram-Schmidt with one re-orthogonalization pass. Vectors whose
/// residual falls to drop_tol times their original norm are dropped. Each output
/// vector has its first significant entry made nonnegative.
Basis orthonormalize(std::span<const Vector> vectors, const SpacePtr& space,
                     double drop_tol = 1e-10);
Basis orthonormalize(const Matrix& columns, const SpacePtr& space, double drop_tol = 1e-10);

struct Projection {
  Vector coeffs;
  Vector projection;
};

Projection project(const Basis& onto, const Vector& v);

/// beta(Vn, Wm): smallest singular value of gram(Wm, Vn) for orthonormal bases.
double inf_sup(const Basis& vn, const Basis& wm);

/// Flip v so that its first significant entry is nonnegative.
void apply_sign_convention(Eigen::Ref<Vector> v);

}  // namespace pbdw
