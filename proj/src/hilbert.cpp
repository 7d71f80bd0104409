#include "pbdw/hilbert.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/SVD>

#include "pbdw/errors.hpp"

namespace pbdw {

namespace {

constexpr double kOrthonormalTol = 1e-10;
constexpr double kIndependenceTol = 1e-12;

void require_length(const DiscreteSpace& space, Index len, const char* what) {
  if (len != space.dim()) {
    throw DimensionError(std::string(what) + ": length " + std::to_string(len) +
                         " does not match space dimension " + std::to_string(space.dim()));
  }
}

}  // namespace

DiscreteSpace::DiscreteSpace(Vector weights) : weights_(std::move(weights)) {
  if (weights_.size() == 0) {
    throw ValidationError("DiscreteSpace: dimension must be positive");
  }
  for (Index k = 0; k < weights_.size(); ++k) {
    if (!std::isfinite(weights_[k]) || weights_[k] <= 0.0) {
      throw ValidationError("DiscreteSpace: weight " + std::to_string(k) +
                            " is not strictly positive");
    }
  }
}

bool DiscreteSpace::operator==(const DiscreteSpace& other) const {
  return weights_.size() == other.weights_.size() && weights_ == other.weights_;
}

SpacePtr make_space(Vector weights) {
  return std::make_shared<const DiscreteSpace>(std::move(weights));
}

bool compatible(const DiscreteSpace& a, const DiscreteSpace& b) {
  return &a == &b || a == b;
}

double inner(const DiscreteSpace& space, const Vector& a, const Vector& b) {
  require_length(space, a.size(), "inner");
  require_length(space, b.size(), "inner");
  return (space.weights().array() * a.array() * b.array()).sum();
}

double norm(const DiscreteSpace& space, const Vector& a) {
  return std::sqrt(inner(space, a, a));
}

Matrix weighted_cross(const DiscreteSpace& space, const Matrix& a, const Matrix& b) {
  require_length(space, a.rows(), "weighted_cross");
  require_length(space, b.rows(), "weighted_cross");
  return a.transpose() * (b.array().colwise() * space.weights().array()).matrix();
}

Basis::Basis(SpacePtr space, Matrix vectors, bool orthonormal)
    : space_(std::move(space)), vectors_(std::move(vectors)), orthonormal_(orthonormal) {
  if (!space_) {
    throw ValidationError("Basis: null space");
  }
  require_length(*space_, vectors_.rows(), "Basis");
  if (vectors_.cols() == 0) {
    return;
  }
  if (!vectors_.allFinite()) {
    throw ValidationError("Basis: non-finite entries");
  }
  if (orthonormal_) {
    const Matrix g = weighted_cross(*space_, vectors_, vectors_);
    const double dev = (g - Matrix::Identity(g.rows(), g.cols())).cwiseAbs().maxCoeff();
    if (dev > kOrthonormalTol) {
      throw ContractError("Basis: flagged orthonormal but Gram deviates from identity by " +
                          std::to_string(dev));
    }
    return;
  }
  const Matrix scaled = vectors_.array().colwise() * space_->weights().array().sqrt();
  const Eigen::JacobiSVD<Matrix> svd(scaled);
  const double smin = svd.singularValues()(svd.singularValues().size() - 1);
  if (vectors_.cols() > vectors_.rows() || smin <= kIndependenceTol) {
    throw ValidationError("Basis: vectors are linearly dependent");
  }
}

Basis Basis::prefix(Index n) const {
  if (n < 0 || n > size()) {
    throw ValidationError("Basis::prefix: requested " + std::to_string(n) + " of " +
                          std::to_string(size()) + " vectors");
  }
  return Basis(space_, vectors_.leftCols(n), orthonormal_);
}

Vector Basis::combine(const Vector& coeffs) const {
  if (coeffs.size() != size()) {
    throw DimensionError("Basis::combine: coefficient count mismatch");
  }
  return vectors_ * coeffs;
}

Matrix gram(const Basis& a, const Basis& b) {
  if (!compatible(*a.space(), *b.space())) {
    throw IncompatibleSpaceError("gram: bases live on different spaces");
  }
  return weighted_cross(*a.space(), a.vectors(), b.vectors());
}

void apply_sign_convention(Eigen::Ref<Vector> v) {
  const double scale = v.cwiseAbs().maxCoeff();
  if (scale == 0.0) {
    return;
  }
  // "First nonzero" is taken relative to the largest entry so rounding noise
  // cannot decide the sign.
  for (Index k = 0; k < v.size(); ++k) {
    if (std::abs(v[k]) > 1e-12 * scale) {
      if (v[k] < 0.0) {
        v = -v;
      }
      return;
    }
  }
}

Basis orthonormalize(const Matrix& columns, const SpacePtr& space, double drop_tol) {
  if (!(drop_tol > 0.0)) {
    throw ValidationError("orthonormalize: drop_tol must be positive");
  }
  if (!space) {
    throw ValidationError("orthonormalize: null space");
  }
  require_length(*space, columns.rows(), "orthonormalize");
  const Vector& w = space->weights();

  Matrix kept(columns.rows(), columns.cols());
  Index count = 0;
  for (Index c = 0; c < columns.cols(); ++c) {
    Vector q = columns.col(c);
    const double original = std::sqrt((w.array() * q.array().square()).sum());
    if (!(original > 0.0)) {
      continue;
    }
    for (int pass = 0; pass < 2; ++pass) {
      for (Index e = 0; e < count; ++e) {
        const double coef = (w.array() * kept.col(e).array() * q.array()).sum();
        q -= coef * kept.col(e);
      }
    }
    const double residual = std::sqrt((w.array() * q.array().square()).sum());
    if (residual <= drop_tol * original) {
      continue;
    }
    q /= residual;
    apply_sign_convention(q);
    kept.col(count++) = q;
  }
  if (count == 0) {
    throw RankZeroError("orthonormalize: no vector survived the drop tolerance");
  }
  return Basis(space, kept.leftCols(count), true);
}

Basis orthonormalize(std::span<const Vector> vectors, const SpacePtr& space, double drop_tol) {
  if (!space) {
    throw ValidationError("orthonormalize: null space");
  }
  Matrix columns(space->dim(), static_cast<Index>(vectors.size()));
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    require_length(*space, vectors[i].size(), "orthonormalize");
    columns.col(static_cast<Index>(i)) = vectors[i];
  }
  return orthonormalize(columns, space, drop_tol);
}

Projection project(const Basis& onto, const Vector& v) {
  if (!onto.orthonormal()) {
    throw ContractError("project: target basis must be orthonormal");
  }
  require_length(*onto.space(), v.size(), "project");
  Projection out;
  out.coeffs = onto.vectors().transpose() * (onto.space()->weights().cwiseProduct(v));
  out.projection = onto.vectors() * out.coeffs;
  return out;
}

double inf_sup(const Basis& vn, const Basis& wm) {
  if (!vn.orthonormal() || !wm.orthonormal()) {
    throw ContractError("inf_sup: both bases must be orthonormal");
  }
  if (vn.size() == 0) {
    throw ValidationError("inf_sup: empty reduced space");
  }
  if (vn.size() > wm.size()) {
    throw ValidationError("inf_sup: requires n <= m (n = " + std::to_string(vn.size()) +
                          ", m = " + std::to_string(wm.size()) + ")");
  }
  const Matrix cross = gram(wm, vn);
  const Eigen::JacobiSVD<Matrix> svd(cross);
  const double smin = svd.singularValues()(svd.singularValues().size() - 1);
  return std::clamp(smin, 0.0, 1.0);
}

}  // namespace pbdw
