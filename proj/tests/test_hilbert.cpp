#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "pbdw/errors.hpp"
#include "pbdw/hilbert.hpp"

using namespace pbdw;

TEST_CASE("inner product basics") {
  const auto space = make_space(Vector::Ones(4));
  Vector e1 = Vector::Zero(4);
  e1[0] = 1.0;
  CHECK(inner(*space, e1, e1) == 1.0);

  Vector a = Vector::Zero(4);
  Vector b = Vector::Zero(4);
  a.head(2) << 1.0, 2.0;
  b.tail(2) << 3.0, 4.0;
  CHECK(inner(*space, a, b) == 0.0);
}

TEST_CASE("inner product matches extended-precision summation") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Vector w = oracle::random_weights(10, rng);
    const auto space = make_space(w);
    const Vector a = oracle::random_vector(10, rng);
    const Vector b = oracle::random_vector(10, rng);
    const long double ref = oracle::inner(w, a, b);
    const double got = inner(*space, a, b);
    CHECK(std::abs(got - static_cast<double>(ref)) <= 1e-14 * std::max(1.0L, std::abs(ref)));
  }
}

TEST_CASE("space validation and compatibility") {
  CHECK_THROWS_AS(make_space(Vector::Zero(0)), ValidationError);
  Vector bad = Vector::Ones(3);
  bad[1] = 0.0;
  CHECK_THROWS_AS(make_space(bad), ValidationError);
  bad[1] = std::nan("");
  CHECK_THROWS_AS(make_space(bad), ValidationError);

  const auto a = make_space(Vector::Ones(3));
  const auto b = make_space(Vector::Ones(3));
  const auto c = make_space(Vector::Constant(3, 2.0));
  CHECK(compatible(*a, *b));
  CHECK_FALSE(compatible(*a, *c));
  CHECK_THROWS_AS(inner(*a, Vector::Ones(3), Vector::Ones(4)), DimensionError);
}

TEST_CASE("gram matrix") {
  std::mt19937_64 rng(12);
  const Vector w = oracle::random_weights(8, rng);
  const auto space = make_space(w);

  SUBCASE("orthonormal with itself is the identity") {
    const Matrix q = oracle::orthonormal_span(w, oracle::random_matrix(8, 3, rng));
    const Basis b(space, q, true);
    CHECK((gram(b, b) - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("disjoint supports give zero") {
    Matrix a = Matrix::Zero(8, 2);
    Matrix c = Matrix::Zero(8, 2);
    a(0, 0) = 1.0;
    a(1, 1) = 2.0;
    c(5, 0) = 1.0;
    c(7, 1) = -1.0;
    CHECK(gram(Basis(space, a, false), Basis(space, c, false)).isZero(0.0));
  }
  SUBCASE("random 3x2 entries match inner products") {
    const Matrix a = oracle::random_matrix(8, 3, rng);
    const Matrix c = oracle::random_matrix(8, 2, rng);
    const Matrix g = gram(Basis(space, a, false), Basis(space, c, false));
    REQUIRE(g.rows() == 3);
    REQUIRE(g.cols() == 2);
    for (Index i = 0; i < 3; ++i) {
      for (Index j = 0; j < 2; ++j) {
        const double ref = static_cast<double>(oracle::inner(w, a.col(i), c.col(j)));
        CHECK(std::abs(g(i, j) - ref) <= 1e-14 * std::max(1.0, std::abs(ref)));
      }
    }
  }
}

TEST_CASE("basis construction contracts") {
  const auto space = make_space(Vector::Ones(4));
  Matrix dup(4, 2);
  dup.col(0) << 1, 2, 3, 4;
  dup.col(1) = dup.col(0);
  CHECK_THROWS(Basis(space, dup, false));
  CHECK_THROWS_AS(Basis(space, Matrix::Ones(4, 1), true), ContractError);
  CHECK_THROWS_AS(Basis(space, Matrix::Ones(3, 1), false), DimensionError);
}

TEST_CASE("orthonormalize") {
  std::mt19937_64 rng(13);

  SUBCASE("orthonormal input is kept up to sign") {
    const auto space = make_space(Vector::Ones(5));
    Matrix q = Matrix::Zero(5, 2);
    q(0, 0) = -1.0;
    q(2, 1) = 1.0;
    const Basis out = orthonormalize(q, space);
    REQUIRE(out.size() == 2);
    CHECK(out.vectors()(0, 0) == doctest::Approx(1.0));
    CHECK(out.vectors()(2, 1) == doctest::Approx(1.0));
  }
  SUBCASE("repeated vector is dropped") {
    const auto space = make_space(Vector::Ones(4));
    Matrix a(4, 2);
    a.col(0) << 1, -2, 0.5, 3;
    a.col(1) = a.col(0);
    CHECK(orthonormalize(a, space, 1e-10).size() == 1);
  }
  SUBCASE("random set: orthonormal and same span as a dense factorization") {
    const Vector w = oracle::random_weights(20, rng);
    const auto space = make_space(w);
    const Matrix a = oracle::random_matrix(20, 5, rng);
    const Basis out = orthonormalize(a, space);
    REQUIRE(out.size() == 5);
    CHECK((gram(out, out) - Matrix::Identity(5, 5)).cwiseAbs().maxCoeff() < 1e-10);
    const Matrix p_ref = oracle::projector(w, a);
    const Matrix p_got = out.vectors() * out.vectors().transpose() * w.asDiagonal();
    CHECK((p_ref - p_got).cwiseAbs().maxCoeff() < 1e-8);
    for (Index j = 0; j < out.size(); ++j) {
      Index first = 0;
      while (std::abs(out.vectors()(first, j)) < 1e-12) {
        ++first;
      }
      CHECK(out.vectors()(first, j) > 0.0);
    }
  }
}

TEST_CASE("projection") {
  std::mt19937_64 rng(14);
  const Vector w = oracle::random_weights(12, rng);
  const auto space = make_space(w);
  const Basis b = orthonormalize(oracle::random_matrix(12, 3, rng), space);

  SUBCASE("element of the span is reproduced") {
    const Vector v = b.vectors() * Vector::LinSpaced(3, 1.0, 3.0);
    const auto p = project(b, v);
    CHECK(norm(*space, p.projection - v) <= 1e-12 * norm(*space, v));
  }
  SUBCASE("orthogonal element projects to zero") {
    Vector v = oracle::random_vector(12, rng);
    v -= b.vectors() * (b.vectors().transpose() * w.asDiagonal() * v);
    v -= b.vectors() * (b.vectors().transpose() * w.asDiagonal() * v);
    const auto p = project(b, v);
    CHECK(p.coeffs.cwiseAbs().maxCoeff() < 1e-12);
    CHECK(p.projection.cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("projection beats random candidates in the span") {
    const Vector v = oracle::random_vector(12, rng);
    const double best = norm(*space, v - project(b, v).projection);
    for (int k = 0; k < 1000; ++k) {
      const Vector cand = b.vectors() * oracle::random_vector(3, rng);
      CHECK(best <= norm(*space, v - cand) + 1e-14);
    }
  }
}

TEST_CASE("inf-sup constant") {
  std::mt19937_64 rng(15);
  const Vector w = oracle::random_weights(10, rng);
  const auto space = make_space(w);
  const Matrix q = oracle::orthonormal_span(w, oracle::random_matrix(10, 6, rng));

  SUBCASE("nested spaces give one") {
    CHECK(inf_sup(Basis(space, q.leftCols(2), true), Basis(space, q, true)) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("orthogonal spaces give zero") {
    CHECK(inf_sup(Basis(space, q.rightCols(2), true), Basis(space, q.leftCols(3), true)) < 1e-12);
  }
  SUBCASE("planar angle") {
    const auto plane = make_space(Vector::Ones(2));
    for (double theta : {std::numbers::pi / 3, 0.2, 1.3, 2.5}) {
      Matrix v(2, 1);
      v << std::cos(theta), std::sin(theta);
      Matrix e(2, 1);
      e << 1.0, 0.0;
      const double beta = inf_sup(Basis(plane, v, true), Basis(plane, e, true));
      CHECK(std::abs(beta - std::abs(std::cos(theta))) <= 1e-12);
    }
  }
  SUBCASE("random pairs match principal angles and stay in [0, 1]") {
    for (int trial = 0; trial < 20; ++trial) {
      const Matrix vn = oracle::orthonormal_span(w, oracle::random_matrix(10, 2, rng));
      const Matrix wm = oracle::orthonormal_span(w, oracle::random_matrix(10, 4, rng));
      const double beta = inf_sup(Basis(space, vn, true), Basis(space, wm, true));
      CHECK(beta >= 0.0);
      CHECK(beta <= 1.0);
      CHECK(std::abs(beta - oracle::inf_sup(w, vn, wm)) < 1e-10);
    }
  }
  SUBCASE("n > m is rejected") {
    CHECK_THROWS_AS(inf_sup(Basis(space, q.leftCols(3), true), Basis(space, q.leftCols(2), true)), ValidationError);
  }
}
