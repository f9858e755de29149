#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/SVD>

#include "nse/errors.hpp"
#include "nse/linalg.hpp"
#include "nse/log.hpp"
#include "test_support.hpp"

using namespace nse;

namespace {

struct QuietLogs {
  QuietLogs() { init_logging("off"); }
} quiet;

}  // namespace

TEST_CASE("rank of diag(3, 2, 0)") {
  Matrix A = Eigen::Vector3d(3.0, 2.0, 0.0).asDiagonal();
  CHECK(rank_estimate(A, 1e-8) == 2);
  CHECK(rank_estimate(A, 2.5) == 1);
  CHECK(rank_estimate(A, 2.0) == 2);  // equal to tol counts as rank
}

TEST_CASE("null-space projector matches the explicit orthogonal complement") {
  const Matrix C0 = nse::testing::gaussian(8, 3, 11);
  const Projector P = null_space_projector(C0, 1e-8);
  const Matrix expected =
      Matrix::Identity(8, 8) - C0 * (C0.transpose() * C0).inverse() * C0.transpose();
  CHECK((P.P - expected).norm() < 1e-8);
  CHECK((P.P * C0).norm() < 1e-8);
  CHECK(P.kept_dims == 5);
  CHECK(P.status == NullSpaceStatus::exact);
  CHECK(symmetry_error(P.P) <= 1e-12);
  CHECK(idempotence_error(P.P) <= 1e-12);
}

TEST_CASE("tolerance boundary: singular values equal to tol count as rank") {
  Matrix C0 = Matrix::Zero(4, 1);
  C0(0, 0) = 0.5;  // C0 C0^T has the single nonzero singular value 0.25
  const Projector at = null_space_projector(C0, 0.25);
  CHECK(at.kept_dims == 3);
  CHECK(at.P(0, 0) == doctest::Approx(0.0));
  const Projector above = null_space_projector(C0, 0.2500001);
  CHECK(above.kept_dims == 4);
  CHECK((above.P - Matrix::Identity(4, 4)).norm() == 0.0);
}

TEST_CASE("empty retain set keeps everything") {
  const Projector P = null_space_projector(Matrix(5, 0), 1e-4);
  CHECK(P.kept_dims == 5);
  CHECK(P.P == Matrix::Identity(5, 5));
}

TEST_CASE("full-rank retain set: empty projector by default, k smallest directions on request") {
  Matrix C0 = Eigen::Vector4d(4.0, 3.0, 2.0, 1.0).asDiagonal();
  const Projector empty = null_space_projector(C0, 1e-4);
  CHECK(empty.status == NullSpaceStatus::empty);
  CHECK(empty.kept_dims == 0);
  CHECK(empty.P.norm() == 0.0);

  const Projector approx = null_space_projector(C0, 1e-4, 2);
  CHECK(approx.status == NullSpaceStatus::approximate);
  CHECK(approx.kept_dims == 2);
  Matrix expected = Matrix::Zero(4, 4);
  expected(2, 2) = 1.0;
  expected(3, 3) = 1.0;
  CHECK((approx.P - expected).norm() < 1e-12);
  CHECK(approx.P.trace() == doctest::Approx(2.0));

  // The fallback only applies when nothing falls below tol.
  Matrix deficient = C0;
  deficient(3, 3) = 0.0;
  const Projector exact = null_space_projector(deficient, 1e-4, 2);
  CHECK(exact.status == NullSpaceStatus::exact);
  CHECK(exact.kept_dims == 1);
}

TEST_CASE("null-space projector validates its inputs") {
  CHECK_THROWS_AS(null_space_projector(Matrix::Identity(3, 3), 0.0), ValidationError);
  CHECK_THROWS_AS(null_space_projector(Matrix::Identity(3, 3), -1.0), ValidationError);
}

TEST_CASE("least-variation projector picks the smallest singular directions") {
  Matrix W = Eigen::Vector3d(10.0, 1.0, 0.1).asDiagonal();
  const Projector P = least_variation_projector(W, 1);
  CHECK(P.kind == ProjectorKind::least_variation);
  Matrix e3e3 = Matrix::Zero(3, 3);
  e3e3(2, 2) = 1.0;
  CHECK((P.P - e3e3).norm() < 1e-12);
  CHECK(P.basis.cols() == 1);

  const Projector P2 = least_variation_projector(W, 2);
  CHECK(P2.P.trace() == doctest::Approx(2.0));
  CHECK(std::abs(P2.P(0, 0)) < 1e-12);

  CHECK(least_variation_projector(W, 3).P == Matrix::Identity(3, 3));
  CHECK_THROWS_AS(least_variation_projector(W, 0), ValidationError);
  CHECK_THROWS_AS(least_variation_projector(W, 4), ValidationError);
  CHECK_THROWS_AS(least_variation_projector(Matrix::Ones(2, 5), 3), ValidationError);
}

TEST_CASE("least-variation mapped norm bound") {
  const Matrix W = nse::testing::gaussian(320, 768, 5);
  const Projector P = least_variation_projector(W, 1);
  Eigen::BDCSVD<Matrix> dec(W);
  const double sigma_min = dec.singularValues()(dec.singularValues().size() - 1);
  std::mt19937_64 gen(5);
  double mapped = 0.0, raw = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Vector eps = nse::testing::gaussian(768, 1, gen);
    const Vector v = P.P * eps;
    mapped += (W * v).norm();
    raw += v.norm();
  }
  CHECK(mapped / 1000 <= sigma_min * raw / 1000 + 1e-9);
}

TEST_CASE("linear systems: residual checks and singularity") {
  const Matrix R = nse::testing::gaussian(16, 16, 3);
  const Matrix A = R * R.transpose() + Matrix::Identity(16, 16);
  const Matrix B = nse::testing::gaussian(16, 4, 4);
  const Matrix X = solve_linear(A, B);
  CHECK((A * X - B).norm() / B.norm() < 1e-12);

  const Matrix Bt = nse::testing::gaussian(5, 16, 6);
  const Matrix Y = solve_linear_right(A + R, Bt);
  CHECK((Y * (A + R) - Bt).norm() / Bt.norm() < 1e-12);

  Matrix S = Matrix::Ones(3, 3);
  CHECK_THROWS_AS(solve_linear(S, Matrix::Ones(3, 1)), NumericalError);
  CHECK_THROWS_AS(LinearSystem(Matrix::Ones(2, 3)), ValidationError);
  CHECK_THROWS_AS(solve_linear(A, Matrix::Ones(3, 1)), ValidationError);
}

TEST_CASE("range projector") {
  Matrix A = nse::testing::gaussian(6, 2, 8);
  const Matrix P = range_projector(A);
  CHECK((P * A - A).norm() < 1e-12);
  CHECK(P.trace() == doctest::Approx(2.0));
  CHECK(idempotence_error(P) < 1e-12);
  CHECK(range_projector(Matrix::Zero(4, 2)).norm() == 0.0);
}

TEST_CASE("correlation is symmetric") {
  const Matrix C = nse::testing::gaussian(7, 3, 9);
  const Matrix G = correlation(C);
  CHECK(symmetry_error(G) == 0.0);
  CHECK((G - C * C.transpose()).norm() < 1e-14);
}
