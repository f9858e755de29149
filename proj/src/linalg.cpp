#include "nse/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/SVD>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "nse/errors.hpp"

namespace nse {

std::string_view to_string(NullSpaceStatus status) {
  switch (status) {
    case NullSpaceStatus::exact:
      return "exact";
    case NullSpaceStatus::empty:
      return "empty";
    case NullSpaceStatus::approximate:
      return "approximate";
  }
  return "unknown";
}

SvdResult svd(const Matrix& A) {
  Eigen::BDCSVD<Matrix> dec(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (dec.info() != Eigen::Success) throw NumericalError("SVD failed to converge");
  return {dec.matrixU(), dec.singularValues(), dec.matrixV().transpose()};
}

Matrix correlation(const Matrix& C) {
  Matrix G = C * C.transpose();
  return 0.5 * (G + G.transpose());
}

double symmetry_error(const Matrix& P) { return (P - P.transpose()).norm(); }

double idempotence_error(const Matrix& P) { return (P * P - P).norm(); }

namespace {

Matrix symmetric_outer(const Matrix& basis) {
  Matrix P = basis * basis.transpose();
  return 0.5 * (P + P.transpose());
}

}  // namespace

Projector null_space_projector(const Matrix& C0, double tol, std::optional<std::size_t> approx_dirs) {
  if (!(tol > 0.0)) throw ValidationError(fmt::format("null-space tolerance must be positive, got {}", tol));
  const Eigen::Index d0 = C0.rows();
  if (d0 < 1) throw ValidationError("retain matrix must have at least one row");

  Projector out;
  out.kind = ProjectorKind::null_space;
  out.tol_or_rank = tol;

  if (C0.cols() == 0) {
    out.P = Matrix::Identity(d0, d0);
    out.kept_dims = static_cast<std::size_t>(d0);
    return out;
  }

  // The singular values of C0 C0^T are the squared singular values of C0 and
  // the left singular vectors coincide, so decompose the (thinner) C0 directly.
  Eigen::BDCSVD<Matrix> dec(C0, Eigen::ComputeThinU);
  if (dec.info() != Eigen::Success) throw NumericalError("SVD of the retain matrix failed to converge");
  const Vector sigma_corr = dec.singularValues().array().square();
  const Eigen::Index rank = (sigma_corr.array() >= tol).count();
  const Eigen::Index kept = d0 - rank;

  if (kept > 0) {
    out.status = NullSpaceStatus::exact;
    out.kept_dims = static_cast<std::size_t>(kept);
    if (rank == 0) {
      out.P = Matrix::Identity(d0, d0);
    } else {
      Matrix P = Matrix::Identity(d0, d0) - dec.matrixU().leftCols(rank) * dec.matrixU().leftCols(rank).transpose();
      out.P = 0.5 * (P + P.transpose());
    }
    return out;
  }

  // Full rank at this tolerance: no exact null space exists.
  if (approx_dirs && *approx_dirs > 0) {
    const Eigen::Index k = std::min<Eigen::Index>(static_cast<Eigen::Index>(*approx_dirs), d0);
    out.status = NullSpaceStatus::approximate;
    out.kept_dims = static_cast<std::size_t>(k);
    out.P = k == d0 ? Matrix(Matrix::Identity(d0, d0)) : symmetric_outer(dec.matrixU().rightCols(k));
    spdlog::warn("retain correlation is full rank at tol={:g}; approximating the null space with the {} "
                 "smallest directions (smallest kept singular value {:.3e})",
                 tol, k, sigma_corr(d0 - k));
    return out;
  }
  out.status = NullSpaceStatus::empty;
  out.kept_dims = 0;
  out.P = Matrix::Zero(d0, d0);
  spdlog::warn("retain correlation is full rank at tol={:g} (smallest singular value {:.3e}); null space is "
               "empty and no edit can be made; pass an approximation rank to force one",
               tol, sigma_corr(d0 - 1));
  return out;
}

Projector null_space_projector(const ConceptMatrix& C0, double tol, std::optional<std::size_t> approx_dirs) {
  return null_space_projector(C0.embeddings, tol, approx_dirs);
}

std::size_t rank_estimate(const Matrix& A, double tol) {
  if (!(tol > 0.0)) throw ValidationError(fmt::format("rank tolerance must be positive, got {}", tol));
  if (A.size() == 0) return 0;
  Eigen::BDCSVD<Matrix> dec(A);
  if (dec.info() != Eigen::Success) throw NumericalError("SVD failed to converge");
  return static_cast<std::size_t>((dec.singularValues().array() >= tol).count());
}

Projector least_variation_projector(const Matrix& W, std::size_t r) {
  const auto k = static_cast<std::size_t>(std::min(W.rows(), W.cols()));
  if (r < 1 || r > k) {
    throw ValidationError(fmt::format("augmentation rank r={} out of range [1, {}] for a {}x{} weight matrix", r, k,
                                      W.rows(), W.cols()));
  }
  const Eigen::Index d0 = W.cols();
  Projector out;
  out.kind = ProjectorKind::least_variation;
  out.tol_or_rank = static_cast<double>(r);
  out.kept_dims = r;

  Eigen::BDCSVD<Matrix> dec(W, Eigen::ComputeThinV);
  if (dec.info() != Eigen::Success) throw NumericalError("SVD of the weight matrix failed to converge");
  // Singular values come out descending, so the last r columns are the least-changing directions.
  out.basis = dec.matrixV().rightCols(static_cast<Eigen::Index>(r));
  out.P = static_cast<Eigen::Index>(r) == d0 ? Matrix(Matrix::Identity(d0, d0)) : symmetric_outer(out.basis);
  return out;
}

LinearSystem::LinearSystem(const Matrix& A, double condition_cap) {
  if (A.rows() != A.cols()) {
    throw ValidationError(fmt::format("linear solve needs a square matrix, got {}x{}", A.rows(), A.cols()));
  }
  if (A.size() == 0) return;
  lu_.compute(A);
  const double rcond = lu_.rcond();
  condition_ = rcond > 0.0 ? 1.0 / rcond : std::numeric_limits<double>::infinity();
  if (!std::isfinite(condition_) || condition_ > condition_cap) {
    throw NumericalError(fmt::format("matrix is singular or ill-conditioned (condition estimate {:.3e} > cap {:.1e})",
                                     condition_, condition_cap));
  }
}

Matrix LinearSystem::solve(const Matrix& B) const {
  if (lu_.rows() == 0) return B;
  if (B.rows() != lu_.rows()) throw ValidationError("right-hand side row count does not match the system");
  return lu_.solve(B);
}

Matrix LinearSystem::solve_right(const Matrix& B) const {
  if (lu_.rows() == 0) return B;
  if (B.cols() != lu_.rows()) throw ValidationError("right-hand side column count does not match the system");
  // X A = B  <=>  A^T X^T = B^T, solved with the same factorisation.
  const Matrix Bt = B.transpose();
  Matrix Xt(lu_.rows(), B.rows());
  lu_._solve_impl_transposed<false>(Bt, Xt);
  return Xt.transpose();
}

Matrix solve_linear(const Matrix& A, const Matrix& B, double condition_cap) {
  return LinearSystem(A, condition_cap).solve(B);
}

Matrix solve_linear_right(const Matrix& A, const Matrix& B, double condition_cap) {
  return LinearSystem(A, condition_cap).solve_right(B);
}

Matrix range_projector(const Matrix& A, double rel_tol) {
  if (A.cols() == 0) return Matrix::Zero(A.rows(), A.rows());
  Eigen::BDCSVD<Matrix> dec(A, Eigen::ComputeThinU);
  if (dec.info() != Eigen::Success) throw NumericalError("SVD failed to converge");
  const Vector& s = dec.singularValues();
  if (s.size() == 0 || s(0) == 0.0) return Matrix::Zero(A.rows(), A.rows());
  const Eigen::Index k = (s.array() > rel_tol * s(0)).count();
  return symmetric_outer(dec.matrixU().leftCols(k));
}

}  // namespace nse
