#pragma once

#include <cstddef>
#include <optional>
#include <string_view>

#include <Eigen/LU>

#include "nse/types.hpp"

namespace nse {

/// Thin SVD, singular values in descending order.
struct SvdResult {
  Matrix U;
  Vector sigma;
  Matrix Vt;
};

SvdResult svd(const Matrix& A);

/// C C^T, symmetrised so that the result is bitwise symmetric.
Matrix correlation(const Matrix& C);

enum class ProjectorKind { null_space, least_variation };

// How a null-space projector was obtained.
//   exact:       every basis vector has singular value below tol
//   empty:       no singular value fell below tol and no fallback was requested; P = 0
//   approximate: full-rank fallback keeping the k smallest directions
enum class NullSpaceStatus { exact, empty, approximate };

std::string_view to_string(NullSpaceStatus status);

/// A symmetric idempotent d0 x d0 matrix.
struct Projector {
  Matrix P;
  ProjectorKind kind = ProjectorKind::null_space;
  double tol_or_rank = 0.0;  // svd tolerance (null_space) or r (least_variation)
  std::size_t kept_dims = 0;
  NullSpaceStatus status = NullSpaceStatus::exact;
  // Orthonormal basis of range(P), d0 x kept_dims. Only filled for
  // least-variation projectors, where it is cheap and lets callers apply P in O(d0 r).
  Matrix basis;

  Eigen::Index dim() const { return P.rows(); }
};

double symmetry_error(const Matrix& P);     // ||P - P^T||_F
double idempotence_error(const Matrix& P);  // ||P^2 - P||_F

/// Projector onto the null space of C0 C0^T: the span of singular directions of
/// C0 C0^T whose singular value is strictly below `tol` (values equal to tol
/// count as rank). When none qualifies the projector is empty (P = 0) and a
/// warning is logged, unless `approx_dirs` asks to keep that many of the
/// smallest directions instead.
Projector null_space_projector(const Matrix& C0, double tol, std::optional<std::size_t> approx_dirs = std::nullopt);
Projector null_space_projector(const ConceptMatrix& C0, double tol,
                               std::optional<std::size_t> approx_dirs = std::nullopt);

/// Number of singular values of A that are >= tol.
std::size_t rank_estimate(const Matrix& A, double tol);

/// Projector onto the r right-singular directions of W with the smallest
/// singular values (thin SVD, so 1 <= r <= min(rows, cols)).
Projector least_variation_projector(const Matrix& W, std::size_t r);

constexpr double kDefaultConditionCap = 1e12;

/// LU factorisation of a square matrix, reused across several right-hand sides.
class LinearSystem {
 public:
  explicit LinearSystem(const Matrix& A, double condition_cap = kDefaultConditionCap);

  /// X with A X = B.
  Matrix solve(const Matrix& B) const;
  /// X with X A = B.
  Matrix solve_right(const Matrix& B) const;

  double condition_estimate() const { return condition_; }

 private:
  Eigen::PartialPivLU<Matrix> lu_;
  double condition_ = 1.0;
};

/// X with A X = B; throws NumericalError when A's condition estimate exceeds the cap.
Matrix solve_linear(const Matrix& A, const Matrix& B, double condition_cap = kDefaultConditionCap);

/// X with X A = B.
Matrix solve_linear_right(const Matrix& A, const Matrix& B, double condition_cap = kDefaultConditionCap);

/// Orthogonal projector onto range(A), built from singular directions above
/// `rel_tol * sigma_max` (a pseudo-inverse product A A^+).
Matrix range_projector(const Matrix& A, double rel_tol = 1e-10);

}  // namespace nse
