#pragma once

#include "nse/linalg.hpp"
#include "nse/types.hpp"

namespace nse {

// Closed-form edits of a single layer. Every solver writes e1, e0 and the
// invariant residual into the returned diagnostics; e0 is measured against
// `retain` (pass an empty matrix to skip it).
//
// Common notation: B = W (C* C1^T - C1 C1^T), the "pull" that maps erased
// concepts onto their anchors.

/// Unconstrained weighted least squares:
///   delta = alpha B (alpha C1 C1^T + beta C0 C0^T + lambda I)^-1
EditDelta solve_uce(const LayerWeights& layer, const ConceptMatrix& C1, const ConceptMatrix& C_star,
                    const ConceptMatrix& C0, const Hyperparams& hp);

/// Erasure term plus ridge only: delta = B (I + C1 C1^T)^-1.
EditDelta solve_erase_only(const LayerWeights& layer, const ConceptMatrix& C1, const ConceptMatrix& C_star,
                           const Matrix& retain = {});

/// Update confined to range(P): delta = B P (C1 C1^T P + I)^-1.
EditDelta solve_null_space(const LayerWeights& layer, const ConceptMatrix& C1, const ConceptMatrix& C_star,
                           const Projector& P, const Matrix& retain = {});

/// Null-space update with the hard constraint delta C2 = 0:
///   delta = B P Q M,  M = (C1 C1^T P + I)^-1,
///   Q = I - M C2 (C2^T P M C2 + lambda_inv I)^-1 C2^T P.
/// With zero invariant columns this is exactly solve_null_space.
EditDelta solve_speed(const LayerWeights& layer, const ConceptMatrix& C1, const ConceptMatrix& C_star,
                      const Projector& P, const ConceptMatrix& C2, const Hyperparams& hp,
                      const Matrix& retain = {});

/// W + delta, as a new LayerWeights.
LayerWeights apply_edit(const LayerWeights& layer, const EditDelta& delta);

/// ||delta c0||^2
double prior_shift(const EditDelta& delta, const Vector& c0);

/// ||(W + delta) C1 - W C*||^2
double erasure_error(const Matrix& W, const Matrix& delta, const Matrix& C1, const Matrix& C_star);

}  // namespace nse
