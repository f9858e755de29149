#include "nse/solvers.hpp"

#include <chrono>
#include <string>

#include <Eigen/SVD>

#include <fmt/format.h>

#include "nse/errors.hpp"

namespace nse {

namespace {

using Clock = std::chrono::steady_clock;

void check_edit_shapes(const LayerWeights& layer, const ConceptMatrix& C1, const ConceptMatrix& C_star) {
  const Eigen::Index d0 = layer.W.cols();
  if (C1.count() < 1) throw ValidationError("erase set must contain at least one concept");
  if (C1.count() != C_star.count()) {
    throw ValidationError(fmt::format("N_E mismatch: erase set has {} columns, anchor set has {}", C1.count(),
                                      C_star.count()));
  }
  if (C1.dim() != d0 || C_star.dim() != d0) {
    throw ValidationError(fmt::format("layer '{}': concept dimension {} does not match W's {} columns",
                                      layer.layer_id, C1.dim() != d0 ? C1.dim() : C_star.dim(), d0));
  }
}

void check_rows(const Matrix& m, Eigen::Index d0, const char* what) {
  if (m.cols() > 0 && m.rows() != d0) {
    throw ValidationError(fmt::format("{} matrix has {} rows, expected d0 = {}", what, m.rows(), d0));
  }
}

// W (C* - C1), the d_v x N_E factor of B = W (C* C1^T - C1 C1^T).
Matrix pull_factor(const Matrix& W, const Matrix& C1, const Matrix& C_star) { return W * (C_star - C1); }

void fill_diagnostics(EditDelta& out, const LayerWeights& layer, const ConceptMatrix& C1, const ConceptMatrix& C_star,
                      const Matrix& retain, const Matrix& invariants, Clock::time_point start) {
  out.diagnostics.e1 = erasure_error(layer.W, out.delta, C1.embeddings, C_star.embeddings);
  out.diagnostics.e0 = retain.cols() > 0 ? (out.delta * retain).squaredNorm() : 0.0;
  out.diagnostics.invariant_residual = invariants.cols() > 0 ? (out.delta * invariants).norm() : 0.0;
  out.diagnostics.solve_wall_time = Clock::now() - start;
}

}  // namespace

double erasure_error(const Matrix& W, const Matrix& delta, const Matrix& C1, const Matrix& C_star) {
  return ((W + delta) * C1 - W * C_star).squaredNorm();
}

EditDelta solve_uce(const LayerWeights& layer, const ConceptMatrix& C1, const ConceptMatrix& C_star,
                    const ConceptMatrix& C0, const Hyperparams& hp) {
  const auto start = Clock::now();
  check_edit_shapes(layer, C1, C_star);
  const Eigen::Index d0 = layer.W.cols();
  check_rows(C0.embeddings, d0, "retain");
  hp.validate();

  const Matrix& c1 = C1.embeddings;
  Matrix A = hp.alpha * correlation(c1) + hp.lambda_reg * Matrix::Identity(d0, d0);
  if (C0.count() > 0) A += hp.beta * correlation(C0.embeddings);
  const Matrix rhs = hp.alpha * (pull_factor(layer.W, c1, C_star.embeddings) * c1.transpose());

  EditDelta out;
  out.layer_id = layer.layer_id;
  out.delta = solve_linear_right(A, rhs);
  fill_diagnostics(out, layer, C1, C_star, C0.embeddings, Matrix(), start);
  return out;
}

EditDelta solve_erase_only(const LayerWeights& layer, const ConceptMatrix& C1, const ConceptMatrix& C_star,
                           const Matrix& retain) {
  const auto start = Clock::now();
  check_edit_shapes(layer, C1, C_star);
  const Eigen::Index d0 = layer.W.cols();
  check_rows(retain, d0, "retain");

  // F C1^T (I + C1 C1^T)^-1 = F (I + C1^T C1)^-1 C1^T, an N_E x N_E solve instead of d0 x d0.
  const Matrix& c1 = C1.embeddings;
  const Eigen::Index n = c1.cols();
  const Matrix S = c1.transpose() * c1 + Matrix::Identity(n, n);
  EditDelta out;
  out.layer_id = layer.layer_id;
  out.delta = solve_linear_right(S, pull_factor(layer.W, c1, C_star.embeddings)) * c1.transpose();
  fill_diagnostics(out, layer, C1, C_star, retain, Matrix(), start);
  return out;
}

EditDelta solve_speed(const LayerWeights& layer, const ConceptMatrix& C1, const ConceptMatrix& C_star,
                      const Projector& P, const ConceptMatrix& C2, const Hyperparams& hp, const Matrix& retain) {
  const auto start = Clock::now();
  check_edit_shapes(layer, C1, C_star);
  const Eigen::Index d0 = layer.W.cols();
  if (P.dim() != d0 || P.P.cols() != d0) {
    throw ValidationError(fmt::format("projector is {}x{}, expected {}x{}", P.P.rows(), P.P.cols(), d0, d0));
  }
  check_rows(C2.embeddings, d0, "invariant");
  check_rows(retain, d0, "retain");
  if (!(hp.lambda_inv >= 0.0)) throw ValidationError("lambda_inv must be non-negative");

  // With M = (C1 C1^T P + I)^-1 the push-through identity gives
  //   C1^T P M = S^-1 C1^T P,   M = I - C1 S^-1 C1^T P,   S = I + C1^T P C1,
  // so every inverse is N_E x N_E (or k x k) and nothing d0 x d0 is factorised.
  EditDelta out;
  out.layer_id = layer.layer_id;
  if (P.kept_dims == 0) {
    // Nothing is editable; every constraint holds trivially.
    out.delta = Matrix::Zero(layer.W.rows(), d0);
    fill_diagnostics(out, layer, C1, C_star, retain, C2.embeddings, start);
    return out;
  }

  const Matrix& c1 = C1.embeddings;
  const Eigen::Index n = c1.cols();
  const Matrix c1tP = c1.transpose() * P.P;  // N_E x d0
  const Matrix S = c1tP * c1 + Matrix::Identity(n, n);
  const LinearSystem system(S);
  const Matrix SinvC1tP = system.solve(c1tP);

  // Z = B P M = W (C* - C1) C1^T P M.
  const Matrix Z = pull_factor(layer.W, c1, C_star.embeddings) * SinvC1tP;

  const Matrix& c2 = C2.embeddings;
  if (c2.cols() == 0) {
    out.delta = Z;
  } else {
    // B P Q M = Z - (Z C2) G^-1 (C2^T P M),  G = C2^T P M C2 + lambda_inv I.
    const Matrix c2tP = c2.transpose() * P.P;
    const Matrix T = c2tP - (c2tP * c1) * SinvC1tP;  // C2^T P M, k x d0
    Matrix G = T * c2;
    G.diagonal().array() += hp.lambda_inv;
    auto singular = [&](const std::string& why) {
      return NumericalError(fmt::format(
          "layer '{}': invariant constraint Gram matrix C2^T P M C2 is singular ({}); the invariants are "
          "degenerate or lie outside the null space; set lambda_inv > 0 (e.g. 0.5) to regularise",
          layer.layer_id, why));
    };
    // rcond alone cannot see a uniformly tiny G (a 1x1 G is always "well conditioned"),
    // so also measure it against the scale it would have if P M were the identity.
    const Eigen::JacobiSVD<Matrix> g_svd(G);
    const double reference = c2.squaredNorm() + hp.lambda_inv;
    const double smallest = g_svd.singularValues()(G.rows() - 1);
    if (!(smallest > reference / kDefaultConditionCap)) {
      throw singular(fmt::format("smallest singular value {:.3e} against scale {:.3e}", smallest, reference));
    }
    Matrix ZC2G;
    try {
      ZC2G = solve_linear_right(G, Z * c2);
    } catch (const NumericalError& e) {
      throw singular(e.what());
    }
    out.delta = Z - ZC2G * T;
  }
  fill_diagnostics(out, layer, C1, C_star, retain, c2, start);
  return out;
}

EditDelta solve_null_space(const LayerWeights& layer, const ConceptMatrix& C1, const ConceptMatrix& C_star,
                           const Projector& P, const Matrix& retain) {
  const ConceptMatrix none{Matrix(layer.W.cols(), 0), ConceptRole::invariant};
  return solve_speed(layer, C1, C_star, P, none, Hyperparams{}, retain);
}

LayerWeights apply_edit(const LayerWeights& layer, const EditDelta& delta) {
  if (delta.layer_id != layer.layer_id) {
    throw ValidationError(fmt::format("delta for layer '{}' applied to layer '{}'", delta.layer_id, layer.layer_id));
  }
  if (delta.delta.rows() != layer.W.rows() || delta.delta.cols() != layer.W.cols()) {
    throw ValidationError(fmt::format("layer '{}': delta is {}x{}, W is {}x{}", layer.layer_id, delta.delta.rows(),
                                      delta.delta.cols(), layer.W.rows(), layer.W.cols()));
  }
  return {layer.layer_id, layer.W + delta.delta};
}

double prior_shift(const EditDelta& delta, const Vector& c0) {
  if (c0.size() != delta.delta.cols()) {
    throw ValidationError(
        fmt::format("prior shift: embedding has length {}, delta expects {}", c0.size(), delta.delta.cols()));
  }
  return (delta.delta * c0).squaredNorm();
}

}  // namespace nse
