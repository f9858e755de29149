#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nse/types.hpp"

namespace nse::oracle {

// Iterative reference minimisers and certificate checks. Nothing here calls
// the closed-form solvers' linear-algebra paths; they only evaluate gradients
// and residuals with plain matrix products.

struct OracleConfig {
  std::size_t max_steps = 200000;
  // Fixed step; when unset it is 0.5 / L with L from 50 power-iteration steps
  // on the Hessian action.
  std::optional<double> step_size;
  // Stop once ||grad|| <= grad_tol * max(1, ||grad at zero||).
  double grad_tol = 1e-11;
  // Throw on hitting max_steps before the gradient test passes.
  bool require_convergence = true;
  bool record_loss = false;

  void validate() const;
};

struct OracleResult {
  Matrix delta;
  std::size_t steps = 0;
  double grad_norm = 0.0;
  double step_size = 0.0;
  double lipschitz = 0.0;
  bool converged = false;
  std::vector<double> loss_history;  // loss at every iterate, including zero init
};

/// Gradient descent from zero on
///   alpha ||(W + D) C1 - W C*||^2 + beta ||D C0||^2 + lambda ||D||^2.
/// With C0 empty and alpha = lambda = 1 this is the erase-only objective.
OracleResult gd_minimize_uce(const Matrix& W, const Matrix& C1, const Matrix& C_star, const Matrix& C0, double alpha,
                             double beta, double lambda, const OracleConfig& cfg = {});

/// Projected gradient descent on ||(W + X) C1 - W C*||^2 + ||X||^2 over
/// X = D P with X C2 = 0; each iterate is right-multiplied by
/// P (I - C~ C~^+), C~ = P C2. Returns X = D P.
OracleResult pgd_minimize_constrained(const Matrix& W, const Matrix& C1, const Matrix& C_star, const Matrix& P,
                                      const Matrix& C2, const OracleConfig& cfg = {});

double uce_loss(const Matrix& W, const Matrix& delta, const Matrix& C1, const Matrix& C_star, const Matrix& C0,
                double alpha, double beta, double lambda);

struct KktReport {
  double stationarity_residual = 0.0;
  double feasibility_residual = 0.0;
  Matrix multiplier;  // Lambda, d_v x k
};

/// First-order conditions of the invariant-constrained null-space objective
/// at deltaP, with the multiplier recovered in closed form.
KktReport kkt_residual(const Matrix& deltaP, const Matrix& W, const Matrix& C1, const Matrix& C_star, const Matrix& P,
                       const Matrix& C2);

struct PositivityReport {
  double e0 = 0.0;
  double scale = 0.0;  // ||W C0||^2
  bool weights_full_rank = false;
  bool retain_rank_deficient = false;
  bool pull_nonzero = false;      // C* C1^T != C1 C1^T
  bool weights_nonzero = false;   // alpha, beta, lambda != 0
  bool positive = false;          // e0 > 1e-14 * scale

  bool assumptions_met() const {
    return weights_full_rank && retain_rank_deficient && pull_nonzero && weights_nonzero;
  }
};

/// Check the lower-bound theorem's assumptions and measure e0 of the UCE update.
PositivityReport positivity_probe(const LayerWeights& layer, const ConceptMatrix& C1, const ConceptMatrix& C_star,
                                  const ConceptMatrix& C0, const Hyperparams& hp);

// ---------------------------------------------------------------------------
// Built-in verification suite (fronted by `nse verify`).

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct SuiteOptions {
  std::size_t trials = 100;     // positivity probe / exact-preservation instances
  std::size_t instances = 20;   // oracle-agreement instances
  std::uint64_t seed = 2024;
};

/// Random instance with unit-norm concept columns and Gaussian weights.
EraseTask random_instance(Eigen::Index d0, Eigen::Index d_v, Eigen::Index n_erase, Eigen::Index n_retain,
                          Eigen::Index n_invariant, std::uint64_t seed);

std::vector<CheckResult> run_verification_suite(const SuiteOptions& options);

/// KKT, feasibility, preservation and projector checks for every layer of a task.
std::vector<CheckResult> verify_task(const EraseTask& task);

}  // namespace nse::oracle
