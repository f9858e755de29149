#include "nse/oracle.hpp"

#include <cmath>
#include <random>

#include <Eigen/LU>
#include <Eigen/SVD>
#include <fmt/format.h>

#include "nse/errors.hpp"
#include "nse/linalg.hpp"
#include "nse/solvers.hpp"

namespace nse::oracle {

void OracleConfig::validate() const {
  if (step_size && !(*step_size > 0.0)) throw ValidationError("oracle step_size must be positive");
  if (!(grad_tol > 0.0)) throw ValidationError("oracle grad_tol must be positive");
}

namespace {

constexpr int kPowerSteps = 50;

// Largest eigenvalue of the symmetric PSD map v -> S v by power iteration.
double power_iteration(const Matrix& S) {
  std::mt19937_64 gen(0x5eed);
  std::normal_distribution<double> normal;
  Vector v(S.rows());
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = normal(gen);
  double lambda = 0.0;
  for (int it = 0; it < kPowerSteps; ++it) {
    const double norm = v.norm();
    if (norm == 0.0) return 0.0;
    v /= norm;
    const Vector Sv = S * v;
    lambda = v.dot(Sv);
    v = Sv;
  }
  return lambda;
}

// Gradient descent on f(D) = <loss> whose Hessian acts as D -> 2 D S, with
// gradient supplied by `grad` and iterates kept in range(Pi) by right
// multiplication (Pi = I for the unconstrained case).
template <typename Grad, typename Loss>
OracleResult descend(Eigen::Index rows, const Matrix& S, const Matrix* Pi, Grad grad, Loss loss,
                     const OracleConfig& cfg) {
  cfg.validate();
  OracleResult out;
  const Eigen::Index d0 = S.rows();
  out.delta = Matrix::Zero(rows, d0);
  out.lipschitz = 2.0 * power_iteration(S);
  out.step_size = cfg.step_size ? *cfg.step_size : (out.lipschitz > 0.0 ? 0.5 / out.lipschitz : 1.0);

  auto projected_grad = [&](const Matrix& D) {
    Matrix g = grad(D);
    if (Pi) g = g * (*Pi);
    return g;
  };

  Matrix g = projected_grad(out.delta);
  const double g0 = g.norm();
  const double stop = cfg.grad_tol * std::max(1.0, g0);
  out.grad_norm = g0;
  if (cfg.record_loss) out.loss_history.push_back(loss(out.delta));

  while (out.grad_norm > stop && out.steps < cfg.max_steps) {
    out.delta -= out.step_size * g;
    if (Pi) out.delta = out.delta * (*Pi);
    ++out.steps;
    g = projected_grad(out.delta);
    out.grad_norm = g.norm();
    if (cfg.record_loss) out.loss_history.push_back(loss(out.delta));
  }
  out.converged = out.grad_norm <= stop;
  if (!out.converged && cfg.require_convergence) {
    throw NumericalError(fmt::format("oracle did not converge in {} steps (gradient norm {:.3e}, target {:.3e})",
                                     out.steps, out.grad_norm, stop));
  }
  return out;
}

}  // namespace

double uce_loss(const Matrix& W, const Matrix& delta, const Matrix& C1, const Matrix& C_star, const Matrix& C0,
                double alpha, double beta, double lambda) {
  double f = alpha * ((W + delta) * C1 - W * C_star).squaredNorm() + lambda * delta.squaredNorm();
  if (C0.cols() > 0) f += beta * (delta * C0).squaredNorm();
  return f;
}

OracleResult gd_minimize_uce(const Matrix& W, const Matrix& C1, const Matrix& C_star, const Matrix& C0, double alpha,
                             double beta, double lambda, const OracleConfig& cfg) {
  const Eigen::Index d0 = W.cols();
  Matrix S = alpha * C1 * C1.transpose() + lambda * Matrix::Identity(d0, d0);
  if (C0.cols() > 0) S += beta * C0 * C0.transpose();

  const Matrix target = W * C_star;
  auto grad = [&](const Matrix& D) {
    Matrix g = 2.0 * alpha * (((W + D) * C1 - target) * C1.transpose()) + 2.0 * lambda * D;
    if (C0.cols() > 0) g += 2.0 * beta * ((D * C0) * C0.transpose());
    return g;
  };
  auto loss = [&](const Matrix& D) { return uce_loss(W, D, C1, C_star, C0, alpha, beta, lambda); };
  return descend(W.rows(), S, nullptr, grad, loss, cfg);
}

OracleResult pgd_minimize_constrained(const Matrix& W, const Matrix& C1, const Matrix& C_star, const Matrix& P,
                                      const Matrix& C2, const OracleConfig& cfg) {
  const Eigen::Index d0 = W.cols();
  Matrix Pi = P;
  if (C2.cols() > 0) {
    const Matrix Ct = P * C2;
    Pi = P * (Matrix::Identity(d0, d0) - range_projector(Ct));
  }
  const Matrix S = Pi * (C1 * C1.transpose() + Matrix::Identity(d0, d0)) * Pi;

  const Matrix target = W * C_star;
  auto grad = [&](const Matrix& X) { return Matrix(2.0 * (((W + X) * C1 - target) * C1.transpose()) + 2.0 * X); };
  auto loss = [&](const Matrix& X) { return ((W + X) * C1 - target).squaredNorm() + X.squaredNorm(); };
  return descend(W.rows(), S, &Pi, grad, loss, cfg);
}

KktReport kkt_residual(const Matrix& deltaP, const Matrix& W, const Matrix& C1, const Matrix& C_star, const Matrix& P,
                       const Matrix& C2) {
  const Eigen::Index d0 = W.cols();
  if (deltaP.rows() != W.rows() || deltaP.cols() != d0 || P.rows() != d0 || P.cols() != d0 ||
      C1.rows() != d0 || C_star.rows() != d0 || (C2.cols() > 0 && C2.rows() != d0)) {
    throw ValidationError("kkt_residual: inconsistent shapes");
  }
  KktReport report;
  const Matrix BP = W * (C_star - C1) * (C1.transpose() * P);
  Matrix station = 2.0 * (((W + deltaP) * C1 - W * C_star) * C1.transpose() * P) + 2.0 * deltaP;

  if (C2.cols() > 0) {
    // M = (C1 C1^T P + I)^-1; Lambda / 2 = B P M C2 (C2^T P M C2)^-1.
    const Matrix K = C1 * C1.transpose() * P + Matrix::Identity(d0, d0);
    const Eigen::FullPivLU<Matrix> k_lu(K);
    const Matrix MC2 = k_lu.solve(C2);
    const Matrix G = C2.transpose() * P * MC2;
    const Eigen::FullPivLU<Matrix> g_lu(G);
    if (!g_lu.isInvertible() || g_lu.rcond() < 1e-14) {
      throw NumericalError("kkt_residual: constraint Gram matrix C2^T P M C2 is singular");
    }
    // Lambda = 2 (B P M C2) G^-1, via G^T Lambda^T = 2 (B P M C2)^T.
    const Eigen::FullPivLU<Matrix> gt_lu(G.transpose());
    report.multiplier = gt_lu.solve(Matrix((2.0 * BP * MC2).transpose())).transpose();
    station += report.multiplier * C2.transpose() * P;
    report.feasibility_residual = (deltaP * C2).norm();
  } else {
    report.multiplier = Matrix(W.rows(), 0);
  }
  report.stationarity_residual = station.norm();
  return report;
}

PositivityReport positivity_probe(const LayerWeights& layer, const ConceptMatrix& C1, const ConceptMatrix& C_star,
                                  const ConceptMatrix& C0, const Hyperparams& hp) {
  PositivityReport r;
  const Matrix& W = layer.W;
  const Eigen::Index d0 = W.cols();

  const Eigen::JacobiSVD<Matrix> w_svd(W);
  const Vector& ws = w_svd.singularValues();
  r.weights_full_rank = ws.size() > 0 && ws(0) > 0.0 &&
                        (ws.array() >= 1e-10 * ws(0)).count() == std::min(W.rows(), W.cols());

  if (C0.count() == 0) {
    r.retain_rank_deficient = true;
  } else {
    const Eigen::JacobiSVD<Matrix> c_svd(C0.embeddings * C0.embeddings.transpose());
    const Vector& cs = c_svd.singularValues();
    r.retain_rank_deficient = cs(0) == 0.0 || (cs.array() >= 1e-10 * cs(0)).count() < d0;
  }

  const Matrix c1c1 = C1.embeddings * C1.embeddings.transpose();
  const Matrix pull = C_star.embeddings * C1.embeddings.transpose() - c1c1;
  r.pull_nonzero = pull.norm() > 1e-12 * std::max(1.0, c1c1.norm());
  r.weights_nonzero = hp.alpha != 0.0 && hp.beta != 0.0 && hp.lambda_reg != 0.0;

  r.e0 = solve_uce(layer, C1, C_star, C0, hp).diagnostics.e0;
  r.scale = C0.count() > 0 ? (W * C0.embeddings).squaredNorm() : 0.0;
  r.positive = r.e0 > 1e-14 * r.scale;
  return r;
}

}  // namespace nse::oracle
