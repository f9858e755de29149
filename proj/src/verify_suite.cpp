#include <cmath>
#include <random>

#include <fmt/format.h>

#include "nse/errors.hpp"
#include "nse/linalg.hpp"
#include "nse/oracle.hpp"
#include "nse/solvers.hpp"

namespace nse::oracle {

namespace {

Matrix unit_columns(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& gen) {
  std::normal_distribution<double> normal;
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal(gen);
    m.col(j).normalize();
  }
  return m;
}

double rel_diff(const Matrix& a, const Matrix& b) {
  const double denom = std::max(b.norm(), 1e-300);
  return (a - b).norm() / denom;
}

struct Tally {
  std::size_t total = 0;
  std::size_t failed = 0;
  double worst = 0.0;
  std::string first_failure;

  void record(bool ok, double value, const std::string& what) {
    ++total;
    worst = std::max(worst, value);
    if (!ok) {
      if (failed == 0) first_failure = what;
      ++failed;
    }
  }
  CheckResult result(std::string name, const std::string& metric) const {
    CheckResult r{std::move(name), failed == 0, {}};
    r.detail = fmt::format("{}/{} ok", total - failed, total);
    if (!metric.empty()) r.detail += fmt::format(", worst {} {:.3e}", metric, worst);
    if (failed > 0) r.detail += "; first failure: " + first_failure;
    return r;
  }
};

const std::size_t kProjectorDims[] = {8, 16, 32};

}  // namespace

EraseTask random_instance(Eigen::Index d0, Eigen::Index d_v, Eigen::Index n_erase, Eigen::Index n_retain,
                          Eigen::Index n_invariant, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal;
  EraseTask task;
  Matrix W(d_v, d0);
  for (Eigen::Index j = 0; j < d0; ++j)
    for (Eigen::Index i = 0; i < d_v; ++i) W(i, j) = normal(gen);
  task.layers.push_back({"layer_0", std::move(W)});
  task.C1 = {unit_columns(d0, n_erase, gen), ConceptRole::erase};
  task.C_star = {unit_columns(d0, n_erase, gen), ConceptRole::anchor};
  task.C0 = {unit_columns(d0, n_retain, gen), ConceptRole::retain};
  task.C2 = {unit_columns(d0, n_invariant, gen), ConceptRole::invariant};
  task.hp.svd_tol = 1e-8;
  task.hp.seed = seed;
  return task;
}

std::vector<CheckResult> run_verification_suite(const SuiteOptions& options) {
  std::vector<CheckResult> results;
  std::uint64_t seed = options.seed;

  {
    Tally laws, identity;
    for (std::size_t t = 0; t < 60; ++t) {
      const auto d0 = static_cast<Eigen::Index>(kProjectorDims[t % 3]);
      std::mt19937_64 gen(seed + t);
      const Eigen::Index n_r = 1 + static_cast<Eigen::Index>(gen() % static_cast<std::uint64_t>(d0 - 1));
      const Matrix C0 = unit_columns(d0, n_r, gen);
      const Projector P = null_space_projector(C0, 1e-8);
      const double scale = std::max(1.0, P.P.norm());
      const double sym = symmetry_error(P.P) / scale;
      const double idem = idempotence_error(P.P) / scale;
      const double trace_err = std::abs(P.P.trace() - static_cast<double>(P.kept_dims));
      const double annihilation = (P.P * C0).norm() / C0.norm();
      const bool ok = sym <= 1e-10 && idem <= 1e-8 && trace_err <= 1e-6 && annihilation < 1e-8;
      laws.record(ok, std::max({sym, idem, annihilation}), fmt::format("trial {} (d0={}, N_R={})", t, d0, n_r));
      const std::size_t rank = rank_estimate(correlation(C0), 1e-8);
      const bool id_ok = P.kept_dims + rank == static_cast<std::size_t>(d0);
      identity.record(id_ok, 0.0, fmt::format("trial {}: kept={} rank={} d0={}", t, P.kept_dims, rank, d0));
    }
    results.push_back(laws.result("projector laws (symmetry, idempotence, trace, annihilation)", "error"));
    results.push_back(identity.result("null dimension = d0 - rank", ""));
  }

  {
    Tally uce, erase, null_space, speed;
    OracleConfig cfg;
    for (std::size_t t = 0; t < options.instances; ++t) {
      const std::uint64_t s = seed + 1000 + t;
      const Eigen::Index d0 = 8 + static_cast<Eigen::Index>(t % 9);
      const EraseTask task = random_instance(d0, 6, 2, d0 / 3, 2, s);
      const auto& layer = task.layers[0];
      const Matrix& W = layer.W;
      const std::string tag = fmt::format("seed {} d0={}", s, d0);

      const Matrix d_uce = solve_uce(layer, task.C1, task.C_star, task.C0, task.hp).delta;
      const Matrix o_uce = gd_minimize_uce(W, task.C1.embeddings, task.C_star.embeddings, task.C0.embeddings,
                                           task.hp.alpha, task.hp.beta, task.hp.lambda_reg, cfg)
                               .delta;
      const double e_uce = rel_diff(d_uce, o_uce);
      uce.record(e_uce < 1e-3, e_uce, tag);

      const Matrix d_erase = solve_erase_only(layer, task.C1, task.C_star).delta;
      const Matrix o_erase =
          gd_minimize_uce(W, task.C1.embeddings, task.C_star.embeddings, Matrix(d0, 0), 1.0, 0.0, 1.0, cfg).delta;
      const double e_erase = rel_diff(d_erase, o_erase);
      erase.record(e_erase < 1e-3, e_erase, tag);

      const Projector P = null_space_projector(task.C0, task.hp.svd_tol);
      const Matrix d_null = solve_null_space(layer, task.C1, task.C_star, P).delta;
      const Matrix o_null =
          pgd_minimize_constrained(W, task.C1.embeddings, task.C_star.embeddings, P.P, Matrix(d0, 0), cfg).delta;
      const double e_null = rel_diff(d_null, o_null);
      null_space.record(e_null < 1e-3, e_null, tag);

      const Matrix d_speed = solve_speed(layer, task.C1, task.C_star, P, task.C2, task.hp).delta;
      const Matrix o_speed =
          pgd_minimize_constrained(W, task.C1.embeddings, task.C_star.embeddings, P.P, task.C2.embeddings, cfg)
              .delta;
      const double e_speed = rel_diff(d_speed, o_speed);
      speed.record(e_speed < 1e-3, e_speed, tag);
    }
    results.push_back(uce.result("oracle agreement: UCE closed form vs gradient descent", "rel. Frobenius"));
    results.push_back(erase.result("oracle agreement: erase-only vs gradient descent", "rel. Frobenius"));
    results.push_back(null_space.result("oracle agreement: null-space vs projected GD", "rel. Frobenius"));
    results.push_back(speed.result("oracle agreement: constrained vs projected GD", "rel. Frobenius"));
  }

  {
    Tally kkt, feasible;
    for (std::size_t t = 0; t < 50; ++t) {
      const std::uint64_t s = seed + 3000 + t;
      const EraseTask task = random_instance(12, 8, 2, 4, 2, s);
      const auto& layer = task.layers[0];
      const Projector P = null_space_projector(task.C0, task.hp.svd_tol);
      const EditDelta d = solve_speed(layer, task.C1, task.C_star, P, task.C2, task.hp);
      const KktReport rep =
          kkt_residual(d.delta, layer.W, task.C1.embeddings, task.C_star.embeddings, P.P, task.C2.embeddings);
      const double wn = layer.W.norm();
      const double worst = std::max(rep.stationarity_residual, rep.feasibility_residual) / wn;
      kkt.record(worst < 1e-6, worst, fmt::format("seed {}", s));
      const double bound = 1e-8 * wn * task.C2.embeddings.norm();
      feasible.record(d.diagnostics.invariant_residual < bound, d.diagnostics.invariant_residual / bound,
                      fmt::format("seed {}", s));
    }
    results.push_back(kkt.result("KKT certificate of the constrained solution", "residual/||W||"));
    results.push_back(feasible.result("invariant equality constraint", "residual/bound"));
  }

  {
    Tally positive, contrast;
    for (std::size_t t = 0; t < options.trials; ++t) {
      const std::uint64_t s = seed + 5000 + t;
      const EraseTask task = random_instance(10, 10, 2, 4, 0, s);
      const auto& layer = task.layers[0];
      const PositivityReport rep = positivity_probe(layer, task.C1, task.C_star, task.C0, task.hp);
      positive.record(!rep.assumptions_met() || rep.positive, rep.e0 / rep.scale, fmt::format("seed {}", s));
      const Projector P = null_space_projector(task.C0, task.hp.svd_tol);
      const EditDelta d = solve_null_space(layer, task.C1, task.C_star, P, task.C0.embeddings);
      const double ratio = d.diagnostics.e0 / rep.scale;
      contrast.record(ratio < 1e-14, ratio, fmt::format("seed {}", s));
    }
    results.push_back(positive.result("UCE preservation error strictly positive", "e0/||W C0||^2 (max)"));
    results.push_back(contrast.result("null-space preservation error vanishes", "e0/||W C0||^2"));
  }
  return results;
}

std::vector<CheckResult> verify_task(const EraseTask& task) {
  task.validate();
  std::vector<CheckResult> results;
  const Projector P = null_space_projector(task.C0, task.hp.svd_tol);
  {
    const double scale = std::max(1.0, P.P.norm());
    const double sym = symmetry_error(P.P) / scale;
    const double idem = idempotence_error(P.P) / scale;
    results.push_back({"task projector laws", sym <= 1e-10 && idem <= 1e-8,
                       fmt::format("symmetry {:.3e}, idempotence {:.3e}, null dim {}", sym, idem, P.kept_dims)});
  }
  for (const auto& layer : task.layers) {
    const EditDelta d = solve_speed(layer, task.C1, task.C_star, P, task.C2, task.hp, task.C0.embeddings);
    const double wn = layer.W.norm();
    if (task.C2.count() == 0 || task.hp.lambda_inv == 0.0) {
      try {
        const KktReport rep = kkt_residual(d.delta, layer.W, task.C1.embeddings, task.C_star.embeddings, P.P,
                                           task.C2.embeddings);
        const double worst = std::max(rep.stationarity_residual, rep.feasibility_residual) / wn;
        results.push_back({fmt::format("layer '{}' KKT", layer.layer_id), worst < 1e-6,
                           fmt::format("residual/||W|| {:.3e}", worst)});
      } catch (const NumericalError& e) {
        results.push_back({fmt::format("layer '{}' KKT", layer.layer_id), false, e.what()});
      }
    }
    if (P.status == NullSpaceStatus::exact && task.C0.count() > 0) {
      const double ratio = d.diagnostics.e0 / (layer.W * task.C0.embeddings).squaredNorm();
      results.push_back({fmt::format("layer '{}' preservation", layer.layer_id), ratio < 1e-14,
                         fmt::format("e0/||W C0||^2 {:.3e}", ratio)});
    }
  }
  return results;
}

}  // namespace nse::oracle
