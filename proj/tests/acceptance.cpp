// Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any failure.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/SVD>
#include <fmt/format.h>

#include "nse/bench.hpp"
#include "nse/linalg.hpp"
#include "nse/log.hpp"
#include "nse/oracle.hpp"
#include "nse/pipeline.hpp"
#include "nse/refinement.hpp"
#include "nse/solvers.hpp"
#include "test_support.hpp"

using namespace nse;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

struct Criterion {
  std::string name;
  double time_limit_s;  // 0 = none
  std::function<Outcome()> run;
};

double rel(const Matrix& a, const Matrix& b) { return (a - b).norm() / b.norm(); }

Outcome projector_laws() {
  std::size_t ok = 0;
  double worst_sym = 0.0, worst_idem = 0.0;
  const Eigen::Index dims[] = {8, 16, 32};
  for (std::size_t t = 0; t < 200; ++t) {
    std::mt19937_64 gen(1000 + t);
    const Eigen::Index d0 = dims[t % 3];
    const Eigen::Index n_r = 1 + static_cast<Eigen::Index>(gen() % static_cast<std::uint64_t>(d0 - 1));
    const Matrix C0 = nse::testing::gaussian(d0, n_r, gen);
    const Projector P = null_space_projector(C0, 1e-8);
    const double scale = std::max(1.0, P.P.norm());
    const double sym = symmetry_error(P.P) / scale;
    const double idem = idempotence_error(P.P) / scale;
    worst_sym = std::max(worst_sym, sym);
    worst_idem = std::max(worst_idem, idem);
    ok += (sym <= 1e-10 && idem <= 1e-8) ? 1 : 0;
  }
  return {ok == 200, fmt::format("{}/200 ok, worst symmetry {:.2e}, worst idempotence {:.2e}", ok, worst_sym,
                                 worst_idem)};
}

Outcome null_dim_identity() {
  std::size_t points = 0, ok = 0, generic = 0;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    bench::SweepConfig cfg;
    cfg.d0 = 32;
    cfg.d_v = 24;
    cfg.retain_grid = {0, 1, 3, 8, 16, 24, 31, 32, 40, 64};
    cfg.tol_grid = {1e-8, 1e-6, 1e-4};
    cfg.seed = seed;
    for (const auto& p : bench::sweep_retain_rank(cfg).sweep_rows) {
      // Rebuild the same retain matrix and count its rank independently.
      const EraseTask task = bench::gen_synthetic_task(cfg.d0, cfg.d_v, 1, cfg.n_erase,
                                                       static_cast<Eigen::Index>(p.n_retain), p.seed);
      std::size_t rank = 0;
      if (task.C0.count() > 0) {
        const Matrix G = task.C0.embeddings * task.C0.embeddings.transpose();
        Eigen::JacobiSVD<Matrix> svd(G);
        rank = static_cast<std::size_t>((svd.singularValues().array() >= p.svd_tol).count());
      }
      // Generic points have full numerical rank; a near-square draw can fall below tol.
      generic += rank == std::min<std::size_t>(p.n_retain, 32) ? 1 : 0;
      ++points;
      ok += p.null_dim == 32 - rank ? 1 : 0;
    }
  }
  return {ok == points, fmt::format("{}/{} sweep points with kept_dims = d0 - rank ({} generic, {} rank-deficient at "
                                    "their tol)",
                                    ok, points, generic, points - generic)};
}

Outcome exact_preservation() {
  std::size_t null_ok = 0, speed_ok = 0, uce_ok = 0;
  double worst_null = 0.0, worst_speed = 0.0, min_uce = 1e300;
  for (std::size_t t = 0; t < 100; ++t) {
    const EraseTask task = oracle::random_instance(10, 10, 2, 4, 2, 7000 + t);
    const auto& layer = task.layers[0];
    const double scale = (layer.W * task.C0.embeddings).squaredNorm();
    const Projector P = null_space_projector(task.C0, task.hp.svd_tol);
    const double e_null = solve_null_space(layer, task.C1, task.C_star, P, task.C0.embeddings).diagnostics.e0 / scale;
    const double e_speed =
        solve_speed(layer, task.C1, task.C_star, P, task.C2, task.hp, task.C0.embeddings).diagnostics.e0 / scale;
    const double e_uce = solve_uce(layer, task.C1, task.C_star, task.C0, task.hp).diagnostics.e0 / scale;
    worst_null = std::max(worst_null, e_null);
    worst_speed = std::max(worst_speed, e_speed);
    min_uce = std::min(min_uce, e_uce);
    null_ok += e_null < 1e-14 ? 1 : 0;
    speed_ok += e_speed < 1e-14 ? 1 : 0;
    uce_ok += e_uce > 0.0 ? 1 : 0;
  }
  return {null_ok == 100 && speed_ok == 100 && uce_ok == 100,
          fmt::format("null-space {}/100 (worst {:.1e}), constrained {}/100 (worst {:.1e}), UCE positive {}/100 "
                      "(smallest e0/||W C0||^2 {:.2e})",
                      null_ok, worst_null, speed_ok, worst_speed, uce_ok, min_uce)};
}

Outcome oracle_agreement() {
  double worst[4] = {0, 0, 0, 0};
  std::size_t ok = 0;
  for (std::size_t t = 0; t < 20; ++t) {
    const Eigen::Index d0 = 8 + static_cast<Eigen::Index>(t % 9);
    const EraseTask task = oracle::random_instance(d0, 6, 2, d0 / 3, 2, 9000 + t);
    const auto& layer = task.layers[0];
    const Matrix& W = layer.W;
    const Matrix &C1 = task.C1.embeddings, &Cs = task.C_star.embeddings, &C0 = task.C0.embeddings,
                 &C2 = task.C2.embeddings;
    const Projector P = null_space_projector(task.C0, task.hp.svd_tol);
    const double e[4] = {
        rel(solve_uce(layer, task.C1, task.C_star, task.C0, task.hp).delta,
            oracle::gd_minimize_uce(W, C1, Cs, C0, 1.0, 1.0, 1.0).delta),
        rel(solve_erase_only(layer, task.C1, task.C_star).delta,
            oracle::gd_minimize_uce(W, C1, Cs, Matrix(d0, 0), 1.0, 0.0, 1.0).delta),
        rel(solve_null_space(layer, task.C1, task.C_star, P).delta,
            oracle::pgd_minimize_constrained(W, C1, Cs, P.P, Matrix(d0, 0)).delta),
        rel(solve_speed(layer, task.C1, task.C_star, P, task.C2, task.hp).delta,
            oracle::pgd_minimize_constrained(W, C1, Cs, P.P, C2).delta)};
    bool all = true;
    for (int k = 0; k < 4; ++k) {
      worst[k] = std::max(worst[k], e[k]);
      all = all && e[k] < 1e-3;
    }
    ok += all ? 1 : 0;
  }
  return {ok == 20, fmt::format("{}/20 instances; worst rel. Frobenius UCE {:.1e}, erase-only {:.1e}, null-space "
                                "{:.1e}, constrained {:.1e}",
                                ok, worst[0], worst[1], worst[2], worst[3])};
}

Outcome kkt_certification() {
  std::size_t ok = 0;
  double worst = 0.0;
  for (std::size_t t = 0; t < 50; ++t) {
    const EraseTask task = oracle::random_instance(12, 8, 2, 4, 2, 11000 + t);
    const auto& layer = task.layers[0];
    const Projector P = null_space_projector(task.C0, task.hp.svd_tol);
    const EditDelta d = solve_speed(layer, task.C1, task.C_star, P, task.C2, task.hp);
    const auto rep = oracle::kkt_residual(d.delta, layer.W, task.C1.embeddings, task.C_star.embeddings, P.P,
                                          task.C2.embeddings);
    const double r = std::max(rep.stationarity_residual, rep.feasibility_residual) / layer.W.norm();
    worst = std::max(worst, r);
    ok += r < 1e-6 ? 1 : 0;
  }
  return {ok == 50, fmt::format("{}/50 instances, worst residual/||W|| {:.2e}", ok, worst)};
}

Outcome invariant_constraint() {
  std::size_t ok = 0, total = 0;
  double worst = 0.0;
  auto check = [&](const EraseTask& task) {
    const auto& layer = task.layers[0];
    const Projector P = null_space_projector(task.C0, task.hp.svd_tol);
    const EditDelta d = solve_speed(layer, task.C1, task.C_star, P, task.C2, task.hp);
    const double ratio = (d.delta * task.C2.embeddings).norm() / (layer.W.norm() * task.C2.embeddings.norm());
    worst = std::max(worst, ratio);
    ok += ratio < 1e-8 ? 1 : 0;
    ++total;
  };
  for (std::size_t t = 0; t < 50; ++t) check(oracle::random_instance(12, 8, 2, 4, 2, 13000 + t));
  for (std::size_t t = 0; t < 10; ++t) check(oracle::random_instance(96, 64, 8, 30, 2, 14000 + t));
  return {ok == total, fmt::format("{}/{} instances, worst ||dP C2||/(||W|| ||C2||) {:.2e}", ok, total, worst)};
}

Outcome dpa_direction_law() {
  std::size_t inside = 0, total = 0;
  double worst = 0.0;
  for (std::size_t t = 0; t < 10; ++t) {
    std::mt19937_64 gen(15000 + t);
    const Matrix W = nse::testing::gaussian(20, 32, gen);
    const Matrix R = nse::testing::unit_columns(32, 8, gen);
    const std::size_t r = 1 + t % 3;
    const Projector Pmin = least_variation_projector(W, r);
    const RetainSet A = dpa_augment(RetainSet::from_original(R), Pmin, 10, t);
    // Independent basis of the least-variation directions.
    Eigen::JacobiSVD<Matrix> svd(W, Eigen::ComputeThinV);
    const Matrix U = svd.matrixV().rightCols(static_cast<Eigen::Index>(r));
    for (std::size_t c = 0; c < A.size(); ++c) {
      const Vector p = A.concepts.col(static_cast<Eigen::Index>(c)) -
                       R.col(static_cast<Eigen::Index>(A.provenance[c].parent));
      const double off = (p - U * (U.transpose() * p)).norm();
      worst = std::max(worst, off);
      inside += off <= 1e-10 ? 1 : 0;
      ++total;
    }
  }

  Matrix W = Eigen::Vector3d(10.0, 1.0, 0.1).asDiagonal();
  const Projector Pmin = least_variation_projector(W, 1);
  const Matrix c0 = Matrix::Zero(3, 1);
  const RetainSet A = dpa_augment(RetainSet::from_original(c0), Pmin, 1000, 42);
  double mapped_aug = 0.0, mapped_raw = 0.0;
  for (std::size_t k = 0; k < 1000; ++k) {
    mapped_aug += (W * (A.concepts.col(static_cast<Eigen::Index>(k)) - c0.col(0))).norm();
    mapped_raw += (W * gaussian_draw(42, 0, k, 3)).norm();
  }
  mapped_aug /= 1000;
  mapped_raw /= 1000;
  return {inside == total && mapped_aug < mapped_raw,
          fmt::format("{}/{} perturbations in span (worst {:.1e}); mean ||W(c'-c)|| {:.4f} < mean ||W eps|| {:.4f}",
                      inside, total, worst, mapped_aug, mapped_raw)};
}

Outcome ipf_soundness() {
  std::size_t ok = 0;
  for (std::size_t t = 0; t < 50; ++t) {
    std::mt19937_64 gen(17000 + t);
    const Eigen::Index d0 = 8 + static_cast<Eigen::Index>(t % 12);
    LayerWeights layer{"L", nse::testing::gaussian(6, d0, gen)};
    ConceptMatrix C1{nse::testing::unit_columns(d0, 2, gen), ConceptRole::erase};
    ConceptMatrix Cs{nse::testing::unit_columns(d0, 2, gen), ConceptRole::anchor};
    const Matrix R = nse::testing::unit_columns(d0, 5 + static_cast<Eigen::Index>(t % 30), gen);
    const EditDelta d = solve_erase_only(layer, C1, Cs);
    const auto [kept, report] = ipf_filter(RetainSet::from_original(R), d, 1.0);

    std::vector<double> shifts;
    long double sum = 0.0L;
    for (Eigen::Index j = 0; j < R.cols(); ++j) {
      double s = 0.0;
      for (Eigen::Index i = 0; i < d.delta.rows(); ++i) {
        double dot = 0.0;
        for (Eigen::Index k = 0; k < d0; ++k) dot += d.delta(i, k) * R(k, j);
        s += dot * dot;
      }
      shifts.push_back(s);
      sum += s;
    }
    const double mu = static_cast<double>(sum / static_cast<long double>(shifts.size()));
    std::set<std::size_t> expected;
    for (std::size_t j = 0; j < shifts.size(); ++j) {
      if (shifts[j] > mu) expected.insert(j);
    }
    std::set<std::size_t> got;
    for (const auto& p : kept.provenance) got.insert(p.parent);
    ok += got == expected ? 1 : 0;
  }
  return {ok == 50, fmt::format("{}/50 retain sets with identical membership", ok)};
}

Outcome dilemma_sweep() {
  const std::vector<std::size_t> approx = {1, 2, 4, 8, 16, 24};
  std::vector<std::vector<double>> e0(approx.size());
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    bench::SweepConfig cfg;
    cfg.d0 = 32;
    cfg.d_v = 24;
    cfg.retain_grid = {48};
    cfg.tol_grid = {1e-8};
    cfg.approx_grid = approx;
    cfg.seed = 500 + seed;
    const auto rows = bench::sweep_retain_rank(cfg).sweep_rows;
    for (std::size_t i = 0; i < rows.size(); ++i) e0[i].push_back(rows[i].e0 / rows[i].retain_scale);
  }
  std::vector<double> medians;
  for (auto& v : e0) {
    std::sort(v.begin(), v.end());
    medians.push_back(0.5 * (v[4] + v[5]));
  }
  bool monotone = true;
  for (std::size_t i = 1; i < medians.size(); ++i) monotone = monotone && medians[i] >= medians[i - 1];
  std::string list;
  for (std::size_t i = 0; i < medians.size(); ++i) list += fmt::format("{}{}:{:.2e}", i ? " " : "", approx[i], medians[i]);
  return {monotone, fmt::format("median e0/||W C0||^2 by kept directions (N_R=48, d0=32): {}", list)};
}

Outcome runtime_target() {
  bench::TimingConfig cfg;
  cfg.profile = "sd-like";
  cfg.n_erase = 100;
  cfg.n_retain = 100;
  cfg.hp.n_aug = 10;
  cfg.hp.r = 1;
  cfg.repeats = 3;
  cfg.threads = 1;
  cfg.seed = 2024;
  const auto report = bench::timing_bench(cfg);
  const double median = bench::median_ms(report) / 1000.0;
  return {median < 30.0, fmt::format("sd-like 16 layers, N_E=N_R=100, N_A=10, r=1, 1 thread: median {:.2f} s of 3 "
                                     "(min {:.2f} s; gate 30 s, reference point 5 s)",
                                     median, bench::min_ms(report) / 1000.0)};
}

Outcome determinism() {
  bench::SyntheticSpec spec;
  spec.d0 = 96;
  spec.layer_dims = {40, 40, 80, 80, 160, 160, 40, 80, 160, 40, 80, 160};
  spec.n_erase = 12;
  spec.n_retain = 12;
  spec.n_invariants = 2;
  spec.seed = 77;
  const EraseTask task = bench::gen_synthetic_task(spec);
  EditOptions one, eight;
  eight.threads = 8;
  const EditResult a = run_edit(task, one);
  const EditResult b = run_edit(task, one);
  const EditResult c = run_edit(task, eight);
  std::size_t same = 0;
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    const bool ok = nse::testing::bit_identical(a.layers[i].delta.delta, b.layers[i].delta.delta) &&
                    nse::testing::bit_identical(a.layers[i].delta.delta, c.layers[i].delta.delta);
    same += ok ? 1 : 0;
  }
  return {same == a.layers.size(),
          fmt::format("{}/{} layers bit-identical across two runs and across 1 vs 8 threads", same, a.layers.size())};
}

}  // namespace

int main() {
  init_logging("error");
  const std::vector<Criterion> criteria = {
      {"projector laws", 10.0, projector_laws},
      {"null dimension identity", 5.0, null_dim_identity},
      {"exact preservation", 30.0, exact_preservation},
      {"oracle agreement", 120.0, oracle_agreement},
      {"KKT certification", 30.0, kkt_certification},
      {"invariant hard constraint", 0.0, invariant_constraint},
      {"augmentation direction law", 5.0, dpa_direction_law},
      {"influence filter soundness", 0.0, ipf_soundness},
      {"dilemma sweep monotonicity", 0.0, dilemma_sweep},
      {"runtime target", 0.0, runtime_target},
      {"determinism", 0.0, determinism},
  };
  std::size_t failed = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, fmt::format("threw: {}", e.what())};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = c.time_limit_s == 0.0 || secs < c.time_limit_s;
    const bool passed = o.passed && in_time;
    std::string timing = fmt::format("{:.2f} s", secs);
    if (c.time_limit_s > 0.0) timing += fmt::format(" (limit {:.0f} s)", c.time_limit_s);
    std::printf("%s  %-28s %s; %s\n", passed ? "PASS" : "FAIL", c.name.c_str(), o.detail.c_str(), timing.c_str());
    std::fflush(stdout);
    failed += passed ? 0 : 1;
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
