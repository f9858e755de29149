#include "cli.hpp"

#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>

#include <fmt/format.h>
#include "CLI11.hpp"
#include "json.hpp"

#include "nse/bench.hpp"
#include "nse/errors.hpp"
#include "nse/linalg.hpp"
#include "nse/log.hpp"
#include "nse/oracle.hpp"
#include "nse/pipeline.hpp"
#include "nse/tensor_store.hpp"
#include "nse/version.hpp"

namespace nse::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

void apply_overrides(Hyperparams& hp, const std::vector<std::string>& overrides) {
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ValidationError(fmt::format("--set expects key=value, got '{}'", kv));
    }
    hp.set(std::string_view(kv).substr(0, eq), std::string_view(kv).substr(eq + 1));
  }
  hp.validate();
}

void write_json(const json& doc, const fs::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError(fmt::format("cannot open '{}' for writing", path.string()));
  os << doc.dump(2) << '\n';
  if (!os) throw IoError(fmt::format("write to '{}' failed", path.string()));
}

json shift_report_json(const ShiftReport& r) {
  return {{"shifts", r.shifts}, {"mu", r.mu}, {"threshold", r.threshold}, {"kept_indices", r.kept_indices}};
}

json provenance_json(const RetainSet& R) {
  json out = json::array();
  for (const auto& p : R.provenance) {
    out.push_back({{"kind", p.kind == Provenance::Kind::original ? "original" : "augmented"},
                   {"parent", p.parent},
                   {"draw", p.draw}});
  }
  return out;
}

struct EditArgs {
  fs::path manifest;
  fs::path out;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::size_t threads = 1;
  std::size_t approx_null = 0;
  bool no_refine = false;
};

int cmd_edit(const EditArgs& a, std::ostream& out) {
  EraseTask task = load_task(a.manifest);
  if (a.seed) task.hp.seed = *a.seed;
  apply_overrides(task.hp, a.overrides);

  EditOptions opts;
  opts.refine = !a.no_refine;
  opts.threads = a.threads;
  if (a.approx_null > 0) opts.approx_null = a.approx_null;
  const EditResult result = run_edit(task, opts);

  fs::create_directories(a.out);
  json layers = json::array();
  for (const auto& l : result.layers) {
    const std::string id = sanitize_id(l.edited.layer_id);
    write_eigen(l.edited.W, a.out / fmt::format("W_{}.npy", id));
    write_eigen(l.delta.delta, a.out / fmt::format("delta_{}.npy", id));
    const Diagnostics& d = l.delta.diagnostics;
    layers.push_back({{"layer_id", l.edited.layer_id},
                      {"weights_file", fmt::format("W_{}.npy", id)},
                      {"delta_file", fmt::format("delta_{}.npy", id)},
                      {"e1", d.e1},
                      {"e0", d.e0},
                      {"invariant_residual", d.invariant_residual},
                      {"solve_wall_time_s", d.solve_wall_time.count()},
                      {"retain_columns", l.retain_columns},
                      {"null_dim", l.null_dim},
                      {"null_status", to_string(l.null_status)}});
  }
  json doc;
  doc["schema_version"] = 1;
  doc["seed"] = task.hp.seed;
  doc["refine"] = opts.refine;
  doc["layers"] = layers;
  doc["total_e1"] = result.total_e1();
  doc["max_e0"] = result.max_e0();
  doc["max_invariant_residual"] = result.max_invariant_residual();
  doc["wall_time_s"] = result.wall_time.count();
  write_json(doc, a.out / "diagnostics.json");

  out << fmt::format("total_e1={:.17g} max_e0={:.17g} max_invariant_residual={:.17g} wall_time_s={:.6f}\n",
                     result.total_e1(), result.max_e0(), result.max_invariant_residual(), result.wall_time.count());
  return kExitOk;
}

struct RefineArgs {
  fs::path manifest;
  fs::path out;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string layer;
};

int cmd_refine(const RefineArgs& a, std::ostream& out) {
  EraseTask task = load_task(a.manifest);
  if (a.seed) task.hp.seed = *a.seed;
  apply_overrides(task.hp, a.overrides);
  fs::create_directories(a.out);

  bool matched = false;
  for (std::size_t i = 0; i < task.layers.size(); ++i) {
    const std::string& layer_id = task.layers[i].layer_id;
    if (!a.layer.empty() && layer_id != a.layer) continue;
    matched = true;
    const RefineResult rr = refine_layer(task, i);
    const std::string id = sanitize_id(layer_id);
    write_eigen(rr.refined.concepts, a.out / fmt::format("R_refine_{}.npy", id));
    json doc;
    doc["schema_version"] = 1;
    doc["layer_id"] = layer_id;
    doc["seed"] = task.hp.seed;
    doc["original"] = shift_report_json(rr.original_report);
    doc["augmented"] = shift_report_json(rr.augmented_report);
    doc["augmented_total"] = rr.augmented_total;
    doc["refined_columns"] = rr.refined.size();
    doc["provenance"] = provenance_json(rr.refined);
    write_json(doc, a.out / fmt::format("shift_report_{}.json", id));
    out << fmt::format("layer={} original={} kept={} augmented={} kept_augmented={} refined={}\n", layer_id,
                       task.C0.count(), rr.filtered.size(), rr.augmented_total,
                       rr.augmented_report.kept_indices.size(), rr.refined.size());
  }
  if (!matched) throw ValidationError(fmt::format("no layer named '{}' in the manifest", a.layer));
  return kExitOk;
}

struct VerifyArgs {
  std::size_t trials = 100;
  std::size_t instances = 20;
  std::uint64_t seed = 2024;
  fs::path manifest;
};

int cmd_verify(const VerifyArgs& a, std::ostream& out) {
  std::vector<oracle::CheckResult> checks;
  if (a.manifest.empty()) {
    checks = oracle::run_verification_suite({a.trials, a.instances, a.seed});
  } else {
    checks = oracle::verify_task(load_task(a.manifest));
  }
  std::size_t passed = 0;
  for (const auto& c : checks) {
    out << fmt::format("{}  {:<62} {}\n", c.passed ? "PASS" : "FAIL", c.name, c.detail);
    passed += c.passed ? 1 : 0;
  }
  out << fmt::format("{}/{} checks passed\n", passed, checks.size());
  return passed == checks.size() ? kExitOk : kExitFailure;
}

struct BenchArgs {
  std::string mode = "timing";
  std::string profile = "sd-like";
  std::int64_t d0 = 0;
  std::vector<std::int64_t> layer_dims;
  std::int64_t d_v = 24;
  std::size_t n_erase = 100;
  std::size_t n_retain = 100;
  std::size_t n_invariants = 2;
  std::size_t repeats = 3;
  std::size_t threads = 1;
  std::vector<std::string> overrides;
  std::vector<std::size_t> retain_grid;
  std::vector<double> tol_grid;
  std::vector<std::size_t> approx_grid{0};
  std::uint64_t seed = 0;
  std::string format = "csv";
  fs::path out;
};

int cmd_bench(const BenchArgs& a, std::ostream& out, std::ostream& err) {
  bench::BenchReport report;
  if (a.mode == "timing") {
    bench::TimingConfig cfg;
    cfg.profile = a.profile;
    if (a.profile == "custom") {
      if (a.d0 < 1 || a.layer_dims.empty()) throw ValidationError("custom profile needs --d0 and --layer-dims");
      cfg.d0 = a.d0;
      cfg.layer_dims.assign(a.layer_dims.begin(), a.layer_dims.end());
    }
    cfg.n_erase = a.n_erase;
    cfg.n_retain = a.n_retain;
    cfg.n_invariants = a.n_invariants;
    cfg.repeats = a.repeats;
    cfg.threads = a.threads;
    cfg.seed = a.seed;
    apply_overrides(cfg.hp, a.overrides);
    report = bench::timing_bench(cfg);
  } else {
    bench::SweepConfig cfg;
    cfg.d0 = a.d0 > 0 ? a.d0 : 32;
    cfg.d_v = a.d_v;
    cfg.n_erase = static_cast<Eigen::Index>(a.n_erase);
    cfg.retain_grid = a.retain_grid;
    cfg.tol_grid = a.tol_grid;
    cfg.approx_grid = a.approx_grid;
    cfg.seed = a.seed;
    if (cfg.retain_grid.empty() || cfg.tol_grid.empty()) {
      throw ValidationError("sweep mode needs --retain-grid and --tol-grid");
    }
    report = bench::sweep_retain_rank(cfg);
  }

  const auto format = a.format == "json" ? bench::ReportFormat::json : bench::ReportFormat::csv;
  std::ostream* summary = &out;
  if (a.out.empty()) {
    bench::write_report(report, out, format);
    summary = &err;
  } else {
    bench::emit_report(report, a.out, format);
  }
  if (report.kind == "timing") {
    *summary << fmt::format("median_ms={:.3f} min_ms={:.3f} runs={} layers={}\n", bench::median_ms(report),
                            bench::min_ms(report), report.timing_rows.size(),
                            report.timing_rows.front().n_layers);
  } else {
    *summary << fmt::format("sweep_points={}\n", report.sweep_rows.size());
  }
  return kExitOk;
}

void print_matrix_info(std::ostream& out, const std::string& name, const Matrix& m, double tol) {
  const std::size_t rank = m.cols() > 0 ? rank_estimate(correlation(m), tol) : 0;
  out << fmt::format("{} shape={}x{} rank={} null_dim={} tol={:g}\n", name, m.rows(), m.cols(), rank,
                     static_cast<std::size_t>(m.rows()) - rank, tol);
}

int cmd_inspect(const fs::path& path, double tol, std::ostream& out) {
  if (!(tol > 0.0)) throw ValidationError("--tol must be positive");
  if (path.extension() == ".json") {
    const EraseTask task = load_task(path);
    out << fmt::format("d0={} layers={} erase={} retain={} invariants={}\n", task.d0(), task.layers.size(),
                       task.C1.count(), task.C0.count(), task.C2.count());
    for (const auto& l : task.layers) {
      out << fmt::format("layer {} shape={}x{}\n", l.layer_id, l.W.rows(), l.W.cols());
    }
    print_matrix_info(out, "erase", task.C1.embeddings, tol);
    print_matrix_info(out, "anchor", task.C_star.embeddings, tol);
    print_matrix_info(out, "retain", task.C0.embeddings, tol);
    print_matrix_info(out, "invariants", task.C2.embeddings, tol);
    return kExitOk;
  }
  const MatrixRecord rec = read_matrix(path);
  out << fmt::format("dtype={} ", dtype_descr(rec.dtype));
  print_matrix_info(out, path.filename().string(), rec.to_matrix(), tol);
  return kExitOk;
}

struct GenArgs {
  fs::path out;
  std::int64_t d0 = 16;
  std::vector<std::int64_t> layer_dims{12};
  std::int64_t n_erase = 2;
  std::int64_t n_retain = 4;
  std::int64_t n_invariants = 0;
  std::uint64_t seed = 0;
  std::string dtype = "f64";
  std::vector<std::string> overrides;
};

int cmd_gen(const GenArgs& a, std::ostream& out) {
  bench::SyntheticSpec spec;
  spec.d0 = a.d0;
  spec.layer_dims.assign(a.layer_dims.begin(), a.layer_dims.end());
  spec.n_erase = a.n_erase;
  spec.n_retain = a.n_retain;
  spec.n_invariants = a.n_invariants;
  spec.seed = a.seed;
  EraseTask task = bench::gen_synthetic_task(spec);
  apply_overrides(task.hp, a.overrides);
  out << save_task(task, a.out, a.dtype == "f32" ? DType::f32 : DType::f64).string() << '\n';
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Closed-form concept erasure for linear projection layers", "nse"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string log_level;
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off (default: $NSE_LOG, then warn)");
  app.set_version_flag("--version", std::string(kEngineVersion));

  EditArgs edit;
  auto* s_edit = app.add_subcommand("edit", "Edit every layer of a task and write W', deltas and diagnostics");
  s_edit->add_option("--manifest", edit.manifest, "Task manifest")->required()->check(CLI::ExistingFile);
  s_edit->add_option("--out", edit.out, "Output directory")->required();
  s_edit->add_option("--set", edit.overrides, "Hyperparameter override key=value (repeatable)");
  s_edit->add_option("--seed", edit.seed, "Override the manifest seed");
  s_edit->add_option("--threads", edit.threads, "Layer-level workers")->check(CLI::PositiveNumber);
  s_edit->add_option("--approx-null", edit.approx_null,
                     "When the retain set is full rank keep this many smallest directions instead of none");
  s_edit->add_flag("--no-refine", edit.no_refine, "Use the manifest retain set as is");

  RefineArgs refine;
  auto* s_refine = app.add_subcommand("refine", "Build the refined retain set of every layer");
  s_refine->add_option("--manifest", refine.manifest, "Task manifest")->required()->check(CLI::ExistingFile);
  s_refine->add_option("--out", refine.out, "Output directory")->required();
  s_refine->add_option("--set", refine.overrides, "Hyperparameter override key=value (repeatable)");
  s_refine->add_option("--seed", refine.seed, "Override the manifest seed");
  s_refine->add_option("--layer", refine.layer, "Only this layer id");

  VerifyArgs verify;
  auto* s_verify = app.add_subcommand("verify", "Run the seeded self-check suite, or certify a task");
  s_verify->add_option("--trials", verify.trials, "Positivity-probe instances");
  s_verify->add_option("--instances", verify.instances, "Oracle-agreement instances");
  s_verify->add_option("--seed", verify.seed, "Suite seed");
  s_verify->add_option("--manifest", verify.manifest, "Check this task instead of the built-in suite")
      ->check(CLI::ExistingFile);

  BenchArgs bench_args;
  auto* s_bench = app.add_subcommand("bench", "Timing runs and retain-rank sweeps on synthetic tasks");
  s_bench->add_option("--mode", bench_args.mode, "timing or sweep")
      ->check(CLI::IsMember({"timing", "sweep"}));
  s_bench->add_option("--profile", bench_args.profile, "Layer inventory for timing: sd-like or custom")
      ->check(CLI::IsMember({"sd-like", "custom"}));
  s_bench->add_option("--d0", bench_args.d0, "Embedding dimension (custom profile, sweep)");
  s_bench->add_option("--layer-dims", bench_args.layer_dims, "Output dimension of each layer (custom profile)")
      ->delimiter(',');
  s_bench->add_option("--dv", bench_args.d_v, "Layer output dimension (sweep)");
  s_bench->add_option("--erase", bench_args.n_erase, "Concepts to erase");
  s_bench->add_option("--retain", bench_args.n_retain, "Concepts to retain (timing)");
  s_bench->add_option("--invariants", bench_args.n_invariants, "Invariant columns (timing)");
  s_bench->add_option("--repeats", bench_args.repeats, "Timed runs")->check(CLI::PositiveNumber);
  s_bench->add_option("--threads", bench_args.threads, "Layer-level workers")->check(CLI::PositiveNumber);
  s_bench->add_option("--set", bench_args.overrides, "Hyperparameter override key=value (repeatable)");
  s_bench->add_option("--retain-grid", bench_args.retain_grid, "Retain counts (sweep)")->delimiter(',');
  s_bench->add_option("--tol-grid", bench_args.tol_grid, "SVD tolerances (sweep)")->delimiter(',');
  s_bench->add_option("--approx-grid", bench_args.approx_grid, "Fallback directions, 0 = none (sweep)")
      ->delimiter(',');
  s_bench->add_option("--seed", bench_args.seed, "Seed of the synthetic tasks")->required();
  s_bench->add_option("--format", bench_args.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  s_bench->add_option("--out", bench_args.out, "Report file (default: stdout)");

  fs::path inspect_path;
  double inspect_tol = 1e-4;
  auto* s_inspect = app.add_subcommand("inspect", "Shapes, ranks and null-space dimensions of a .npy or manifest");
  s_inspect->add_option("path", inspect_path, "Matrix file or manifest")->required()->check(CLI::ExistingFile);
  s_inspect->add_option("--tol", inspect_tol, "Cutoff on singular values of C C^T");

  GenArgs gen;
  auto* s_gen = app.add_subcommand("gen", "Write a synthetic task (matrices plus manifest)");
  s_gen->add_option("--out", gen.out, "Output directory")->required();
  s_gen->add_option("--d0", gen.d0, "Embedding dimension");
  s_gen->add_option("--layer-dims", gen.layer_dims, "Output dimension of each layer")->delimiter(',');
  s_gen->add_option("--erase", gen.n_erase, "Concepts to erase");
  s_gen->add_option("--retain", gen.n_retain, "Concepts to retain");
  s_gen->add_option("--invariants", gen.n_invariants, "Invariant columns");
  s_gen->add_option("--seed", gen.seed, "Generator seed")->required();
  s_gen->add_option("--dtype", gen.dtype, "f32 or f64")->check(CLI::IsMember({"f32", "f64"}));
  s_gen->add_option("--set", gen.overrides, "Hyperparameter override key=value (repeatable)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kEngineVersion << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  }

  try {
    init_logging(log_level);
    if (s_edit->parsed()) return cmd_edit(edit, out);
    if (s_refine->parsed()) return cmd_refine(refine, out);
    if (s_verify->parsed()) return cmd_verify(verify, out);
    if (s_bench->parsed()) return cmd_bench(bench_args, out, err);
    if (s_inspect->parsed()) return cmd_inspect(inspect_path, inspect_tol, out);
    if (s_gen->parsed()) return cmd_gen(gen, out);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace nse::cli
