#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "nse/types.hpp"

namespace nse::bench {

struct SyntheticSpec {
  Eigen::Index d0 = 8;
  std::vector<Eigen::Index> layer_dims;  // d_v of each layer
  Eigen::Index n_erase = 1;
  Eigen::Index n_retain = 0;
  Eigen::Index n_invariants = 0;
  std::uint64_t seed = 0;
};

/// Gaussian weights (entries N(0, 1/d0)) and unit-norm Gaussian concept
/// columns; anchors are drawn independently of targets. Deterministic in seed.
EraseTask gen_synthetic_task(const SyntheticSpec& spec);
EraseTask gen_synthetic_task(Eigen::Index d0, Eigen::Index d_v, std::size_t n_layers, Eigen::Index n_erase,
                             Eigen::Index n_retain, std::uint64_t seed);

/// Stand-in for a Stable Diffusion 1.x cross-attention value inventory:
/// 16 layers, d0 = 768, d_v = 6 x 320, 6 x 640, 4 x 1280.
std::vector<Eigen::Index> sd_like_layer_dims();
inline constexpr Eigen::Index kSdLikeD0 = 768;

struct SweepPoint {
  std::size_t n_retain = 0;
  double svd_tol = 0.0;
  std::size_t approx_dirs = 0;  // directions kept by the full-rank fallback; 0 in the exact regime
  std::size_t null_dim = 0;
  double e0 = 0.0;
  double e1 = 0.0;
  double retain_scale = 0.0;  // ||W C0||^2
  double runtime_ms = 0.0;
  std::uint64_t seed = 0;
};

struct TimingRow {
  std::string profile;
  std::size_t n_layers = 0;
  std::size_t d0 = 0;
  std::size_t n_erase = 0;
  std::size_t n_retain = 0;
  std::size_t n_aug = 0;
  std::size_t r = 0;
  std::size_t repeat = 0;
  std::size_t threads = 1;
  double wall_ms = 0.0;
  double checksum = 0.0;  // sum of squared delta entries over layers
};

struct BenchReport {
  std::string kind;  // "sweep" or "timing"
  std::string machine;
  std::string engine_version;
  std::string profile;  // layer inventory description
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::vector<SweepPoint> sweep_rows;
  std::vector<TimingRow> timing_rows;

  bool empty() const { return sweep_rows.empty() && timing_rows.empty(); }
};

struct SweepConfig {
  Eigen::Index d0 = 32;
  Eigen::Index d_v = 24;
  Eigen::Index n_erase = 2;
  std::vector<std::size_t> retain_grid;
  std::vector<double> tol_grid;
  std::vector<std::size_t> approx_grid{0};  // 0 = no fallback
  std::uint64_t seed = 0;
};

/// For every (n_retain, tol, approx) solve the null-space edit on a synthetic
/// task (one task per n_retain) and record preservation/erasure errors.
BenchReport sweep_retain_rank(const SweepConfig& config);

struct TimingConfig {
  std::string profile = "sd-like";  // "sd-like" or "custom"
  Eigen::Index d0 = kSdLikeD0;      // custom only
  std::vector<Eigen::Index> layer_dims;  // custom only
  std::size_t n_erase = 100;
  std::size_t n_retain = 100;
  std::size_t n_invariants = 2;
  Hyperparams hp;
  std::uint64_t seed = 0;
  std::size_t repeats = 3;
  std::size_t threads = 1;
};

/// Wall time of the full edit pipeline (erase-only update, refinement,
/// projector, constrained solve, apply) over all layers; task generation excluded.
BenchReport timing_bench(const TimingConfig& config);

double min_ms(const BenchReport& report);
double median_ms(const BenchReport& report);

std::string machine_descriptor();

enum class ReportFormat { csv, json };

void write_report(const BenchReport& report, std::ostream& os, ReportFormat format);
void emit_report(const BenchReport& report, const std::filesystem::path& path, ReportFormat format);
BenchReport read_report_csv(const std::filesystem::path& path);
BenchReport read_report_json(const std::filesystem::path& path);

}  // namespace nse::bench
