#include "nse/bench.hpp"

#include <sys/utsname.h>

#include <algorithm>
#include <chrono>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <fmt/ranges.h>
#include "json.hpp"

#include "nse/errors.hpp"
#include "nse/linalg.hpp"
#include "nse/pipeline.hpp"
#include "nse/solvers.hpp"
#include "nse/version.hpp"

namespace nse::bench {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

Matrix unit_gaussian_columns(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& gen) {
  std::normal_distribution<double> normal;
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal(gen);
    m.col(j).normalize();
  }
  return m;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(salt), static_cast<std::uint32_t>(salt >> 32)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[1]) << 32) | words[0];
}

}  // namespace

EraseTask gen_synthetic_task(const SyntheticSpec& spec) {
  if (spec.d0 < 1 || spec.n_erase < 1 || spec.layer_dims.empty() || spec.n_retain < 0 || spec.n_invariants < 0) {
    throw ValidationError("synthetic task needs d0, n_erase and at least one layer >= 1");
  }
  std::mt19937_64 gen(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(spec.d0)));
  EraseTask task;
  for (std::size_t l = 0; l < spec.layer_dims.size(); ++l) {
    const Eigen::Index d_v = spec.layer_dims[l];
    if (d_v < 1) throw ValidationError("layer output dimension must be >= 1");
    Matrix W(d_v, spec.d0);
    for (Eigen::Index j = 0; j < spec.d0; ++j)
      for (Eigen::Index i = 0; i < d_v; ++i) W(i, j) = normal(gen);
    task.layers.push_back({fmt::format("layer_{}", l), std::move(W)});
  }
  task.C1 = {unit_gaussian_columns(spec.d0, spec.n_erase, gen), ConceptRole::erase};
  task.C_star = {unit_gaussian_columns(spec.d0, spec.n_erase, gen), ConceptRole::anchor};
  task.C0 = {unit_gaussian_columns(spec.d0, spec.n_retain, gen), ConceptRole::retain};
  task.C2 = {unit_gaussian_columns(spec.d0, spec.n_invariants, gen), ConceptRole::invariant};
  task.hp.seed = spec.seed;
  task.validate();
  return task;
}

EraseTask gen_synthetic_task(Eigen::Index d0, Eigen::Index d_v, std::size_t n_layers, Eigen::Index n_erase,
                             Eigen::Index n_retain, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.d0 = d0;
  spec.layer_dims.assign(n_layers, d_v);
  spec.n_erase = n_erase;
  spec.n_retain = n_retain;
  spec.seed = seed;
  return gen_synthetic_task(spec);
}

std::vector<Eigen::Index> sd_like_layer_dims() {
  std::vector<Eigen::Index> dims;
  dims.insert(dims.end(), 6, 320);
  dims.insert(dims.end(), 6, 640);
  dims.insert(dims.end(), 4, 1280);
  return dims;
}

BenchReport sweep_retain_rank(const SweepConfig& config) {
  if (config.retain_grid.empty() || config.tol_grid.empty() || config.approx_grid.empty()) {
    throw ValidationError("sweep grids must be non-empty");
  }
  BenchReport report;
  report.kind = "sweep";
  report.machine = machine_descriptor();
  report.engine_version = kEngineVersion;
  report.profile = fmt::format("d0={} d_v={} n_erase={}", config.d0, config.d_v, config.n_erase);
  report.seed = config.seed;

  for (std::size_t n_retain : config.retain_grid) {
    const std::uint64_t seed = mix_seed(config.seed, n_retain);
    const EraseTask task =
        gen_synthetic_task(config.d0, config.d_v, 1, config.n_erase, static_cast<Eigen::Index>(n_retain), seed);
    const LayerWeights& layer = task.layers.front();
    const double scale = (layer.W * task.C0.embeddings).squaredNorm();
    for (double tol : config.tol_grid) {
      for (std::size_t approx : config.approx_grid) {
        const auto start = std::chrono::steady_clock::now();
        const Projector P =
            null_space_projector(task.C0, tol, approx > 0 ? std::optional<std::size_t>(approx) : std::nullopt);
        const EditDelta d = solve_null_space(layer, task.C1, task.C_star, P, task.C0.embeddings);
        const std::chrono::duration<double, std::milli> elapsed = std::chrono::steady_clock::now() - start;

        SweepPoint pt;
        pt.n_retain = n_retain;
        pt.svd_tol = tol;
        pt.approx_dirs = P.status == NullSpaceStatus::approximate ? P.kept_dims : 0;
        pt.null_dim = P.kept_dims;
        pt.e0 = d.diagnostics.e0;
        pt.e1 = d.diagnostics.e1;
        pt.retain_scale = scale;
        pt.runtime_ms = elapsed.count();
        pt.seed = seed;
        report.sweep_rows.push_back(pt);
      }
    }
  }
  return report;
}

BenchReport timing_bench(const TimingConfig& config) {
  SyntheticSpec spec;
  std::string inventory;
  if (config.profile == "sd-like") {
    spec.d0 = kSdLikeD0;
    spec.layer_dims = sd_like_layer_dims();
    inventory = "sd-like: 16 layers, d0=768, d_v=6x320+6x640+4x1280";
  } else if (config.profile == "custom") {
    spec.d0 = config.d0;
    spec.layer_dims = config.layer_dims;
    inventory = fmt::format("custom: {} layers, d0={}, d_v=[{}]", spec.layer_dims.size(), spec.d0,
                            fmt::join(spec.layer_dims, ","));
  } else {
    throw ValidationError(fmt::format("unknown bench profile '{}' (expected sd-like or custom)", config.profile));
  }
  if (config.repeats < 1) throw ValidationError("repeats must be >= 1");
  spec.n_erase = static_cast<Eigen::Index>(config.n_erase);
  spec.n_retain = static_cast<Eigen::Index>(config.n_retain);
  spec.n_invariants = static_cast<Eigen::Index>(config.n_invariants);
  spec.seed = config.seed;

  EraseTask task = gen_synthetic_task(spec);
  task.hp = config.hp;
  task.hp.seed = config.seed;

  BenchReport report;
  report.kind = "timing";
  report.machine = machine_descriptor();
  report.engine_version = kEngineVersion;
  report.profile = inventory;
  report.seed = config.seed;
  report.threads = config.threads;

  EditOptions options;
  options.threads = config.threads;
  for (std::size_t rep = 0; rep < config.repeats; ++rep) {
    const auto start = std::chrono::steady_clock::now();
    const EditResult result = run_edit(task, options);
    const std::chrono::duration<double, std::milli> elapsed = std::chrono::steady_clock::now() - start;

    TimingRow row;
    row.profile = config.profile;
    row.n_layers = task.layers.size();
    row.d0 = static_cast<std::size_t>(spec.d0);
    row.n_erase = config.n_erase;
    row.n_retain = config.n_retain;
    row.n_aug = task.hp.n_aug;
    row.r = task.hp.r;
    row.repeat = rep;
    row.threads = config.threads;
    row.wall_ms = elapsed.count();
    for (const auto& l : result.layers) row.checksum += l.delta.delta.squaredNorm();
    report.timing_rows.push_back(row);
  }
  return report;
}

double min_ms(const BenchReport& report) {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& r : report.timing_rows) m = std::min(m, r.wall_ms);
  return m;
}

double median_ms(const BenchReport& report) {
  std::vector<double> v;
  for (const auto& r : report.timing_rows) v.push_back(r.wall_ms);
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string machine_descriptor() {
  std::string cpu = "unknown cpu";
  std::ifstream info("/proc/cpuinfo");
  for (std::string line; std::getline(info, line);) {
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) cpu = line.substr(line.find_first_not_of(' ', colon + 1));
      break;
    }
  }
  utsname uts{};
  std::string os = "unknown os";
  if (uname(&uts) == 0) os = fmt::format("{} {} {}", uts.sysname, uts.release, uts.machine);
  return fmt::format("{}; {} hardware threads; {}", cpu, std::thread::hardware_concurrency(), os);
}

namespace {

constexpr const char* kSweepHeader = "n_retain,svd_tol,approx_dirs,null_dim,e0,e1,retain_scale,runtime_ms,seed";
constexpr const char* kTimingHeader = "profile,n_layers,d0,n_erase,n_retain,n_aug,r,repeat,threads,wall_ms,checksum";

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  for (std::string cell; std::getline(ss, cell, ',');) out.push_back(cell);
  return out;
}

json to_json(const SweepPoint& p) {
  return {{"n_retain", p.n_retain}, {"svd_tol", p.svd_tol}, {"approx_dirs", p.approx_dirs},
          {"null_dim", p.null_dim}, {"e0", p.e0},           {"e1", p.e1},
          {"retain_scale", p.retain_scale}, {"runtime_ms", p.runtime_ms}, {"seed", p.seed}};
}

json to_json(const TimingRow& r) {
  return {{"profile", r.profile}, {"n_layers", r.n_layers}, {"d0", r.d0},           {"n_erase", r.n_erase},
          {"n_retain", r.n_retain}, {"n_aug", r.n_aug},     {"r", r.r},             {"repeat", r.repeat},
          {"threads", r.threads}, {"wall_ms", r.wall_ms},   {"checksum", r.checksum}};
}

}  // namespace

void write_report(const BenchReport& report, std::ostream& os, ReportFormat format) {
  if (report.empty()) throw ValidationError("refusing to write an empty report");

  if (format == ReportFormat::csv) {
    if (!report.sweep_rows.empty()) {
      os << kSweepHeader << '\n';
      for (const auto& p : report.sweep_rows) {
        os << fmt::format("{},{:.17g},{},{},{:.17g},{:.17g},{:.17g},{:.17g},{}\n", p.n_retain, p.svd_tol,
                          p.approx_dirs, p.null_dim, p.e0, p.e1, p.retain_scale, p.runtime_ms, p.seed);
      }
    } else {
      os << kTimingHeader << '\n';
      for (const auto& r : report.timing_rows) {
        os << fmt::format("{},{},{},{},{},{},{},{},{},{:.17g},{:.17g}\n", r.profile, r.n_layers, r.d0, r.n_erase,
                          r.n_retain, r.n_aug, r.r, r.repeat, r.threads, r.wall_ms, r.checksum);
      }
    }
  } else {
    json doc;
    doc["schema_version"] = 1;
    doc["kind"] = report.kind;
    doc["machine"] = report.machine;
    doc["engine_version"] = report.engine_version;
    doc["profile"] = report.profile;
    doc["seed"] = report.seed;
    doc["threads"] = report.threads;
    json rows = json::array();
    for (const auto& p : report.sweep_rows) rows.push_back(to_json(p));
    for (const auto& r : report.timing_rows) rows.push_back(to_json(r));
    doc["rows"] = rows;
    if (!report.timing_rows.empty()) {
      doc["min_ms"] = min_ms(report);
      doc["median_ms"] = median_ms(report);
    }
    os << doc.dump(2) << '\n';
  }
}

void emit_report(const BenchReport& report, const fs::path& path, ReportFormat format) {
  if (report.empty()) throw ValidationError("refusing to write an empty report");
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError(fmt::format("cannot open '{}' for writing", path.string()));
  write_report(report, os, format);
  if (!os) throw IoError(fmt::format("write to '{}' failed", path.string()));
}

BenchReport read_report_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot open '{}'", path.string()));
  std::string header;
  std::getline(in, header);
  BenchReport report;
  const bool sweep = header == kSweepHeader;
  if (!sweep && header != kTimingHeader) throw ValidationError(fmt::format("unrecognised report header '{}'", header));
  report.kind = sweep ? "sweep" : "timing";
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    const auto c = split_csv(line);
    if (c.size() != (sweep ? 9u : 11u)) throw ValidationError(fmt::format("malformed report row '{}'", line));
    if (sweep) {
      report.sweep_rows.push_back({std::stoull(c[0]), std::stod(c[1]), std::stoull(c[2]), std::stoull(c[3]),
                                   std::stod(c[4]), std::stod(c[5]), std::stod(c[6]), std::stod(c[7]),
                                   std::stoull(c[8])});
    } else {
      report.timing_rows.push_back({c[0], std::stoull(c[1]), std::stoull(c[2]), std::stoull(c[3]),
                                    std::stoull(c[4]), std::stoull(c[5]), std::stoull(c[6]), std::stoull(c[7]),
                                    std::stoull(c[8]), std::stod(c[9]), std::stod(c[10])});
    }
  }
  return report;
}

BenchReport read_report_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot open '{}'", path.string()));
  const json doc = json::parse(in);
  BenchReport report;
  report.kind = doc.at("kind").get<std::string>();
  report.machine = doc.at("machine").get<std::string>();
  report.engine_version = doc.at("engine_version").get<std::string>();
  report.profile = doc.at("profile").get<std::string>();
  report.seed = doc.at("seed").get<std::uint64_t>();
  report.threads = doc.at("threads").get<std::size_t>();
  for (const auto& row : doc.at("rows")) {
    if (report.kind == "sweep") {
      report.sweep_rows.push_back({row.at("n_retain"), row.at("svd_tol"), row.at("approx_dirs"), row.at("null_dim"),
                                   row.at("e0"), row.at("e1"), row.at("retain_scale"), row.at("runtime_ms"),
                                   row.at("seed")});
    } else {
      report.timing_rows.push_back({row.at("profile"), row.at("n_layers"), row.at("d0"), row.at("n_erase"),
                                    row.at("n_retain"), row.at("n_aug"), row.at("r"), row.at("repeat"),
                                    row.at("threads"), row.at("wall_ms"), row.at("checksum")});
    }
  }
  return report;
}

}  // namespace nse::bench
