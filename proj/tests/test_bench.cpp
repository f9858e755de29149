#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <fstream>
#include <sstream>

#include "nse/bench.hpp"
#include "nse/errors.hpp"
#include "nse/log.hpp"
#include "test_support.hpp"

using namespace nse;
using namespace nse::bench;
using nse::testing::TempDir;

namespace {

struct QuietLogs {
  QuietLogs() { init_logging("off"); }
} quiet;

std::size_t line_count(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

}  // namespace

TEST_CASE("synthetic task is valid and deterministic") {
  const EraseTask a = gen_synthetic_task(8, 6, 1, 2, 3, 7);
  CHECK_NOTHROW(a.validate());
  CHECK(a.d0() == 8);
  CHECK(a.C1.count() == 2);
  CHECK(a.C0.count() == 3);
  CHECK(a.C2.count() == 0);
  CHECK(a.layers[0].layer_id == "layer_0");
  CHECK(a.hp.seed == 7);
  for (Eigen::Index j = 0; j < 3; ++j) CHECK(a.C0.embeddings.col(j).norm() == doctest::Approx(1.0));
  CHECK((a.C1.embeddings - a.C_star.embeddings).norm() > 0.1);

  const EraseTask b = gen_synthetic_task(8, 6, 1, 2, 3, 7);
  CHECK(nse::testing::bit_identical(a.layers[0].W, b.layers[0].W));
  CHECK(nse::testing::bit_identical(a.C0.embeddings, b.C0.embeddings));
  const EraseTask c = gen_synthetic_task(8, 6, 1, 2, 3, 8);
  CHECK(!nse::testing::bit_identical(a.layers[0].W, c.layers[0].W));

  CHECK_THROWS_AS(gen_synthetic_task(8, 6, 0, 2, 3, 7), ValidationError);
  CHECK_THROWS_AS(gen_synthetic_task(8, 6, 1, 0, 3, 7), ValidationError);

  EraseTask dup = gen_synthetic_task(8, 6, 2, 2, 3, 7);
  dup.layers[1].layer_id = dup.layers[0].layer_id;
  CHECK_THROWS_WITH_AS(dup.validate(), doctest::Contains("more than once"), ValidationError);
}

TEST_CASE("sd-like inventory") {
  const auto dims = sd_like_layer_dims();
  CHECK(dims.size() == 16);
  CHECK(std::count(dims.begin(), dims.end(), 320) == 6);
  CHECK(std::count(dims.begin(), dims.end(), 640) == 6);
  CHECK(std::count(dims.begin(), dims.end(), 1280) == 4);
  CHECK(kSdLikeD0 == 768);
}

TEST_CASE("sweep rows follow the null-dimension identity") {
  SweepConfig cfg;
  cfg.d0 = 16;
  cfg.d_v = 12;
  cfg.retain_grid = {0, 4, 8, 15, 16, 20};
  cfg.tol_grid = {1e-8};
  cfg.approx_grid = {0, 3};
  cfg.seed = 5;
  const BenchReport r = sweep_retain_rank(cfg);
  REQUIRE(r.sweep_rows.size() == 12);
  CHECK(r.kind == "sweep");
  for (const auto& p : r.sweep_rows) {
    const std::size_t rank = std::min<std::size_t>(p.n_retain, 16);
    if (rank < 16) {
      CHECK(p.null_dim == 16 - rank);
      CHECK(p.approx_dirs == 0);
      CHECK(p.e0 < 1e-14 * std::max(p.retain_scale, 1.0));
    } else if (p.approx_dirs > 0) {
      CHECK(p.null_dim == 3);
      CHECK(p.e0 > 0.0);
    } else {
      CHECK(p.null_dim == 0);
      CHECK(p.e0 == 0.0);
    }
    CHECK(p.runtime_ms >= 0.0);
  }
  CHECK_THROWS_AS(sweep_retain_rank(SweepConfig{}), ValidationError);
}

TEST_CASE("timing bench on a tiny custom profile") {
  TimingConfig cfg;
  cfg.profile = "custom";
  cfg.d0 = 16;
  cfg.layer_dims = {8, 12};
  cfg.n_erase = 2;
  cfg.n_retain = 4;
  cfg.repeats = 3;
  cfg.seed = 3;
  const BenchReport r = timing_bench(cfg);
  REQUIRE(r.timing_rows.size() == 3);
  CHECK(r.kind == "timing");
  CHECK(r.timing_rows[0].checksum == r.timing_rows[2].checksum);
  CHECK(r.timing_rows[1].repeat == 1);
  CHECK(r.timing_rows[0].n_layers == 2);
  CHECK(median_ms(r) >= min_ms(r));
  cfg.profile = "huge";
  CHECK_THROWS_AS(timing_bench(cfg), ValidationError);
}

TEST_CASE("median and minimum") {
  BenchReport r;
  for (double ms : {5.0, 1.0, 3.0, 9.0}) {
    TimingRow row;
    row.wall_ms = ms;
    r.timing_rows.push_back(row);
  }
  CHECK(median_ms(r) == 4.0);
  CHECK(min_ms(r) == 1.0);
  r.timing_rows.pop_back();
  CHECK(median_ms(r) == 3.0);
}

TEST_CASE("reports round trip through CSV and JSON") {
  TempDir dir;
  BenchReport r;
  r.kind = "sweep";
  r.machine = "test machine";
  r.engine_version = "0.0.0";
  r.profile = "p";
  r.seed = 12;
  r.sweep_rows.push_back({4, 1e-4, 0, 12, 1.0 / 3.0, 2.5e-300, 17.25, 0.1, 99});

  SUBCASE("single-row CSV is header plus one line") {
    emit_report(r, dir / "r.csv", ReportFormat::csv);
    CHECK(line_count(dir / "r.csv") == 2);
    const BenchReport back = read_report_csv(dir / "r.csv");
    REQUIRE(back.sweep_rows.size() == 1);
    const auto& p = back.sweep_rows[0];
    CHECK(p.e0 == 1.0 / 3.0);
    CHECK(p.e1 == 2.5e-300);
    CHECK(p.svd_tol == 1e-4);
    CHECK(p.null_dim == 12);
    CHECK(p.seed == 99);
  }
  SUBCASE("JSON keeps metadata") {
    emit_report(r, dir / "r.json", ReportFormat::json);
    const BenchReport back = read_report_json(dir / "r.json");
    CHECK(back.machine == "test machine");
    CHECK(back.seed == 12);
    REQUIRE(back.sweep_rows.size() == 1);
    CHECK(back.sweep_rows[0].e0 == 1.0 / 3.0);
    CHECK(back.sweep_rows[0].runtime_ms == 0.1);
  }
  SUBCASE("timing rows") {
    BenchReport t;
    t.kind = "timing";
    t.timing_rows.push_back({"sd-like", 16, 768, 100, 100, 10, 1, 0, 1, 1234.5, 0.1 + 0.2});
    emit_report(t, dir / "t.csv", ReportFormat::csv);
    const BenchReport back = read_report_csv(dir / "t.csv");
    REQUIRE(back.timing_rows.size() == 1);
    CHECK(back.timing_rows[0].checksum == 0.1 + 0.2);
    CHECK(back.timing_rows[0].profile == "sd-like");
    emit_report(t, dir / "t.json", ReportFormat::json);
    CHECK(read_report_json(dir / "t.json").timing_rows[0].wall_ms == 1234.5);
  }
  SUBCASE("empty reports are refused") {
    BenchReport empty;
    CHECK_THROWS_AS(emit_report(empty, dir / "e.csv", ReportFormat::csv), ValidationError);
    std::ostringstream os;
    CHECK_THROWS_AS(write_report(empty, os, ReportFormat::json), ValidationError);
  }
  SUBCASE("foreign CSV is rejected") {
    std::ofstream(dir / "x.csv") << "a,b,c\n1,2,3\n";
    CHECK_THROWS_AS(read_report_csv(dir / "x.csv"), ValidationError);
  }
}

TEST_CASE("machine descriptor is non-empty") {
  CHECK(!machine_descriptor().empty());
}
