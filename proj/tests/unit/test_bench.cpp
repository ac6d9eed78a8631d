#include <cmath>
#include <cstdio>
#include <sstream>

#include "doctest.h"
#include "mrh2/bench.hpp"

using namespace mrh2;

namespace {

std::vector<BenchRecord> strip_timing(std::vector<BenchRecord> r) {
  for (auto& x : r) {
    x.build_s.reset();
    x.matvec_s.reset();
    x.inverse_s.reset();
    x.solve_s.reset();
    x.peak_mem.reset();
  }
  return r;
}

}  // namespace

TEST_CASE("config file and overrides") {
  std::istringstream in(
      "# rod sweep\n"
      "geometry = slab\n"
      "extents = 1, 2,4\n"
      "voxels_per_wavelength=12   # trailing comment\n"
      "\n"
      "eps_r = 4,-0.5\n"
      "solver = both\n"
      "eps = 1e-5\n");
  ExperimentConfig c = parse_config(in);
  CHECK(c.shape == Shape::Slab);
  CHECK(c.extents == std::vector<double>{1.0, 2.0, 4.0});
  CHECK(c.voxels_per_wavelength == 12.0);
  CHECK(c.eps_r == Complex(4.0, -0.5));
  CHECK(c.solver == SolverKind::Both);
  CHECK(c.eps_aca == 1e-5);
  CHECK(c.eps_acc == 1e-5);
  c.set("n_min=16");
  c.set("frequency", "299792458");
  CHECK(c.n_min == 16);
  CHECK(c.k0 == doctest::Approx(2.0 * std::acos(-1.0)));
  CHECK_NOTHROW(c.validate());
  CHECK(c.h2_options(true).inverse_aware);
  CHECK_FALSE(c.h2_options(false).inverse_aware);

  CHECK_THROWS_AS(c.set("colour=red"), Error);
  CHECK_THROWS_AS(c.set("n_min=3x"), Error);
  CHECK_THROWS_AS(c.set("no equals sign"), Error);
  std::istringstream bad("geometry slab\n");
  CHECK_THROWS_AS(parse_config(bad), Error);
  ExperimentConfig d;
  d.tol = 1.0;
  CHECK_THROWS_AS(d.validate(), Error);
  d = ExperimentConfig{};
  d.eps_aca = 1e-5;
  d.eps_acc = 1e-4;
  CHECK_THROWS_AS(d.validate(), Error);
  d = ExperimentConfig{};
  d.extents.clear();
  CHECK_THROWS_AS(d.validate(), Error);
}

TEST_CASE("csv emission") {
  std::ostringstream empty;
  write_csv(empty, {});
  CHECK(empty.str() == std::string(kCsvHeader) + "\n");

  BenchRecord r;
  r.experiment = "x";
  r.n = 164;
  r.lambda = 2.05;
  r.max_rank = 12;
  r.rep_error = 1.25e-6;
  r.peak_mem = 1048576.0;
  std::ostringstream one;
  write_csv(one, {r});
  CHECK(one.str() == std::string(kCsvHeader) + "\nx,164,2.05,,12,,1.25e-06,,,,,,,1048576\n");
}

TEST_CASE("csv round trip") {
  std::vector<BenchRecord> recs(3);
  recs[0].experiment = "a";
  recs[0].n = 640;
  recs[0].lambda = 1.0;
  recs[0].level = 3;
  recs[0].csp = 3.0;
  recs[1].experiment = "a-fit";
  recs[1].n = 10240;
  recs[1].lambda = 16.0;
  recs[1].matvec_s = 1.0256581148525095;
  recs[1].inverse_s = 0.1 + 0.2;
  recs[2].experiment = "b";
  recs[2].n = 1;
  recs[2].lambda = 0.5;
  recs[2].iterations = 7;
  recs[2].inv_residual = 9.265531989394646e-05;
  recs[2].peak_mem = 4096.0;
  recs[2].peak_mem_estimated = true;
  const std::string path = "bench_roundtrip.csv";
  emit_csv(recs, path);
  CHECK(parse_csv(path) == recs);
  std::remove(path.c_str());
  CHECK_THROWS_AS(emit_csv(recs, "/nonexistent-dir/x.csv"), Error);
}

TEST_CASE("log-log slope") {
  CHECK(loglog_slope({1, 2, 4}, {3, 6, 12}) == doctest::Approx(1.0));
  CHECK(loglog_slope({1, 2, 4, 8}, {1, 4, 16, 64}) == doctest::Approx(2.0));
  CHECK_THROWS_AS(loglog_slope({1}, {1}), Error);
}

TEST_CASE("rank study") {
  ExperimentConfig c;
  c.experiment = "rank";
  c.extents = {1.0, 2.0};
  c.eps_aca = c.eps_acc = 1e-5;
  c.svd_extents = {0.5, 1.0, 8.0};
  const RankStudyResult a = run_rank_study(c);
  const RankStudyResult b = run_rank_study(c);
  CHECK(strip_timing(a.records) == strip_timing(b.records));
  REQUIRE(a.warnings.size() == 1);
  Index rows_with_error = 0;
  for (const BenchRecord& r : a.records) {
    if (r.experiment == "rank") {
      const double ext = r.lambda;
      const VoxelGeometry g = generate_geometry(c.shape, ext, c.voxels_per_wavelength, c.k0);
      CHECK(r.n == g.size());
      if (r.rep_error) {
        ++rows_with_error;
        CHECK(*r.rep_error <= 1e-4);
      }
    } else {
      CHECK(r.experiment == "rank-svd");
      CHECK(r.n == two_body_geometry(3, r.lambda, 6.0).size());
    }
  }
  CHECK(rows_with_error == 2);
  CHECK_FALSE(a.records.back().max_rank.has_value());

  c.extents.clear();
  CHECK_THROWS_AS(run_rank_study(c), Error);
}

TEST_CASE("rank study rows without a dense oracle") {
  ExperimentConfig c;
  c.extents = {2.0};
  c.dense_cap = 10;
  for (const BenchRecord& r : run_rank_study(c).records) CHECK_FALSE(r.rep_error.has_value());
}

TEST_CASE("scaling study needs several sizes") {
  ExperimentConfig c;
  c.extents = {1.0};
  CHECK_THROWS_AS(run_scaling_study(c), Error);
  c.extents = {1.0, 2.0};
  CHECK_THROWS_AS(run_scaling_study(c), Error);
}

TEST_CASE("scaling study rows") {
  ExperimentConfig c;
  c.experiment = "sc";
  c.extents = {1.0, 2.0, 4.0};
  c.repeats = 3;
  c.solver = SolverKind::Direct;
  const ScalingStudyResult r = run_scaling_study(c);
  REQUIRE(r.records.size() == 4);
  for (int i = 0; i < 3; ++i) {
    const BenchRecord& x = r.records[i];
    CHECK(x.n == generate_geometry(Shape::Rod, c.extents[i], 20.0, c.k0).size());
    CHECK(*x.matvec_s > 0.0);
    CHECK(*x.inverse_s > 0.0);
    CHECK(*x.inv_residual <= 5e-2);
    CHECK(*x.iterations <= 10);
  }
  CHECK(r.records.back().experiment == "sc-fit");
  CHECK(*r.records.back().matvec_s == r.slopes.matvec);
}

TEST_CASE("solve with zero contrast returns the excitation") {
  ExperimentConfig c;
  c.eps_r = 1.0;
  c.extents = {1.0};
  const SolveResult r = run_solve(c);
  CHECK(r.converged);
  const VoxelGeometry g = generate_geometry(Shape::Rod, 1.0, 20.0, c.k0);
  const Vector e = plane_wave_rhs(g, c.k0, {1.0, 0.0, 0.0});
  CHECK((r.solution - e).norm() == 0.0);
  std::ostringstream out;
  write_solution(out, r.solution);
  std::istringstream in(out.str());
  std::string line;
  Index lines = 0;
  while (std::getline(in, line)) {
    CHECK(line.find(',') != std::string::npos);
    ++lines;
  }
  CHECK(lines == g.size());
}

TEST_CASE("solve on a one wavelength rod") {
  ExperimentConfig c;
  c.extents = {1.0};
  c.solver = SolverKind::Both;
  const SolveResult r = run_solve(c);
  CHECK(r.converged);
  CHECK(*r.record.iterations <= 10);
  REQUIRE(r.discrepancy.has_value());
  CHECK(*r.discrepancy <= std::max(10.0 * c.tol, 10.0 * c.eps_acc));
  CHECK(*r.record.inv_residual <= 5e-2);

  c.max_iter = 1;
  c.tol = 1e-12;
  c.solver = SolverKind::Iterative;
  CHECK_FALSE(run_solve(c).converged);
}
