// mrh2_bench: rank, scaling and solve experiments on voxel geometries.
#include <cstdio>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "mrh2/bench.hpp"
#include "mrh2/verify.hpp"

using namespace mrh2;

namespace {

ExperimentConfig make_config(const std::string& path, const std::vector<std::string>& sets) {
  ExperimentConfig cfg = path.empty() ? ExperimentConfig{} : load_config(path);
  for (const auto& s : sets) cfg.set(s);
  cfg.validate();
  return cfg;
}

int rank_study(const ExperimentConfig& cfg) {
  const RankStudyResult r = run_rank_study(cfg);
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
  emit_csv(r.records, cfg.output);
  return 0;
}

int scaling_study(const ExperimentConfig& cfg) {
  const ScalingStudyResult r = run_scaling_study(cfg);
  emit_csv(r.records, cfg.output);
  std::fprintf(stderr, "slopes: build %.3f matvec %.3f solve %.3f memory %.3f", r.slopes.build,
               r.slopes.matvec, r.slopes.solve, r.slopes.memory);
  if (cfg.solver != SolverKind::Iterative) std::fprintf(stderr, " inverse %.3f", r.slopes.inverse);
  std::fprintf(stderr, "\n");
  return 0;
}

int solve(const ExperimentConfig& cfg) {
  const SolveResult r = run_solve(cfg);
  emit_csv({r.record}, cfg.output);
  if (!cfg.solution_output.empty()) {
    std::ofstream out(cfg.solution_output, std::ios::binary);
    if (!out) throw Error("cannot write '" + cfg.solution_output + "'");
    write_solution(out, r.solution);
  }
  if (r.discrepancy) std::fprintf(stderr, "iterative vs direct discrepancy: %.3e\n", *r.discrepancy);
  if (!r.converged) {
    std::fprintf(stderr, "BiCGStab did not converge (converged=false)\n");
    return 2;
  }
  return 0;
}

int verify(const ExperimentConfig& cfg) {
  bool ok = true;
  for (double extent : cfg.extents) {
    VoxelGeometry g = generate_geometry(cfg.shape, extent, cfg.voxels_per_wavelength, cfg.k0);
    KernelParams p = KernelParams::uniform(cfg.k0, cfg.eps_r, g.size());
    const VieKernel kernel(std::move(g), std::move(p));
    const H2Matrix h = build_h2(kernel, cfg.h2_options(true));
    std::vector<Check> checks = structural_checks(h);
    if (kernel.size() <= cfg.dense_cap) {
      const DenseMatrix d = assemble_dense(kernel.geometry(), kernel.params(), cfg.dense_cap);
      const Vector e = plane_wave_rhs(kernel.geometry(), cfg.k0, {1.0, 0.0, 0.0});
      for (auto& c : oracle_checks(h, d, e, cfg.eps_acc, cfg.seed)) checks.push_back(c);
    } else {
      std::fprintf(stderr, "warning: N = %ld above the dense cap, oracle checks skipped\n",
                   static_cast<long>(kernel.size()));
    }
    for (const Check& c : checks) {
      std::printf("%s %s N=%ld %s: %.3e (bound %.1e)\n", c.pass() ? "PASS" : "FAIL",
                  shape_name(cfg.shape).c_str(), static_cast<long>(kernel.size()), c.name.c_str(),
                  c.value, c.bound);
      ok = ok && c.pass();
    }
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"H2 matrix experiments on voxel geometries"};
  app.require_subcommand(1);
  std::string config;
  std::vector<std::string> sets;
  std::string output;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config, "key=value configuration file")->check(CLI::ExistingFile);
    sub->add_option("--set", sets, "override one configuration entry, key=value");
    sub->add_option("-o,--output", output, "CSV output path (default stdout)");
  };
  CLI::App* rank = app.add_subcommand("rank-study", "per-level ranks and two-body SVD ranks");
  CLI::App* scaling = app.add_subcommand("scaling-study", "timings and log-log slopes");
  CLI::App* slv = app.add_subcommand("solve", "plane wave solve on the first size");
  CLI::App* ver = app.add_subcommand("verify", "structural and dense oracle checks");
  for (CLI::App* s : {rank, scaling, slv, ver}) add_common(s);
  CLI11_PARSE(app, argc, argv);

  try {
    if (!output.empty()) sets.push_back("output=" + output);
    const ExperimentConfig cfg = make_config(config, sets);
    if (rank->parsed()) return rank_study(cfg);
    if (scaling->parsed()) return scaling_study(cfg);
    if (slv->parsed()) return solve(cfg);
    return verify(cfg);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
