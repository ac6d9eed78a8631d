#pragma once
//
// Experiment harness: configuration, CSV records and the study drivers used
// by the mrh2_bench tool.
//
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mrh2/h2_build.hpp"

namespace mrh2 {

enum class SolverKind { Iterative, Direct, Both };

SolverKind parse_solver(const std::string& tag);
std::string solver_name(SolverKind s);

struct ExperimentConfig {
  std::string experiment = "run";
  Shape shape = Shape::Rod;
  std::vector<double> extents{1.0};  // wavelengths (cube_array: cubes per side)
  double voxels_per_wavelength = 20.0;
  Complex eps_r{2.54, 0.0};
  double k0 = 6.283185307179586;
  Index n_min = 32;
  double eta = 1.0;
  double eps_aca = 1e-4;
  double eps_acc = 1e-4;
  Index max_rank = 200;
  SolverKind solver = SolverKind::Iterative;
  double tol = 1e-3;
  Index max_iter = 200;
  Index dense_cap = kDefaultDenseCap;
  std::string output;           // CSV path, empty for stdout
  std::string solution_output;  // solve only
  std::uint64_t seed = 1;
  int repeats = 5;
  bool inverse_aware = true;  // only used when a direct inverse is built
  // two-body SVD study; empty extents disables it
  int svd_dim = 3;
  std::vector<double> svd_extents;
  double svd_voxels_per_wavelength = 6.0;
  double svd_eps = 1e-5;

  /// Applies one "key=value" assignment.
  void set(const std::string& key, const std::string& value);
  void set(const std::string& assignment);
  void validate() const;
  H2Options h2_options(bool direct) const;
};

/// Reads key=value lines; '#' starts a comment.
ExperimentConfig parse_config(std::istream& in);
ExperimentConfig load_config(const std::string& path);

struct BenchRecord {
  std::string experiment;
  Index n = 0;
  double lambda = 0.0;
  std::optional<Index> level;
  std::optional<Index> max_rank;
  std::optional<double> csp;
  std::optional<double> rep_error;
  std::optional<double> inv_residual;
  std::optional<Index> iterations;
  std::optional<double> build_s;
  std::optional<double> matvec_s;
  std::optional<double> inverse_s;
  std::optional<double> solve_s;
  std::optional<double> peak_mem;
  bool peak_mem_estimated = false;  // written with an "est" suffix

  bool operator==(const BenchRecord&) const = default;
};

inline constexpr const char* kCsvHeader =
    "experiment,N,lambda,level,max_rank,csp,rep_error,inv_residual,iterations,build_s,matvec_s,"
    "inverse_s,solve_s,peak_mem";

void write_csv(std::ostream& out, const std::vector<BenchRecord>& records);
std::vector<BenchRecord> read_csv(std::istream& in);
/// Writes to path, or to stdout when path is empty.
void emit_csv(const std::vector<BenchRecord>& records, const std::string& path);
std::vector<BenchRecord> parse_csv(const std::string& path);

/// Process peak resident size in bytes, if the platform reports it.
std::optional<double> peak_resident_bytes();

struct RankStudyResult {
  std::vector<BenchRecord> records;
  std::vector<std::string> warnings;
};

/// Per size and tree level the maximum stage I rank; rep_error on the size
/// row when dense assembly fits under the cap. Optionally the two-body
/// SVD rank study.
RankStudyResult run_rank_study(const ExperimentConfig& cfg);

struct ScalingFit {
  double build = 0.0;
  double matvec = 0.0;
  double solve = 0.0;
  double inverse = 0.0;  // 0 when no inverse was timed
  double memory = 0.0;   // from H2 storage
};

struct ScalingStudyResult {
  std::vector<BenchRecord> records;  // one per size, then the fit row
  ScalingFit slopes;
  std::vector<double> storage_bytes;
};

/// Least-squares slope of log y against log x.
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

/// Times matvec (median of cfg.repeats cold-cache runs, repeated until at
/// least 1 ms has been measured), BiCGStab, and the inverse when the solver
/// includes the direct path.
ScalingStudyResult run_scaling_study(const ExperimentConfig& cfg);

struct SolveResult {
  BenchRecord record;
  Vector solution;
  bool converged = true;
  std::optional<double> discrepancy;  // iterative vs direct, solver = both
};

/// Plane wave along +x on the first configured size.
SolveResult run_solve(const ExperimentConfig& cfg);

void write_solution(std::ostream& out, const Vector& x);

}  // namespace mrh2
