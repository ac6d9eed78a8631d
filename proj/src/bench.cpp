#include "mrh2/bench.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "mrh2/h2_arith.hpp"

namespace mrh2 {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  const std::string t = trim(v);
  double x = 0.0;
  const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), x);
  if (ec != std::errc() || p != t.data() + t.size() || t.empty()) {
    throw Error("config: bad number for '" + key + "': '" + v + "'");
  }
  return x;
}

Index to_index(const std::string& key, const std::string& v) {
  const std::string t = trim(v);
  long long x = 0;
  const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), x);
  if (ec != std::errc() || p != t.data() + t.size() || t.empty()) {
    throw Error("config: bad integer for '" + key + "': '" + v + "'");
  }
  return static_cast<Index>(x);
}

std::vector<double> to_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  if (trim(v).empty()) return out;
  for (const auto& part : split(v, ',')) out.push_back(to_double(key, part));
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  const std::string t = trim(v);
  if (t == "1" || t == "true" || t == "on" || t == "yes") return true;
  if (t == "0" || t == "false" || t == "off" || t == "no") return false;
  throw Error("config: bad boolean for '" + key + "': '" + v + "'");
}

constexpr double kSpeedOfLight = 299792458.0;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Touches a buffer larger than the last level cache so that every timed
// call starts from main memory, whatever the problem size.
class CacheFlusher {
 public:
  CacheFlusher() : buf_(std::size_t{256} << 20, 0) {}
  void operator()() {
    for (std::size_t i = 0; i < buf_.size(); i += 64) buf_[i] += 1;
  }

 private:
  std::vector<unsigned char> buf_;
};

// Mean time per call from cold caches, calling until 1 ms has been measured.
template <class F>
double cold_time(CacheFlusher& flush, F&& f) {
  double total = 0.0;
  int calls = 0;
  while (total < 1e-3) {
    flush();
    const auto t0 = Clock::now();
    f();
    total += seconds_since(t0);
    ++calls;
  }
  return total / calls;
}

std::string format_double(double x) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, p);
}

template <class T>
void put(std::ostream& out, const std::optional<T>& v) {
  out << ',';
  if (!v) return;
  if constexpr (std::is_floating_point_v<T>) {
    out << format_double(*v);
  } else {
    out << *v;
  }
}

VieKernel make_kernel(const ExperimentConfig& cfg, double extent) {
  VoxelGeometry g = generate_geometry(cfg.shape, extent, cfg.voxels_per_wavelength, cfg.k0);
  KernelParams p = KernelParams::uniform(cfg.k0, cfg.eps_r, g.size());
  return VieKernel(std::move(g), std::move(p));
}

std::vector<Index> stage1_rank_per_level(const H2Matrix& h, const H2BuildStats& stats) {
  const ClusterTree& tree = h.tree();
  std::vector<Index> out(static_cast<std::size_t>(tree.depth()) + 1, -1);
  for (const Cluster& c : tree.clusters()) {
    if (h.blocks().admissible_in_row(c.id).empty()) continue;
    auto& slot = out[static_cast<std::size_t>(c.level)];
    slot = std::max(slot, stats.ab_rank[static_cast<std::size_t>(c.id)]);
  }
  return out;
}

void svd_study(const ExperimentConfig& cfg, RankStudyResult& res) {
  for (double size : cfg.svd_extents) {
    VoxelGeometry g = two_body_geometry(cfg.svd_dim, size, cfg.svd_voxels_per_wavelength);
    BenchRecord r;
    r.experiment = cfg.experiment + "-svd";
    r.n = g.size();
    r.lambda = size;
    if (g.size() > cfg.dense_cap) {
      res.warnings.push_back("two-body size " + format_double(size) + " has N = " +
                             std::to_string(g.size()) + " above the dense cap, skipped");
      res.records.push_back(r);
      continue;
    }
    const double k0 = 2.0 * std::acos(-1.0) / g.wavelength;
    const KernelParams p = KernelParams::uniform(k0, cfg.eps_r, g.size());
    const Index n1 = g.first_body;
    const Index n2 = g.size() - n1;
    DenseMatrix block(n1, n2);
    const auto t0 = Clock::now();
    for (Index j = 0; j < n2; ++j) {
      for (Index i = 0; i < n1; ++i) block(i, j) = matrix_entry(i, n1 + j, g, p);
    }
    r.max_rank = eps_rank(singular_values(block), cfg.svd_eps);
    r.build_s = seconds_since(t0);
    r.peak_mem = peak_resident_bytes();
    res.records.push_back(r);
  }
}

}  // namespace

SolverKind parse_solver(const std::string& tag) {
  if (tag == "iterative") return SolverKind::Iterative;
  if (tag == "direct") return SolverKind::Direct;
  if (tag == "both") return SolverKind::Both;
  throw Error("unknown solver '" + tag + "'");
}

std::string solver_name(SolverKind s) {
  switch (s) {
    case SolverKind::Iterative: return "iterative";
    case SolverKind::Direct: return "direct";
    case SolverKind::Both: return "both";
  }
  return "unknown";
}

void ExperimentConfig::set(const std::string& key_in, const std::string& value) {
  const std::string key = trim(key_in);
  const std::string v = trim(value);
  if (key == "experiment") {
    experiment = v;
  } else if (key == "geometry") {
    shape = parse_shape(v);
  } else if (key == "extents") {
    extents = to_list(key, v);
  } else if (key == "voxels_per_wavelength" || key == "vpw") {
    voxels_per_wavelength = to_double(key, v);
  } else if (key == "eps_r") {
    const auto parts = to_list(key, v);
    if (parts.empty() || parts.size() > 2) throw Error("config: eps_r takes 're' or 're,im'");
    eps_r = Complex(parts[0], parts.size() == 2 ? parts[1] : 0.0);
  } else if (key == "k0") {
    k0 = to_double(key, v);
  } else if (key == "frequency") {
    k0 = 2.0 * std::acos(-1.0) * to_double(key, v) / kSpeedOfLight;
  } else if (key == "n_min") {
    n_min = to_index(key, v);
  } else if (key == "eta") {
    eta = to_double(key, v);
  } else if (key == "eps_aca") {
    eps_aca = to_double(key, v);
  } else if (key == "eps_acc") {
    eps_acc = to_double(key, v);
  } else if (key == "eps") {
    eps_aca = eps_acc = to_double(key, v);
  } else if (key == "max_rank") {
    max_rank = to_index(key, v);
  } else if (key == "solver") {
    solver = parse_solver(v);
  } else if (key == "tol") {
    tol = to_double(key, v);
  } else if (key == "max_iter") {
    max_iter = to_index(key, v);
  } else if (key == "dense_cap" || key == "dense_oracle_cap") {
    dense_cap = to_index(key, v);
  } else if (key == "output") {
    output = v;
  } else if (key == "solution_output") {
    solution_output = v;
  } else if (key == "seed") {
    seed = static_cast<std::uint64_t>(to_index(key, v));
  } else if (key == "repeats") {
    repeats = static_cast<int>(to_index(key, v));
  } else if (key == "inverse_aware") {
    inverse_aware = to_bool(key, v);
  } else if (key == "svd_dim") {
    svd_dim = static_cast<int>(to_index(key, v));
  } else if (key == "svd_extents") {
    svd_extents = to_list(key, v);
  } else if (key == "svd_voxels_per_wavelength" || key == "svd_vpw") {
    svd_voxels_per_wavelength = to_double(key, v);
  } else if (key == "svd_eps") {
    svd_eps = to_double(key, v);
  } else {
    throw Error("config: unknown key '" + key + "'");
  }
}

void ExperimentConfig::set(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw Error("config: expected key=value, got '" + assignment + "'");
  set(assignment.substr(0, eq), assignment.substr(eq + 1));
}

void ExperimentConfig::validate() const {
  auto unit = [](double x, const char* name) {
    if (!(x > 0.0 && x < 1.0)) throw Error(std::string("config: ") + name + " must lie in (0,1)");
  };
  unit(eps_aca, "eps_aca");
  unit(eps_acc, "eps_acc");
  unit(tol, "tol");
  unit(svd_eps, "svd_eps");
  if (eps_acc > eps_aca) throw Error("config: eps_acc must not exceed eps_aca");
  if (experiment.empty() || experiment.find_first_of(",\n\"") != std::string::npos) {
    throw Error("config: experiment id must be non-empty without commas or quotes");
  }
  if (extents.empty()) throw Error("config: extent list is empty");
  for (double e : extents) {
    if (!(e > 0.0)) throw Error("config: extents must be positive");
  }
  if (!(k0 > 0.0)) throw Error("config: k0 must be positive");
  if (n_min < 1) throw Error("config: n_min must be >= 1");
  if (!(eta > 0.0)) throw Error("config: eta must be positive");
  if (max_rank < 1) throw Error("config: max_rank must be >= 1");
  if (max_iter < 1) throw Error("config: max_iter must be >= 1");
  if (dense_cap < 1) throw Error("config: dense_cap must be >= 1");
  if (repeats < 1) throw Error("config: repeats must be >= 1");
  if (eps_r.imag() > 0.0) throw Error("config: Im(eps_r) must be <= 0");
  if (svd_dim < 1 || svd_dim > 3) throw Error("config: svd_dim must be 1, 2 or 3");
  if (shape == Shape::TwoBody) throw Error("config: two_body is only available through svd_extents");
}

H2Options ExperimentConfig::h2_options(bool direct) const {
  H2Options o;
  o.n_min = n_min;
  o.eta = eta;
  o.compression.eps_aca = eps_aca;
  o.compression.eps_acc = eps_acc;
  o.compression.max_rank = max_rank;
  o.inverse_aware = direct && inverse_aware;
  return o;
}

ExperimentConfig parse_config(std::istream& in) {
  ExperimentConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    if (trim(line).empty()) continue;
    if (line.find('=') == std::string::npos) {
      throw Error("config line " + std::to_string(lineno) + ": expected key=value");
    }
    cfg.set(line);
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config '" + path + "'");
  return parse_config(in);
}

void write_csv(std::ostream& out, const std::vector<BenchRecord>& records) {
  out << kCsvHeader << '\n';
  for (const BenchRecord& r : records) {
    out << r.experiment << ',' << r.n << ',' << format_double(r.lambda);
    put(out, r.level);
    put(out, r.max_rank);
    put(out, r.csp);
    put(out, r.rep_error);
    put(out, r.inv_residual);
    put(out, r.iterations);
    put(out, r.build_s);
    put(out, r.matvec_s);
    put(out, r.inverse_s);
    put(out, r.solve_s);
    put(out, r.peak_mem);
    if (r.peak_mem && r.peak_mem_estimated) out << "est";
    out << '\n';
  }
}

std::vector<BenchRecord> read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) throw Error("csv: header mismatch");
  std::vector<BenchRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 14) throw Error("csv: expected 14 fields in '" + line + "'");
    auto real = [&](std::size_t i) -> std::optional<double> {
      if (f[i].empty()) return std::nullopt;
      return to_double("csv", f[i]);
    };
    auto count = [&](std::size_t i) -> std::optional<Index> {
      if (f[i].empty()) return std::nullopt;
      return to_index("csv", f[i]);
    };
    BenchRecord r;
    r.experiment = f[0];
    r.n = to_index("csv", f[1]);
    r.lambda = to_double("csv", f[2]);
    r.level = count(3);
    r.max_rank = count(4);
    r.csp = real(5);
    r.rep_error = real(6);
    r.inv_residual = real(7);
    r.iterations = count(8);
    r.build_s = real(9);
    r.matvec_s = real(10);
    r.inverse_s = real(11);
    r.solve_s = real(12);
    std::string mem = f[13];
    if (mem.size() > 3 && mem.compare(mem.size() - 3, 3, "est") == 0) {
      r.peak_mem_estimated = true;
      mem.resize(mem.size() - 3);
    }
    if (!mem.empty()) r.peak_mem = to_double("csv", mem);
    out.push_back(std::move(r));
  }
  return out;
}

void emit_csv(const std::vector<BenchRecord>& records, const std::string& path) {
  if (path.empty()) {
    write_csv(std::cout, records);
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  write_csv(out, records);
  if (!out) throw Error("write failed for '" + path + "'");
}

std::vector<BenchRecord> parse_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  return read_csv(in);
}

std::optional<double> peak_resident_bytes() {
  std::ifstream in("/proc/self/status");
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("VmHWM:", 0) == 0) {
      std::istringstream s(line.substr(6));
      double kb = 0.0;
      if (s >> kb) return kb * 1024.0;
    }
  }
  return std::nullopt;
}

RankStudyResult run_rank_study(const ExperimentConfig& cfg) {
  cfg.validate();
  RankStudyResult res;
  for (double extent : cfg.extents) {
    const VieKernel kernel = make_kernel(cfg, extent);
    H2BuildStats stats;
    const H2Matrix h = build_h2(kernel, cfg.h2_options(false), &stats);
    const auto per_level = stage1_rank_per_level(h, stats);
    const SparsityConstant csp = sparsity_constant(h.blocks());

    BenchRecord total;
    total.experiment = cfg.experiment;
    total.n = kernel.size();
    total.lambda = extent;
    total.max_rank = stats.max_ab_rank;
    total.csp = static_cast<double>(csp.global);
    total.build_s = stats.total_s;
    if (kernel.size() <= cfg.dense_cap) {
      total.rep_error = rep_error(h, assemble_dense(kernel.geometry(), kernel.params(), cfg.dense_cap),
                                  cfg.dense_cap);
    }
    total.peak_mem = peak_resident_bytes();
    if (!total.peak_mem) {
      total.peak_mem = static_cast<double>(h.storage_entries() * sizeof(Complex));
      total.peak_mem_estimated = true;
    }
    res.records.push_back(total);

    for (std::size_t l = 0; l < per_level.size(); ++l) {
      if (per_level[l] < 0) continue;
      BenchRecord r;
      r.experiment = cfg.experiment;
      r.n = kernel.size();
      r.lambda = extent;
      r.level = static_cast<Index>(l);
      r.max_rank = per_level[l];
      r.csp = static_cast<double>(csp.per_level[l]);
      res.records.push_back(r);
    }
  }
  svd_study(cfg, res);
  return res;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw Error("loglog_slope: size mismatch");
  if (x.size() < 2) throw Error("loglog_slope: need at least two points");
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0 && y[i] > 0.0)) throw Error("loglog_slope: values must be positive");
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  if (sxx == 0.0) throw Error("loglog_slope: all sizes are equal");
  return sxy / sxx;
}

ScalingStudyResult run_scaling_study(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.extents.size() < 3) throw Error("scaling study needs at least 3 sizes");
  const bool direct = cfg.solver != SolverKind::Iterative;
  const std::size_t m = cfg.extents.size();

  std::vector<VieKernel> kernels;
  std::vector<H2Matrix> hs;
  ScalingStudyResult res;
  res.records.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    kernels.push_back(make_kernel(cfg, cfg.extents[i]));
    H2BuildStats stats;
    hs.push_back(build_h2(kernels[i], cfg.h2_options(direct), &stats));
    BenchRecord& r = res.records[i];
    r.experiment = cfg.experiment;
    r.n = kernels[i].size();
    r.lambda = cfg.extents[i];
    r.max_rank = hs[i].basis().max_rank();
    r.csp = static_cast<double>(sparsity_constant(hs[i].blocks()).global);
    r.build_s = stats.total_s;
    res.storage_bytes.push_back(static_cast<double>(hs[i].storage_entries() * sizeof(Complex)));
  }

  CacheFlusher flush;
  std::vector<Vector> rhs;
  for (std::size_t i = 0; i < m; ++i) {
    rhs.push_back(plane_wave_rhs(kernels[i].geometry(), cfg.k0, {1.0, 0.0, 0.0}));
  }

  // Sizes are visited round robin so that slow drifts of the machine spread
  // over all of them.
  std::vector<std::vector<double>> mv(m), sv(m), iv(m);
  for (int rep = 0; rep < cfg.repeats; ++rep) {
    for (std::size_t i = 0; i < m; ++i) {
      const Vector x = random_unit_vector(hs[i].size(), cfg.seed + static_cast<std::uint64_t>(rep));
      mv[i].push_back(cold_time(flush, [&] { return matvec(hs[i], x); }));
      SolveReport report;
      sv[i].push_back(cold_time(flush, [&] {
        bicgstab_solve([&](const Vector& v) { return matvec(hs[i], v); }, rhs[i], cfg.tol,
                       cfg.max_iter, &report);
      }));
      res.records[i].iterations = report.iterations;
    }
  }
  if (direct) {
    std::vector<H2Matrix> inverses;
    for (int rep = 0; rep < cfg.repeats; ++rep) {
      for (std::size_t i = 0; i < m; ++i) {
        flush();
        const auto t0 = Clock::now();
        H2Matrix inv = h2_invert(hs[i]);
        iv[i].push_back(seconds_since(t0));
        if (rep == 0) inverses.push_back(std::move(inv));
      }
    }
    for (std::size_t i = 0; i < m; ++i) {
      res.records[i].inverse_s = median(iv[i]);
      res.records[i].inv_residual = inverse_residual_estimate(
          [&](const Vector& v) { return matvec(hs[i], v); },
          [&](const Vector& v) { return matvec(inverses[i], v); }, hs[i].size(), 10, cfg.seed);
    }
  }

  std::vector<double> ns, build, mvt, solve, inv;
  for (std::size_t i = 0; i < m; ++i) {
    BenchRecord& r = res.records[i];
    r.matvec_s = median(mv[i]);
    r.solve_s = median(sv[i]);
    r.peak_mem = peak_resident_bytes();
    if (!r.peak_mem) {
      r.peak_mem = res.storage_bytes[i];
      r.peak_mem_estimated = true;
    }
    ns.push_back(static_cast<double>(r.n));
    build.push_back(*r.build_s);
    mvt.push_back(*r.matvec_s);
    solve.push_back(*r.solve_s);
    if (direct) inv.push_back(*r.inverse_s);
  }
  res.slopes.build = loglog_slope(ns, build);
  res.slopes.matvec = loglog_slope(ns, mvt);
  res.slopes.solve = loglog_slope(ns, solve);
  res.slopes.memory = loglog_slope(ns, res.storage_bytes);
  if (direct) res.slopes.inverse = loglog_slope(ns, inv);

  BenchRecord fit;
  fit.experiment = cfg.experiment + "-fit";
  fit.n = res.records.back().n;
  fit.lambda = res.records.back().lambda;
  fit.build_s = res.slopes.build;
  fit.matvec_s = res.slopes.matvec;
  fit.solve_s = res.slopes.solve;
  if (direct) fit.inverse_s = res.slopes.inverse;
  fit.peak_mem = res.slopes.memory;
  res.records.push_back(fit);
  return res;
}

SolveResult run_solve(const ExperimentConfig& cfg) {
  cfg.validate();
  const bool direct = cfg.solver != SolverKind::Iterative;
  const bool iterative = cfg.solver != SolverKind::Direct;
  const VieKernel kernel = make_kernel(cfg, cfg.extents.front());
  H2BuildStats stats;
  const H2Matrix h = build_h2(kernel, cfg.h2_options(direct), &stats);
  const Vector e = plane_wave_rhs(kernel.geometry(), cfg.k0, {1.0, 0.0, 0.0});

  SolveResult res;
  BenchRecord& r = res.record;
  r.experiment = cfg.experiment;
  r.n = kernel.size();
  r.lambda = cfg.extents.front();
  r.max_rank = h.basis().max_rank();
  r.csp = static_cast<double>(sparsity_constant(h.blocks()).global);
  r.build_s = stats.total_s;
  if (kernel.size() <= cfg.dense_cap) {
    r.rep_error =
        rep_error(h, assemble_dense(kernel.geometry(), kernel.params(), cfg.dense_cap), cfg.dense_cap);
  }
  auto apply_s = [&](const Vector& v) { return matvec(h, v); };
  {
    const Vector x = random_unit_vector(h.size(), cfg.seed);
    const auto t0 = Clock::now();
    const Vector y = matvec(h, x);
    r.matvec_s = seconds_since(t0);
  }

  Vector x_it;
  if (iterative) {
    SolveReport report;
    x_it = bicgstab_solve(apply_s, e, cfg.tol, cfg.max_iter, &report);
    r.iterations = report.iterations;
    r.solve_s = report.wall_time;
    res.converged = report.converged;
    res.solution = x_it;
  }
  if (direct) {
    auto t0 = Clock::now();
    const H2Matrix inv = h2_invert(h);
    r.inverse_s = seconds_since(t0);
    t0 = Clock::now();
    const Vector x_dir = apply_inverse_solve(inv, e);
    if (!iterative) {
      r.solve_s = seconds_since(t0);
      res.solution = x_dir;
    } else {
      res.discrepancy = (x_it - x_dir).norm() / x_dir.norm();
    }
    r.inv_residual = inverse_residual_estimate(
        apply_s, [&](const Vector& v) { return matvec(inv, v); }, h.size(), 10, cfg.seed);
  }
  r.peak_mem = peak_resident_bytes();
  if (!r.peak_mem) {
    r.peak_mem = static_cast<double>(h.storage_entries() * sizeof(Complex));
    r.peak_mem_estimated = true;
  }
  return res;
}

void write_solution(std::ostream& out, const Vector& x) {
  for (Index i = 0; i < x.size(); ++i) {
    out << format_double(x(i).real()) << ',' << format_double(x(i).imag()) << '\n';
  }
}

}  // namespace mrh2
