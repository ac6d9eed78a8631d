#include "mrh2/vie_kernel.hpp"

#include <cmath>
#include <numbers>

namespace mrh2 {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr Complex kJ{0.0, 1.0};

Index voxel_count(double length, double h) {
  return static_cast<Index>(std::llround(length / h));
}

void push_box(VoxelGeometry& g, const std::array<double, 3>& origin,
              const std::array<Index, 3>& n, double h) {
  const double vol = h * h * h;
  for (Index i = 0; i < n[0]; ++i) {
    for (Index j = 0; j < n[1]; ++j) {
      for (Index k = 0; k < n[2]; ++k) {
        g.centers.push_back({origin[0] + (static_cast<double>(i) + 0.5) * h,
                             origin[1] + (static_cast<double>(j) + 0.5) * h,
                             origin[2] + (static_cast<double>(k) + 0.5) * h});
        g.volumes.push_back(vol);
      }
    }
  }
}

}  // namespace

Shape parse_shape(const std::string& tag) {
  if (tag == "rod") return Shape::Rod;
  if (tag == "slab") return Shape::Slab;
  if (tag == "cube_array") return Shape::CubeArray;
  if (tag == "two_body") return Shape::TwoBody;
  throw Error("unknown geometry shape '" + tag + "'");
}

std::string shape_name(Shape s) {
  switch (s) {
    case Shape::Rod: return "rod";
    case Shape::Slab: return "slab";
    case Shape::CubeArray: return "cube_array";
    case Shape::TwoBody: return "two_body";
  }
  return "unknown";
}

VoxelGeometry generate_geometry(Shape shape, double extent, double voxels_per_wavelength,
                                double k0) {
  if (!(extent > 0.0)) throw Error("generate_geometry: extent must be positive");
  if (voxels_per_wavelength < 8.0) {
    throw Error("generate_geometry: need at least 8 voxels per wavelength");
  }
  if (!(k0 > 0.0)) throw Error("generate_geometry: k0 must be positive");

  VoxelGeometry g;
  g.shape = shape;
  g.wavelength = 2.0 * kPi / k0;
  g.electrical_size = extent;
  const double lambda = g.wavelength;
  const double h = lambda / voxels_per_wavelength;
  const Index thin = std::max<Index>(1, voxel_count(lambda / 10.0, h));

  switch (shape) {
    case Shape::Rod: {
      g.dims = {voxel_count(extent * lambda, h), thin, thin};
      push_box(g, {0.0, 0.0, 0.0}, g.dims, h);
      break;
    }
    case Shape::Slab: {
      const Index n = voxel_count(extent * lambda, h);
      g.dims = {n, n, thin};
      push_box(g, {0.0, 0.0, 0.0}, g.dims, h);
      break;
    }
    case Shape::CubeArray: {
      const Index count = static_cast<Index>(std::llround(extent));
      const Index m = std::max<Index>(1, voxel_count(0.3 * lambda, h));
      const double edge = 0.3 * lambda;
      const double hc = edge / static_cast<double>(m);
      const double pitch = 2.0 * edge;
      g.dims = {m, m, m};
      for (Index a = 0; a < count; ++a) {
        for (Index b = 0; b < count; ++b) {
          for (Index c = 0; c < count; ++c) {
            push_box(g,
                     {pitch * static_cast<double>(a), pitch * static_cast<double>(b),
                      pitch * static_cast<double>(c)},
                     g.dims, hc);
          }
        }
      }
      break;
    }
    case Shape::TwoBody:
      throw Error("generate_geometry: use two_body_geometry for the two-body layout");
  }
  if (g.centers.empty()) throw Error("generate_geometry: geometry has zero voxels");
  return g;
}

VoxelGeometry two_body_geometry(int dim, double electrical_size, double voxels_per_wavelength) {
  if (dim < 1 || dim > 3) throw Error("two_body_geometry: dim must be 1, 2 or 3");
  if (!(electrical_size > 0.0)) throw Error("two_body_geometry: size must be positive");
  VoxelGeometry g;
  g.shape = Shape::TwoBody;
  g.wavelength = 1.0 / electrical_size;  // bodies are 1 m wide
  g.electrical_size = electrical_size;
  const Index n = std::max<Index>(1, static_cast<Index>(std::llround(electrical_size * voxels_per_wavelength)));
  const double h = 1.0 / static_cast<double>(n);
  const Index thin = std::max<Index>(1, voxel_count(g.wavelength / 10.0, h));
  g.dims = {n, dim >= 2 ? n : thin, dim >= 3 ? n : thin};
  push_box(g, {0.0, 0.0, 0.0}, g.dims, h);
  g.first_body = g.size();
  push_box(g, {3.0, 0.0, 0.0}, g.dims, h);
  return g;
}

KernelParams KernelParams::uniform(double k0, Complex eps_r, Index n) {
  KernelParams p;
  p.k0 = k0;
  p.eps_r.assign(static_cast<std::size_t>(n), eps_r);
  return p;
}

void KernelParams::validate(Index n) const {
  if (!(k0 >= 0.0)) throw Error("KernelParams: k0 must be non-negative");
  if (static_cast<Index>(eps_r.size()) != n) {
    throw Error("KernelParams: one permittivity per voxel required");
  }
  for (const Complex& e : eps_r) {
    if (e.imag() > 0.0) throw Error("KernelParams: Im(eps_r) must be <= 0 for passive media");
  }
}

Complex self_term(double volume, double k0) {
  const double a = std::cbrt(3.0 * volume / (4.0 * kPi));
  const double x = k0 * a;
  if (x < 1e-4) {
    return Complex(a * a / 2.0, -k0 * a * a * a / 3.0);
  }
  return ((1.0 + kJ * x) * std::exp(-kJ * x) - 1.0) / (k0 * k0);
}

Complex matrix_entry(Index m, Index n, const VoxelGeometry& geom, const KernelParams& params) {
  const double vol = geom.volumes[static_cast<std::size_t>(n)];
  const Complex scatter = params.k0 * params.k0 * params.chi(n);
  if (m == n) return 1.0 - scatter * self_term(vol, params.k0);
  const Point3& p = geom.centers[static_cast<std::size_t>(m)];
  const Point3& q = geom.centers[static_cast<std::size_t>(n)];
  const double r = std::sqrt((p.x - q.x) * (p.x - q.x) + (p.y - q.y) * (p.y - q.y) +
                             (p.z - q.z) * (p.z - q.z));
  if (r == 0.0) throw Error("matrix_entry: coincident voxel centers");
  return -scatter * vol * std::exp(-kJ * (params.k0 * r)) / (4.0 * kPi * r);
}

Vector plane_wave_rhs(const VoxelGeometry& geom, double k0, const std::array<double, 3>& d) {
  const double len = std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
  if (std::abs(len - 1.0) > 1e-12) throw Error("plane_wave_rhs: direction must be a unit vector");
  Vector e(geom.size());
  for (Index m = 0; m < geom.size(); ++m) {
    const Point3& p = geom.centers[static_cast<std::size_t>(m)];
    e(m) = std::exp(-kJ * (k0 * (d[0] * p.x + d[1] * p.y + d[2] * p.z)));
  }
  return e;
}

DenseMatrix assemble_dense(const VoxelGeometry& geom, const KernelParams& params, Index cap) {
  if (geom.size() > cap) {
    throw Error("assemble_dense: N = " + std::to_string(geom.size()) +
                " exceeds the dense cap " + std::to_string(cap));
  }
  const VieKernel kernel(geom, params);
  const Index n = geom.size();
  DenseMatrix s(n, n);
  for (Index c = 0; c < n; ++c) {
    for (Index r = 0; r < n; ++r) s(r, c) = kernel.entry(r, c);
  }
  return s;
}

VieKernel::VieKernel(VoxelGeometry geom, KernelParams params)
    : geom_(std::move(geom)), params_(std::move(params)) {
  params_.validate(geom_.size());
  self_.resize(static_cast<std::size_t>(geom_.size()));
  for (Index n = 0; n < geom_.size(); ++n) {
    self_[static_cast<std::size_t>(n)] = matrix_entry(n, n, geom_, params_);
  }
}

Complex VieKernel::entry(Index m, Index n) const {
  if (m == n) return self_[static_cast<std::size_t>(m)];
  return matrix_entry(m, n, geom_, params_);
}

EntryOracle VieKernel::oracle() const {
  return [this](Index m, Index n) { return entry(m, n); };
}

}  // namespace mrh2
