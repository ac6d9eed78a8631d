#pragma once
//
// Scalar Lippmann-Schwinger volume integral operator on voxel lattices.
//
//   S_mn = delta_mn - k0^2 chi_n G_mn,
//   G_mn = V_n exp(-j k0 r_mn) / (4 pi r_mn)   (m != n)
//   G_mm = integral of the Green's function over the equal-volume sphere
//

#include <array>
#include <string>
#include <vector>

#include "mrh2/clustering.hpp"
#include "mrh2/linalg.hpp"

namespace mrh2 {

enum class Shape { Rod, Slab, CubeArray, TwoBody };

Shape parse_shape(const std::string& tag);
std::string shape_name(Shape s);

struct VoxelGeometry {
  std::vector<Point3> centers;
  std::vector<double> volumes;
  Shape shape = Shape::Rod;
  std::array<Index, 3> dims{0, 0, 0};  // lattice extent of one body, in voxels
  double wavelength = 1.0;
  double electrical_size = 0.0;  // in wavelengths, as requested by the caller
  Index first_body = 0;  // TwoBody only: voxel count of the first body

  Index size() const { return static_cast<Index>(centers.size()); }
};

/// Uniform voxel lattice for the benchmark shapes.
///
/// rod:        length = extent wavelengths along x, lambda/10 square cross-section
/// slab:       extent x extent wavelengths in x-y, lambda/10 thick
/// cube_array: extent^3 cubes of 0.3 lambda edge with 0.3 lambda gaps
VoxelGeometry generate_geometry(Shape shape, double extent, double voxels_per_wavelength,
                                double k0);

/// Two 1 m bodies separated along x by a 2 m gap, sampled at the given
/// electrical size. dim = 1 (rods), 2 (plates) or 3 (cubes).
VoxelGeometry two_body_geometry(int dim, double electrical_size, double voxels_per_wavelength);

struct KernelParams {
  double k0 = 0.0;
  std::vector<Complex> eps_r;  // one per voxel

  static KernelParams uniform(double k0, Complex eps_r, Index n);
  Complex chi(Index n) const { return eps_r[static_cast<std::size_t>(n)] - 1.0; }
  void validate(Index n) const;
};

/// Volume integral of exp(-j k0 r) / (4 pi r) over the sphere of equal volume.
Complex self_term(double volume, double k0);

Complex matrix_entry(Index m, Index n, const VoxelGeometry& geom, const KernelParams& params);

Vector plane_wave_rhs(const VoxelGeometry& geom, double k0, const std::array<double, 3>& direction);

inline constexpr Index kDefaultDenseCap = 6000;

DenseMatrix assemble_dense(const VoxelGeometry& geom, const KernelParams& params,
                           Index cap = kDefaultDenseCap);

/// Geometry and material bundled into an entry oracle over original indices.
class VieKernel {
 public:
  VieKernel(VoxelGeometry geom, KernelParams params);

  const VoxelGeometry& geometry() const { return geom_; }
  const KernelParams& params() const { return params_; }
  Index size() const { return geom_.size(); }

  Complex entry(Index m, Index n) const;
  EntryOracle oracle() const;

 private:
  VoxelGeometry geom_;
  KernelParams params_;
  std::vector<Complex> self_;
};

}  // namespace mrh2
