#include "doctest.h"
#include "mrh2/bench.hpp"

using namespace mrh2;

// N = 164, 328, 656, 1312, 2624 on the 20 voxel per wavelength rod.
TEST_CASE("scaling on the short rod sweep") {
  ExperimentConfig c;
  c.experiment = "short-rod";
  c.extents = {2.05, 4.1, 8.2, 16.4, 32.8};
  c.voxels_per_wavelength = 20.0;
  c.solver = SolverKind::Direct;
  const ScalingStudyResult r = run_scaling_study(c);
  const std::vector<Index> expect{164, 328, 656, 1312, 2624};
  for (std::size_t i = 0; i < expect.size(); ++i) CHECK(r.records[i].n == expect[i]);
  for (std::size_t i = 1; i < expect.size(); ++i) {
    CHECK(*r.records[i].matvec_s / *r.records[i - 1].matvec_s <= 2.6);
  }
  MESSAGE("matvec slope " << r.slopes.matvec << ", inverse slope " << r.slopes.inverse);
  CHECK(r.slopes.matvec <= 1.3);
  CHECK(r.slopes.inverse <= 1.35);
}
