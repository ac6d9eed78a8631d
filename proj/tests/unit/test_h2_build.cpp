#include <cmath>
#include <memory>

#include "doctest.h"
#include "mrh2/h2_build.hpp"

using namespace mrh2;

namespace {

const double kPi = std::acos(-1.0);

VieKernel rod_kernel(double extent, double vpw, Complex eps_r = 2.54) {
  const double k0 = 2.0 * kPi;
  VoxelGeometry g = generate_geometry(Shape::Rod, extent, vpw, k0);
  KernelParams p = KernelParams::uniform(k0, eps_r, g.size());
  return VieKernel(std::move(g), std::move(p));
}

std::shared_ptr<BlockClusterTree> block_tree(const VoxelGeometry& g, Index n_min) {
  auto t = std::make_shared<ClusterTree>(g.centers, n_min);
  return std::make_shared<BlockClusterTree>(t, 1.0);
}

CompressionParams eps(double e) {
  CompressionParams p;
  p.eps_aca = e;
  p.eps_acc = e;
  return p;
}

// |(I - V V^H) M|_F / |M|_F
double outside(const DenseMatrix& v, const DenseMatrix& m) {
  return (m - v * (v.adjoint() * m)).norm() / m.norm();
}

}  // namespace

TEST_CASE("stage I factors of a rod at 1 wavelength") {
  const VieKernel k = rod_kernel(1.0, 40.0);
  const auto bt = block_tree(k.geometry(), 32);
  const auto abs = build_all_cluster_ab(*bt, k.oracle(), eps(1e-5));
  REQUIRE(abs.size() == static_cast<std::size_t>(bt->tree().num_clusters()));
  bool strictly_smaller = false;
  for (const ClusterAB& ab : abs) {
    const Index t = ab.cluster;
    if (bt->admissible_in_row(t).empty()) {
      CHECK(ab.rank() == 0);
      continue;
    }
    const DenseMatrix g = assemble_grouped_block(*bt, k.oracle(), t);
    CHECK((g - ab.factor.dense()).norm() <= 1e-4 * g.norm());
    CHECK(ab.offsets.back() == ab.factor.b.rows());
    CHECK((ab.btb - ab.factor.b.transpose() * ab.factor.b.conjugate()).norm() <=
          1e-12 * ab.btb.norm());
    Index sum = 0;
    for (std::size_t i = 0; i < ab.blocks.size(); ++i) {
      const DenseMatrix blk = g.middleCols(ab.offsets[i], ab.offsets[i + 1] - ab.offsets[i]);
      sum += eps_rank(singular_values(blk), 1e-5);
    }
    CHECK(ab.rank() <= sum + 1);
    if (ab.rank() < sum) strictly_smaller = true;
  }
  CHECK(strictly_smaller);
}

TEST_CASE("leaf bases of an exact low rank operator span its column space") {
  const VieKernel k = rod_kernel(2.0, 20.0);
  const Index n = k.size();
  // symmetric like the VIE operator, so rows and columns share one basis
  DenseMatrix u(n, 3);
  for (Index i = 0; i < n; ++i) {
    const double x = k.geometry().centers[i].x;
    u.row(i) << 1.0, Complex(x, 0.5), std::exp(Complex(0.0, 2.0 * x));
  }
  const EntryOracle entry = [&](Index i, Index j) { return Complex(u.row(i) * u.row(j).transpose()); };
  const auto bt = block_tree(k.geometry(), 16);
  // above the sqrt(machine epsilon) floor of the Gram eigenvalues
  const auto abs = build_all_cluster_ab(*bt, entry, eps(1e-6));
  NestedBasisBuilder nb(*bt, abs, 1e-6);
  nb.run();
  const ClusterTree& tree = bt->tree();
  for (const Cluster& c : tree.clusters()) {
    if (!c.is_leaf()) continue;
    bool content = false;
    for (Index j : tree.path_to(c.id)) content = content || !bt->admissible_in_row(j).empty();
    const DenseMatrix v = nb.basis()->leaf(c.id);
    if (!content) continue;
    CHECK(v.cols() == 3);
    DenseMatrix ut(c.size, 3);
    for (Index i = 0; i < c.size; ++i) ut.row(i) = u.row(tree.permutation()[c.offset + i]);
    CHECK(outside(v, ut) <= 1e-10);
  }
}

TEST_CASE("leaf Gram size follows the leaf size") {
  for (double extent : {2.0, 8.0}) {
    const VieKernel k = rod_kernel(extent, 20.0);
    const auto bt = block_tree(k.geometry(), 32);
    const auto abs = build_all_cluster_ab(*bt, k.oracle(), eps(1e-4));
    NestedBasisBuilder nb(*bt, abs, 1e-4);
    for (const Cluster& c : bt->tree().clusters()) {
      if (!c.is_leaf()) continue;
      const DenseMatrix g = nb.leaf_gram(c.id);
      CHECK(g.rows() == c.size);
      CHECK(g.rows() <= 32);
    }
  }
}

TEST_CASE("nested parent basis matches the direct parent Gram") {
  const VieKernel k = rod_kernel(4.0, 20.0);
  const double e = 1e-4;
  const auto fine = block_tree(k.geometry(), 16);
  const auto coarse = block_tree(k.geometry(), 32);
  const auto abs_f = build_all_cluster_ab(*fine, k.oracle(), eps(e));
  const auto abs_c = build_all_cluster_ab(*coarse, k.oracle(), eps(e));
  NestedBasisBuilder nf(*fine, abs_f, e);
  nf.run();
  NestedBasisBuilder nc(*coarse, abs_c, e);
  int compared = 0;
  for (const Cluster& c : coarse->tree().clusters()) {
    if (!c.is_leaf()) continue;
    const Cluster* match = nullptr;
    for (const Cluster& f : fine->tree().clusters()) {
      if (f.offset == c.offset && f.size == c.size) match = &f;
    }
    REQUIRE(match != nullptr);
    const Cluster& f = *match;
    if (f.is_leaf()) continue;
    const DenseMatrix g = nc.leaf_gram(c.id);
    if (g.norm() == 0.0) continue;
    const DenseMatrix v = nf.basis()->materialize(f.id);
    const DenseMatrix q = DenseMatrix::Identity(v.rows(), v.rows()) - v * v.adjoint();
    // Gram content outside the nested basis, in the units of the block
    CHECK(std::sqrt((q * g * q).norm() / g.norm()) <= 10.0 * e);
    ++compared;
  }
  CHECK(compared > 0);
}

TEST_CASE("coupling matrices reproduce the stage I slices") {
  const VieKernel k = rod_kernel(4.0, 20.0);
  const double e = 1e-5;
  const auto bt = block_tree(k.geometry(), 32);
  const auto abs = build_all_cluster_ab(*bt, k.oracle(), eps(e));
  NestedBasisBuilder nb(*bt, abs, e);
  nb.run();
  const auto coupling = nb.build_coupling();
  const auto v = nb.basis()->materialize_all();
  for (const ClusterAB& ab : abs) {
    for (std::size_t i = 0; i < ab.blocks.size(); ++i) {
      const Index id = ab.blocks[i];
      const BlockNode& n = bt->node(id);
      const DenseMatrix& s = coupling[static_cast<std::size_t>(id)];
      CHECK(s.rows() == nb.basis()->rank(n.row));
      CHECK(s.cols() == nb.basis()->rank(n.col));
      const DenseMatrix slice =
          ab.factor.a * ab.factor.b.middleRows(ab.offsets[i], ab.offsets[i + 1] - ab.offsets[i]).transpose();
      const DenseMatrix recon = v[static_cast<std::size_t>(n.row)] * s * v[static_cast<std::size_t>(n.col)].transpose();
      CHECK((recon - slice).norm() <= 10.0 * e * slice.norm());
    }
  }
}

TEST_CASE("vacuum rod is the identity") {
  const VieKernel k = rod_kernel(2.0, 20.0, 1.0);
  const H2Matrix h = build_h2(k, H2Options{});
  CHECK(h.basis().max_rank() == 0);
  CHECK((h.materialize() - DenseMatrix::Identity(k.size(), k.size())).norm() == 0.0);
  const DenseMatrix d = assemble_dense(k.geometry(), k.params());
  CHECK(rep_error(h, d) == 0.0);
}

TEST_CASE("representation error on desk-scale geometries") {
  const double k0 = 2.0 * kPi;
  SUBCASE("rod N = 164") {
    const VieKernel k = rod_kernel(2.05, 20.0);
    REQUIRE(k.size() == 164);
    const H2Matrix h = build_h2(k, H2Options{});
    CHECK(rep_error(h, assemble_dense(k.geometry(), k.params())) <= 5e-3);
  }
  SUBCASE("cube array N = 3024 analog") {
    VoxelGeometry g = generate_geometry(Shape::CubeArray, 2.0, 23.0, k0);
    REQUIRE(g.size() == 8 * 7 * 7 * 7);
    KernelParams p = KernelParams::uniform(k0, 2.54, g.size());
    const VieKernel k(std::move(g), std::move(p));
    const H2Matrix h = build_h2(k, H2Options{});
    CHECK(rep_error(h, assemble_dense(k.geometry(), k.params())) < 8e-3);
  }
}

TEST_CASE("representation error against tolerance") {
  const VieKernel k = rod_kernel(1.0, 40.0);
  const DenseMatrix d = assemble_dense(k.geometry(), k.params());
  H2Options o;
  o.compression = eps(1e-3);
  const double e3 = rep_error(build_h2(k, o), d);
  CHECK(e3 <= 1e-2);
  o.compression = eps(1e-5);
  const double e5 = rep_error(build_h2(k, o), d);
  CHECK(e5 <= e3);
  o.compression = eps(0.0);
  CHECK(rep_error(build_h2(k, o), d) <= 1e-12);
}

TEST_CASE("orthonormal and nested bases") {
  const VieKernel k = rod_kernel(8.0, 20.0);
  const H2Matrix h = build_h2(k, H2Options{});
  const auto v = h.basis().materialize_all();
  for (const Cluster& c : h.tree().clusters()) {
    const DenseMatrix& vc = v[static_cast<std::size_t>(c.id)];
    const Index r = vc.cols();
    CHECK((vc.adjoint() * vc - DenseMatrix::Identity(r, r)).norm() <= 1e-10 * std::max<Index>(r, 1));
    CHECK((vc - h.basis().materialize(c.id)).norm() == 0.0);
  }
}

TEST_CASE("projecting a dense matrix onto its own bases") {
  const VieKernel k = rod_kernel(2.0, 20.0);
  const DenseMatrix d = assemble_dense(k.geometry(), k.params());
  const H2Matrix h = build_h2(k, H2Options{});
  const H2Matrix p = project_dense(h.blocks_ptr(), h.basis_ptr(), d);
  CHECK(rep_error(p, d) <= rep_error(h, d) * (1.0 + 1e-9));
}

TEST_CASE("rod ranks stay flat across electrical sizes") {
  Index lo = 1 << 20;
  Index hi = 0;
  for (double extent : {1.0, 2.0, 4.0, 8.0, 16.0}) {
    const VieKernel k = rod_kernel(extent, 40.0);
    H2Options o;
    o.compression = eps(1e-5);
    H2BuildStats st;
    build_h2(k, o, &st);
    lo = std::min(lo, st.max_ab_rank);
    hi = std::max(hi, st.max_ab_rank);
  }
  CHECK(hi - lo <= 3);
}
