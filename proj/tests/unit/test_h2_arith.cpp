#include <cmath>

#include "doctest.h"
#include "mrh2/h2_arith.hpp"
#include "mrh2/h2_build.hpp"

using namespace mrh2;

namespace {

const double kPi = std::acos(-1.0);
const double kEps = 1e-4;

VieKernel make(Shape shape, double extent, double vpw, Complex eps_r = 2.54) {
  const double k0 = 2.0 * kPi;
  VoxelGeometry g = generate_geometry(shape, extent, vpw, k0);
  KernelParams p = KernelParams::uniform(k0, eps_r, g.size());
  return VieKernel(std::move(g), std::move(p));
}

// rod with N = 164
const VieKernel& small_rod() {
  static const VieKernel k = make(Shape::Rod, 2.05, 20.0);
  return k;
}

DenseMatrix random_block(Index n, Index q, std::uint64_t seed) {
  DenseMatrix x(n, q);
  for (Index j = 0; j < q; ++j) x.col(j) = random_unit_vector(n, seed + static_cast<std::uint64_t>(j));
  return x;
}

double rel(const DenseMatrix& a, const DenseMatrix& b) { return (a - b).norm() / b.norm(); }

}  // namespace

TEST_CASE("matvec basics") {
  const H2Matrix h = build_h2(small_rod(), H2Options{});
  const Vector z = Vector::Zero(h.size());
  CHECK(matvec(h, z).norm() == 0.0);
  CHECK_THROWS_AS(matvec(h, Vector::Zero(h.size() + 1)), Error);

  const VieKernel vac = make(Shape::Rod, 2.05, 20.0, 1.0);
  const H2Matrix eye = build_h2(vac, H2Options{});
  const Vector x = random_unit_vector(eye.size(), 3);
  CHECK((matvec(eye, x) - x).norm() == 0.0);
}

TEST_CASE("matvec against the dense operator") {
  const H2Matrix h = build_h2(small_rod(), H2Options{});
  const DenseMatrix d = assemble_dense(small_rod().geometry(), small_rod().params());
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Vector x = random_unit_vector(h.size(), 100 + s);
    CHECK(rel(matvec(h, x), d * x) <= 10.0 * kEps);
  }
}

TEST_CASE("matvec is linear") {
  const H2Matrix h = build_h2(make(Shape::Slab, 1.0, 20.0), H2Options{});
  const Vector x = random_unit_vector(h.size(), 1);
  const Vector y = random_unit_vector(h.size(), 2);
  const Complex a(1.5, -0.25);
  const Complex b(-0.5, 2.0);
  const Vector ref = a * matvec(h, x) + b * matvec(h, y);
  CHECK(rel(matvec(h, a * x + b * y), ref) <= 1e-12);
}

TEST_CASE("block products") {
  const H2Matrix h = build_h2(small_rod(), H2Options{});
  const Index n = h.size();
  const Vector x = random_unit_vector(n, 9);
  CHECK(rel(matmat_apply(h, DenseMatrix(x)), DenseMatrix(matvec(h, x))) <= 1e-14);
  CHECK(matmat_apply(h, DenseMatrix::Zero(n, 4)).norm() == 0.0);
  const DenseMatrix d = assemble_dense(small_rod().geometry(), small_rod().params());
  CHECK(rel(matmat_apply(h, DenseMatrix::Identity(n, n)), d) <= 10.0 * kEps);
  const DenseMatrix xs = random_block(n, 5, 20);
  const DenseMatrix ys = matmat_apply(h, xs);
  for (Index j = 0; j < 5; ++j) CHECK(rel(ys.col(j), matvec(h, xs.col(j))) <= 1e-13);
}

TEST_CASE("forward transform and sub-block products") {
  const H2Matrix h = build_h2(make(Shape::Rod, 4.0, 20.0), H2Options{});
  const auto v = h.basis().materialize_all();
  const DenseMatrix x = random_block(h.size(), 2, 30);
  const ForwardCoefficients f = forward_transform(h.basis(), x);
  for (const Cluster& c : h.tree().clusters()) {
    const DenseMatrix ref = v[static_cast<std::size_t>(c.id)].transpose() * x.middleRows(c.offset, c.size);
    CHECK((f.coef[static_cast<std::size_t>(c.id)] - ref).norm() <= 1e-13 * std::max(1.0, ref.norm()));
  }
  // the materialized matrix in tree ordering
  const auto& perm = h.tree().permutation();
  const DenseMatrix full = h.materialize();
  DenseMatrix tree_m(h.size(), h.size());
  for (Index i = 0; i < h.size(); ++i)
    for (Index j = 0; j < h.size(); ++j) tree_m(i, j) = full(perm[i], perm[j]);
  for (Index id = 0; id < h.blocks().num_nodes(); id += 7) {
    const BlockNode& n = h.blocks().node(id);
    const Cluster& t = h.tree().cluster(n.row);
    const Cluster& s = h.tree().cluster(n.col);
    const DenseMatrix blk = tree_m.block(t.offset, s.offset, t.size, s.size);
    const DenseMatrix xs = random_block(s.size, 2, 40);
    const DenseMatrix xt = random_block(t.size, 2, 50);
    CHECK(rel(matmat_subblock(h, id, xs), blk * xs) <= 1e-12);
    CHECK(rel(matmat_subblock(h, id, xt, true), blk.transpose() * xt) <= 1e-12);
  }
}

TEST_CASE("formatted addition") {
  const H2Matrix a = build_h2(small_rod(), H2Options{});
  const DenseMatrix ma = a.materialize();
  H2Matrix t = a;
  H2Matrix zero = a;
  zero.set_zero();
  h2_add_formatted(t, zero);
  CHECK((t.materialize() - ma).norm() == 0.0);
  h2_add_formatted(t, a, -1.0);
  CHECK(t.materialize().norm() == 0.0);

  const VieKernel other = make(Shape::Rod, 2.05, 20.0, Complex(4.0, -1.0));
  const DenseMatrix dm = assemble_dense(other.geometry(), other.params());
  const H2Matrix b = project_dense(a.blocks_ptr(), a.basis_ptr(), dm);
  H2Matrix s = a;
  h2_add_formatted(s, b);
  CHECK(rel(s.materialize(), ma + b.materialize()) <= 1e-14);

  const H2Matrix foreign = build_h2(small_rod(), H2Options{});
  CHECK_THROWS_AS(h2_add_formatted(s, foreign), Error);
}

TEST_CASE("formatted multiplication") {
  const VieKernel k = make(Shape::Rod, 6.4, 20.0);
  REQUIRE(k.size() == 512);
  const H2Matrix a = build_h2(k, H2Options{});
  const DenseMatrix d = assemble_dense(k.geometry(), k.params());

  SUBCASE("identity factor") {
    const H2Matrix eye = project_dense(a.blocks_ptr(), a.basis_ptr(), DenseMatrix::Identity(512, 512));
    CHECK(rel(h2_mul_formatted(a, eye).materialize(), a.materialize()) <= 1e-12);
    CHECK(rel(h2_mul_formatted(eye, a).materialize(), a.materialize()) <= 1e-12);
  }
  SUBCASE("zero factors") {
    H2Matrix z = a;
    z.set_zero();
    CHECK(h2_mul_formatted(z, z).materialize().norm() == 0.0);
  }
  SUBCASE("dense product oracle") {
    CHECK(rel(h2_mul_formatted(a, a).materialize(), d * d) <= 20.0 * kEps);
  }
  SUBCASE("against nested matvecs") {
    const H2Matrix ab = h2_mul_formatted(a, a);
    for (std::uint64_t s = 0; s < 5; ++s) {
      const Vector x = random_unit_vector(512, 60 + s);
      CHECK(rel(matvec(ab, x), matvec(a, matvec(a, x))) <= 20.0 * kEps);
    }
  }
}

TEST_CASE("inverse of the identity") {
  const H2Matrix eye = build_h2(make(Shape::Rod, 2.05, 20.0, 1.0), H2Options{});
  const H2Matrix inv = h2_invert(eye);
  CHECK((inv.materialize() - DenseMatrix::Identity(eye.size(), eye.size())).norm() <= 1e-15);
  const Vector e = random_unit_vector(eye.size(), 5);
  CHECK((apply_inverse_solve(inv, e) - e).norm() <= 1e-15);
}

TEST_CASE("inverse of a small rod") {
  const VieKernel k = make(Shape::Rod, 6.4, 20.0);
  const H2Matrix h = build_h2(k, H2Options{});
  const DenseMatrix d = assemble_dense(k.geometry(), k.params());
  const H2Matrix inv = h2_invert(h);
  CHECK(inv.same_structure(h));
  const DenseMatrix id = DenseMatrix::Identity(h.size(), h.size());
  const double fro = (id - d * inv.materialize()).norm() / std::sqrt(static_cast<double>(h.size()));
  CHECK(fro <= 5e-2);
  const double est = inverse_residual_estimate([&](const Vector& v) { return Vector(d * v); },
                                               [&](const Vector& v) { return matvec(inv, v); }, h.size());
  CHECK(est <= 5e-2);
  const Vector e = plane_wave_rhs(k.geometry(), 2.0 * kPi, {1.0, 0.0, 0.0});
  const Vector ref = d.partialPivLu().solve(e);
  CHECK(rel(apply_inverse_solve(inv, e), ref) <= 1e-2);
  const DenseMatrix es = random_block(h.size(), 3, 70);
  const DenseMatrix xs = apply_inverse_solve(inv, es);
  for (Index j = 0; j < 3; ++j) CHECK(rel(xs.col(j), matvec(inv, es.col(j))) <= 1e-13);
}

TEST_CASE("inverse in place needs a matching workspace") {
  H2Matrix s = build_h2(small_rod(), H2Options{});
  H2Matrix other = build_h2(small_rod(), H2Options{});
  CHECK_THROWS_AS(h2_invert_inplace(s, other), Error);
}

TEST_CASE("singular leaf is reported") {
  const VieKernel k = make(Shape::Rod, 2.05, 20.0);
  H2Matrix h = build_h2(k, H2Options{});
  for (Index id : h.blocks().inadmissible_leaves()) h.block(id).setZero();
  CHECK_THROWS_AS(h2_invert(h), SingularMatrixError);
}

TEST_CASE("cube array inverse residual") {
  const VieKernel k = make(Shape::CubeArray, 2.0, 20.0);
  REQUIRE(k.size() == 1728);
  H2Options o;
  o.inverse_aware = true;
  const H2Matrix h = build_h2(k, o);
  const H2Matrix inv = h2_invert(h);
  const double est = inverse_residual_estimate([&](const Vector& v) { return matvec(h, v); },
                                               [&](const Vector& v) { return matvec(inv, v); }, h.size());
  CHECK(est <= 5e-2);
}

TEST_CASE("BiCGStab") {
  const auto identity = [](const Vector& v) { return v; };
  const Vector b = random_unit_vector(40, 1);
  SolveReport rep;
  const Vector x = bicgstab_solve(identity, b, 1e-3, 10, &rep);
  CHECK(rep.converged);
  CHECK(rep.iterations <= 1);
  CHECK((x - b).norm() <= 1e-15);

  const Vector zero = bicgstab_solve(identity, Vector::Zero(40), 1e-3, 10, &rep);
  CHECK(rep.iterations == 0);
  CHECK(rep.converged);
  CHECK(zero.norm() == 0.0);

  CHECK_THROWS_AS(bicgstab_solve(identity, b, 0.0, 10), Error);
  CHECK_THROWS_AS(bicgstab_solve(identity, b, 1e-3, 0), Error);

  const auto rotate = [](const Vector& v) {
    Vector y(v.size());
    for (Index i = 0; i < v.size(); ++i) y(i) = v((i + 1) % v.size()) * Complex(0.0, 1.0);
    return y;
  };
  bicgstab_solve(rotate, b, 1e-12, 2, &rep);
  CHECK_FALSE(rep.converged);
  CHECK(rep.iterations == 2);
}

TEST_CASE("direct and iterative solutions agree") {
  const VieKernel& k = small_rod();
  H2Options o;
  o.inverse_aware = true;
  const H2Matrix h = build_h2(k, o);
  const Vector e = plane_wave_rhs(k.geometry(), 2.0 * kPi, {1.0, 0.0, 0.0});
  SolveReport rep;
  const double tol = 1e-3;
  const Vector xi = bicgstab_solve([&](const Vector& v) { return matvec(h, v); }, e, tol, 100, &rep);
  CHECK(rep.converged);
  CHECK(rep.residual_history.back() <= tol);
  const Vector xd = apply_inverse_solve(h2_invert(h), e);
  CHECK(rel(xi, xd) <= std::max(10.0 * tol, 10.0 * kEps));
}
