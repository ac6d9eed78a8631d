#include "mrh2/verify.hpp"

#include <algorithm>
#include <cmath>

#include "mrh2/h2_arith.hpp"

namespace mrh2 {

double basis_orthonormality(const ClusterBasis& basis) {
  const auto v = basis.materialize_all();
  double worst = 0.0;
  for (const DenseMatrix& m : v) {
    const Index k = m.cols();
    const double e = (m.adjoint() * m - DenseMatrix::Identity(k, k)).norm();
    worst = std::max(worst, e / static_cast<double>(std::max<Index>(k, 1)));
  }
  return worst;
}

double nestedness_defect(const ClusterBasis& basis) {
  const ClusterTree& tree = basis.tree();
  const auto v = basis.materialize_all();
  double worst = 0.0;
  for (const Cluster& t : tree.clusters()) {
    if (t.is_leaf()) continue;
    const DenseMatrix& vt = v[static_cast<std::size_t>(t.id)];
    for (Index c : t.children) {
      const Cluster& cc = tree.cluster(c);
      const DenseMatrix& vc = v[static_cast<std::size_t>(c)];
      const DenseMatrix part = vt.middleRows(cc.offset - t.offset, cc.size);
      const DenseMatrix coef = vc.adjoint() * part;
      worst = std::max(worst, (coef - basis.transfer(c)).norm());
      worst = std::max(worst, (part - vc * coef).norm());
    }
  }
  return worst;
}

double tiling_defect(const BlockClusterTree& bt) {
  const ClusterTree& tree = bt.tree();
  double area = 0.0;
  double bad = 0.0;
  for (const BlockNode& n : bt.nodes()) {
    const double a = static_cast<double>(tree.cluster(n.row).size) *
                     static_cast<double>(tree.cluster(n.col).size);
    if (n.kind != BlockKind::Subdivided) {
      area += a;
      continue;
    }
    double sub = 0.0;
    std::vector<std::pair<Index, Index>> seen;
    for (Index c : n.children) {
      const BlockNode& cn = bt.node(c);
      const bool row_ok = tree.cluster(cn.row).parent == n.row || cn.row == n.row;
      const bool col_ok = tree.cluster(cn.col).parent == n.col || cn.col == n.col;
      if (!row_ok || !col_ok) bad += 1.0;
      if (std::find(seen.begin(), seen.end(), std::make_pair(cn.row, cn.col)) != seen.end()) {
        bad += 1.0;
      }
      seen.emplace_back(cn.row, cn.col);
      sub += static_cast<double>(tree.cluster(cn.row).size) *
             static_cast<double>(tree.cluster(cn.col).size);
    }
    if (sub != a) bad += 1.0;
  }
  const double n = static_cast<double>(tree.num_points());
  return std::abs(area - n * n) + bad;
}

Index admissibility_violations(const BlockClusterTree& bt) {
  Index bad = 0;
  for (Index id : bt.admissible_leaves()) {
    const BlockNode& n = bt.node(id);
    if (!is_admissible(bt.tree().cluster(n.row), bt.tree().cluster(n.col), bt.eta())) ++bad;
  }
  return bad;
}

double matvec_linearity(const H2Matrix& m, std::uint64_t seed) {
  const Vector x = random_unit_vector(m.size(), seed);
  const Vector y = random_unit_vector(m.size(), seed + 1);
  const Complex a(0.7, -1.3);
  const Complex b(-2.1, 0.4);
  const Vector ref = a * matvec(m, x) + b * matvec(m, y);
  return (matvec(m, a * x + b * y) - ref).norm() / ref.norm();
}

double matvec_error(const H2Matrix& m, const DenseMatrix& d, int samples, std::uint64_t seed) {
  double worst = 0.0;
  for (int i = 0; i < samples; ++i) {
    const Vector x = random_unit_vector(m.size(), seed + static_cast<std::uint64_t>(i));
    const Vector ref = d * x;
    worst = std::max(worst, (matvec(m, x) - ref).norm() / ref.norm());
  }
  return worst;
}

double product_error(const H2Matrix& a, const H2Matrix& b, int samples, std::uint64_t seed) {
  const H2Matrix ab = h2_mul_formatted(a, b);
  double worst = 0.0;
  for (int i = 0; i < samples; ++i) {
    const Vector x = random_unit_vector(a.size(), seed + static_cast<std::uint64_t>(i));
    const Vector ref = matvec(a, matvec(b, x));
    worst = std::max(worst, (matvec(ab, x) - ref).norm() / ref.norm());
  }
  return worst;
}

double direct_solve_error(const H2Matrix& inv, const DenseMatrix& d, const Vector& e) {
  const Vector ref = d.partialPivLu().solve(e);
  return (apply_inverse_solve(inv, e) - ref).norm() / ref.norm();
}

std::vector<Check> structural_checks(const H2Matrix& m) {
  std::vector<Check> out;
  out.push_back({"basis orthonormality", basis_orthonormality(m.basis()), 1e-10});
  out.push_back({"nestedness", nestedness_defect(m.basis()), 1e-10});
  out.push_back({"block tiling", tiling_defect(m.blocks()), 0.0});
  out.push_back({"admissibility", static_cast<double>(admissibility_violations(m.blocks())), 0.0});
  out.push_back({"matvec linearity", matvec_linearity(m, 7), 1e-12});
  return out;
}

std::vector<Check> oracle_checks(const H2Matrix& m, const DenseMatrix& d, const Vector& e,
                                 double eps_acc, std::uint64_t seed) {
  std::vector<Check> out;
  out.push_back({"matvec vs dense", matvec_error(m, d, 20, seed), 10.0 * eps_acc});
  out.push_back({"formatted product", product_error(m, m, 20, seed + 100), 20.0 * eps_acc});
  out.push_back({"direct vs dense LU", direct_solve_error(h2_invert(m), d, e), 1e-2});
  return out;
}

}  // namespace mrh2
