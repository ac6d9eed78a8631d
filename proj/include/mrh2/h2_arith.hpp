#pragma once
//
// Arithmetic on H2 matrices with fixed block structure and cluster bases:
// products with vectors and blocks of vectors, formatted addition and
// multiplication, the recursive block inverse, and BiCGStab.
//

#include <cstdint>
#include <functional>
#include <vector>

#include "mrh2/h2_matrix.hpp"

namespace mrh2 {

/// Per-cluster coefficients V_s^T x|_s, one k_s x q block per cluster.
struct ForwardCoefficients {
  std::vector<DenseMatrix> coef;
};

/// Forward transform of x (tree ordering, N x q), leaves to root.
ForwardCoefficients forward_transform(const ClusterBasis& basis, const DenseMatrix& x_tree);

/// y = m x for N x q blocks in tree ordering.
DenseMatrix matmat_tree(const H2Matrix& m, const DenseMatrix& x_tree);

/// y = B x (or B^T x) for the block B of one block tree node, with x and y
/// in tree ordering local to the node's column and row clusters.
DenseMatrix matmat_subblock(const H2Matrix& m, Index node, const DenseMatrix& x_local,
                            bool transposed = false);

/// y = m x in original ordering.
DenseMatrix matmat_apply(const H2Matrix& m, const DenseMatrix& x);
Vector matvec(const H2Matrix& m, const Vector& x);

/// target += sign * addend on identical structure and bases.
void h2_add_formatted(H2Matrix& target, const H2Matrix& addend, Complex sign = 1.0);

/// c(c_node) += alpha * a(a_node) * b(b_node), projected onto the structure
/// and bases of c. The three nodes must cover (t, r), (r, s) and (t, s).
void h2_mul_add(Complex alpha, const H2Matrix& a, Index a_node, const H2Matrix& b, Index b_node,
                H2Matrix& c, Index c_node);

/// Formatted product on the structure and bases of a.
H2Matrix h2_mul_formatted(const H2Matrix& a, const H2Matrix& b);

/// Recursive 2 x 2 block inverse in formatted arithmetic. The result shares
/// structure and bases with m.
H2Matrix h2_invert(const H2Matrix& m);

/// Same, operating in place on s with a zeroed workspace x of equal structure.
void h2_invert_inplace(H2Matrix& s, H2Matrix& x);

struct SolveReport {
  Index iterations = 0;
  std::vector<double> residual_history;  // relative residuals, one per iteration
  bool converged = false;
  bool restarted = false;
  double wall_time = 0.0;
};

using LinearOperator = std::function<Vector(const Vector&)>;

/// Unpreconditioned BiCGStab. Stops when |r| / |rhs| <= tol.
Vector bicgstab_solve(const LinearOperator& apply, const Vector& rhs, double tol, Index max_iter,
                      SolveReport* report = nullptr);

/// inv * e, for one or several right-hand sides (original ordering).
Vector apply_inverse_solve(const H2Matrix& inv, const Vector& e);
DenseMatrix apply_inverse_solve(const H2Matrix& inv, const DenseMatrix& e);

/// max over random unit vectors v of |v - S (S^-1 v)|_2.
double inverse_residual_estimate(const LinearOperator& apply_s, const LinearOperator& apply_inv,
                                 Index n, int samples = 20, std::uint64_t seed = 1);

/// Random complex vector with unit 2-norm.
Vector random_unit_vector(Index n, std::uint64_t seed);

}  // namespace mrh2
