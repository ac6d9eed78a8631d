#pragma once
//
// Two-stage construction of a minimal-rank H2 matrix from an entry oracle.
//
// Stage I groups all admissible blocks of a row cluster t into one wide block
// G^t = [G(t,s_1) ... G(t,s_p)] and compresses it with ACA followed by a
// reduced SVD, giving one a * b^T factor per cluster.
//
// Stage II builds orthonormal nested cluster bases bottom-up from Gram
// matrices of those factors and projects every admissible block onto them to
// obtain the coupling matrices.
//

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "mrh2/h2_matrix.hpp"
#include "mrh2/vie_kernel.hpp"

namespace mrh2 {

/// Stage I factor of the grouped admissible row block of one cluster.
struct ClusterAB {
  Index cluster = -1;
  LowRankFactor factor;         // a: #t x k, b: (#s_1 + ... + #s_p) x k
  std::vector<Index> blocks;    // admissible node ids in the row of `cluster`
  std::vector<Index> offsets;   // row of b where each block starts; back() == b.rows()
  DenseMatrix btb;              // b^T conj(b), k x k
  DenseMatrix ata;              // a^T conj(a), k x k

  Index rank() const { return factor.rank(); }
  /// Row offset in b of the given admissible node.
  Index slot(Index node) const;
};

/// Column positions (tree ordering) of the grouped block of cluster t.
std::vector<Index> grouped_columns(const BlockClusterTree& bt, Index t);

/// Dense G^t in tree ordering, for verification.
DenseMatrix assemble_grouped_block(const BlockClusterTree& bt, const EntryOracle& entry, Index t);

/// Stage I for every cluster. `entry` is indexed by original point indices.
std::vector<ClusterAB> build_all_cluster_ab(const BlockClusterTree& bt, const EntryOracle& entry,
                                            const CompressionParams& params);

/// Stage II: nested bases and couplings.
///
/// Besides the Gram terms of a cluster's own row factor and of the rows it
/// owns in its ancestors' factors, the Gram matrix also receives the
/// transposed column slices of every admissible block whose column cluster
/// is the cluster or one of its ancestors. The one basis family then
/// represents both sides of every block even when the operator is not
/// symmetric.
class NestedBasisBuilder {
 public:
  NestedBasisBuilder(const BlockClusterTree& bt, const std::vector<ClusterAB>& abs, double eps_acc);

  /// Leaf Gram matrix G_2^t (#t x #t).
  DenseMatrix leaf_gram(Index t) const;

  /// Solves with the diagonal block S(j,j) of cluster j (tree ordering),
  /// or with its transpose.
  using DiagonalSolver =
      std::function<DenseMatrix(Index cluster, const DenseMatrix& rhs, bool transposed)>;

  /// Adds inverse-aware content to every Gram matrix. For each cluster j the
  /// far-field row content F_j (with F_j F_j^H = a_j b_j^T conj(b_j) a_j^H)
  /// is mapped to S(j,j)^-1 F_j, and the column content likewise through
  /// S(j,j)^-T. Off-diagonal blocks of S^-1 satisfy
  /// X(j,s) = -S(j,j)^-1 sum_r S(j,r) X(r,s), so their ranges lie in these
  /// mapped spaces rather than in the far-field spaces of S itself. Bases
  /// that contain both represent S and its inverse.
  void set_diagonal_solver(const DiagonalSolver& solve);

  /// Leaf basis from the truncated eigendecomposition of leaf_gram(t).
  DenseMatrix build_leaf_basis(Index t);

  struct Transfer {
    DenseMatrix first;   // k_{t1} x k_t
    DenseMatrix second;  // k_{t2} x k_t
  };
  /// Projected Gram of a non-leaf cluster, (k_t1 + k_t2) square.
  DenseMatrix projected_gram(Index t) const;
  /// Transfers of a non-leaf cluster; both children must be done.
  Transfer build_transfer(Index t);

  /// Runs leaf and transfer construction level by level, deepest first.
  void run();

  /// Coupling per block node (admissible nodes only, others empty).
  std::vector<DenseMatrix> build_coupling() const;

  std::shared_ptr<ClusterBasis> basis() const { return basis_; }

 private:
  // Slices of the stage I factors that involve the rows of cluster c, per
  // ancestor level: the row factors a_j restricted to c, and the b rows of
  // each block whose column cluster is the ancestor, restricted to c.
  struct Slices {
    std::vector<DenseMatrix> row;               // per ancestor level
    std::vector<std::vector<DenseMatrix>> col;  // per ancestor level, per block in that column
    std::vector<DenseMatrix> extra;             // unweighted content, per ancestor level
  };
  Slices raw_slices(Index c) const;
  Slices stacked_children(Index c) const;
  DenseMatrix gram_of(Index c, const Slices& s) const;
  void store_projection(Index c, const DenseMatrix& p, const Slices& s);

  const BlockClusterTree& bt_;
  const std::vector<ClusterAB>& abs_;
  double eps_acc_;
  std::shared_ptr<ClusterBasis> basis_;
  std::vector<DenseMatrix> extra_;  // per cluster, #j rows; empty without a solver
  std::vector<bool> done_;
  std::vector<Slices> proj_;                  // V_c^H times the slices, freed upward
  std::vector<DenseMatrix> self_row_;          // V_c^H a_c
  std::vector<std::vector<DenseMatrix>> self_col_;  // V_c^H b slices of blocks in column c
};

struct H2Options {
  Index n_min = 32;
  double eta = 1.0;
  CompressionParams compression;
  bool inverse_aware = false;  // see NestedBasisBuilder::set_diagonal_solver
};

struct H2BuildStats {
  double stage1_s = 0.0;
  double stage2_s = 0.0;
  double dense_s = 0.0;
  double total_s = 0.0;
  Index max_ab_rank = 0;
  std::vector<Index> ab_rank;  // per cluster
};

/// Builds the H2 matrix on a given block tree. `entry` uses original indices.
H2Matrix build_h2(std::shared_ptr<const BlockClusterTree> bt, const EntryOracle& entry,
                  const CompressionParams& params, H2BuildStats* stats = nullptr,
                  bool inverse_aware = false);

H2Matrix build_h2(std::span<const Point3> points, const EntryOracle& entry,
                  const H2Options& opts, H2BuildStats* stats = nullptr);

H2Matrix build_h2(const VieKernel& kernel, const H2Options& opts, H2BuildStats* stats = nullptr);

/// |dense - materialize(h2)|_F / |dense|_F with dense in original ordering.
double rep_error(const H2Matrix& h2, const DenseMatrix& dense, Index cap = kDefaultDenseCap);

/// Best approximation of a dense matrix (original ordering) in the given
/// block structure and bases: couplings V_t^H M(t,s) conj(V_s).
H2Matrix project_dense(std::shared_ptr<const BlockClusterTree> bt,
                       std::shared_ptr<const ClusterBasis> basis, const DenseMatrix& m);

}  // namespace mrh2
