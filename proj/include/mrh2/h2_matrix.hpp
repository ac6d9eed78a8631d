#pragma once

#include <memory>
#include <vector>

#include "mrh2/clustering.hpp"
#include "mrh2/linalg.hpp"

namespace mrh2 {

/// Nested cluster basis: explicit V at leaves, transfer matrices elsewhere.
///
/// For a non-leaf cluster t with children t1, t2
///   V_t = [ V_t1 T_t1 ; V_t2 T_t2 ]
/// where T_c (k_c x k_t) is stored with the child c. All V_t have orthonormal
/// columns (V^H V = I). gram_t holds V^T V, needed because products of
/// complex bases do not collapse to the identity under plain transposition.
class ClusterBasis {
 public:
  explicit ClusterBasis(std::shared_ptr<const ClusterTree> tree);

  const ClusterTree& tree() const { return *tree_; }

  Index rank(Index t) const { return rank_[static_cast<std::size_t>(t)]; }
  const DenseMatrix& leaf(Index t) const { return leaf_[static_cast<std::size_t>(t)]; }
  const DenseMatrix& transfer(Index t) const { return transfer_[static_cast<std::size_t>(t)]; }
  const DenseMatrix& gram_t(Index t) const { return gram_t_[static_cast<std::size_t>(t)]; }

  void set_leaf(Index t, DenseMatrix v);
  void set_transfer(Index child, DenseMatrix t);
  void set_rank(Index t, Index k) { rank_[static_cast<std::size_t>(t)] = k; }

  /// Computes V^T V for all clusters; call once all bases are set.
  void finalize();

  /// Explicit V_t (#t x k_t) assembled through the transfer chain.
  DenseMatrix materialize(Index t) const;
  std::vector<DenseMatrix> materialize_all() const;

  Index max_rank() const;
  std::vector<Index> max_rank_per_level() const;
  std::size_t storage_entries() const;

 private:
  std::shared_ptr<const ClusterTree> tree_;
  std::vector<Index> rank_;
  std::vector<DenseMatrix> leaf_;
  std::vector<DenseMatrix> transfer_;
  std::vector<DenseMatrix> gram_t_;
};

/// H2 matrix over a block cluster tree with one shared cluster basis for rows
/// and columns. An admissible block (t, s) is V_t S V_s^T with coupling S of
/// size k_t x k_s; inadmissible leaves are dense. Block data live in tree
/// (permuted) ordering; the public products accept original ordering.
class H2Matrix {
 public:
  H2Matrix(std::shared_ptr<const BlockClusterTree> blocks,
           std::shared_ptr<const ClusterBasis> basis);

  Index size() const { return tree().num_points(); }
  const BlockClusterTree& blocks() const { return *blocks_; }
  const ClusterTree& tree() const { return blocks_->tree(); }
  const ClusterBasis& basis() const { return *basis_; }
  const std::shared_ptr<const BlockClusterTree>& blocks_ptr() const { return blocks_; }
  const std::shared_ptr<const ClusterBasis>& basis_ptr() const { return basis_; }

  /// Coupling (admissible) or dense (inadmissible) data of a leaf node.
  DenseMatrix& block(Index node) { return data_[static_cast<std::size_t>(node)]; }
  const DenseMatrix& block(Index node) const { return data_[static_cast<std::size_t>(node)]; }

  bool same_structure(const H2Matrix& other) const;

  void set_zero();
  void set_zero(Index node);
  /// this(node subtree) += alpha * other(node subtree); structures must match.
  void add(Index node, const H2Matrix& other, Complex alpha);

  /// Dense block of a node in tree ordering.
  DenseMatrix materialize_block(Index node) const;
  /// Full N x N matrix in original ordering.
  DenseMatrix materialize() const;

  std::size_t storage_entries() const;
  std::size_t storage_bytes() const { return storage_entries() * sizeof(Complex); }

 private:
  std::shared_ptr<const BlockClusterTree> blocks_;
  std::shared_ptr<const ClusterBasis> basis_;
  std::vector<DenseMatrix> data_;
};

/// Permutes the rows of x from original into tree ordering and back.
DenseMatrix to_tree_order(const ClusterTree& tree, const DenseMatrix& x);
DenseMatrix from_tree_order(const ClusterTree& tree, const DenseMatrix& x);

}  // namespace mrh2
