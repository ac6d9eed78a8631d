#include "mrh2/h2_matrix.hpp"

#include <algorithm>

namespace mrh2 {

ClusterBasis::ClusterBasis(std::shared_ptr<const ClusterTree> tree) : tree_(std::move(tree)) {
  const auto n = static_cast<std::size_t>(tree_->num_clusters());
  rank_.assign(n, 0);
  leaf_.resize(n);
  transfer_.resize(n);
  gram_t_.resize(n);
  for (Index t = 0; t < tree_->num_clusters(); ++t) {
    const Cluster& c = tree_->cluster(t);
    if (c.is_leaf()) leaf_[static_cast<std::size_t>(t)] = DenseMatrix(c.size, 0);
  }
}

void ClusterBasis::set_leaf(Index t, DenseMatrix v) {
  const Cluster& c = tree_->cluster(t);
  if (!c.is_leaf() || v.rows() != c.size) throw Error("ClusterBasis: leaf basis shape mismatch");
  rank_[static_cast<std::size_t>(t)] = v.cols();
  leaf_[static_cast<std::size_t>(t)] = std::move(v);
}

void ClusterBasis::set_transfer(Index child, DenseMatrix t) {
  if (tree_->cluster(child).parent < 0) throw Error("ClusterBasis: root has no transfer matrix");
  transfer_[static_cast<std::size_t>(child)] = std::move(t);
}

void ClusterBasis::finalize() {
  for (Index t : tree_->bottom_up()) {
    const Cluster& c = tree_->cluster(t);
    DenseMatrix z;
    if (c.is_leaf()) {
      z = leaf(t).transpose() * leaf(t);
    } else {
      z = DenseMatrix::Zero(rank(t), rank(t));
      for (Index ch : c.children) {
        const DenseMatrix& tr = transfer(ch);
        z += tr.transpose() * gram_t(ch) * tr;
      }
    }
    gram_t_[static_cast<std::size_t>(t)] = std::move(z);
  }
}

DenseMatrix ClusterBasis::materialize(Index t) const {
  const Cluster& c = tree_->cluster(t);
  if (c.is_leaf()) return leaf(t);
  DenseMatrix v(c.size, rank(t));
  for (Index ch : c.children) {
    const Cluster& cc = tree_->cluster(ch);
    v.middleRows(cc.offset - c.offset, cc.size) = materialize(ch) * transfer(ch);
  }
  return v;
}

std::vector<DenseMatrix> ClusterBasis::materialize_all() const {
  std::vector<DenseMatrix> out(static_cast<std::size_t>(tree_->num_clusters()));
  for (Index t : tree_->bottom_up()) {
    const Cluster& c = tree_->cluster(t);
    if (c.is_leaf()) {
      out[static_cast<std::size_t>(t)] = leaf(t);
      continue;
    }
    DenseMatrix v(c.size, rank(t));
    for (Index ch : c.children) {
      const Cluster& cc = tree_->cluster(ch);
      v.middleRows(cc.offset - c.offset, cc.size) = out[static_cast<std::size_t>(ch)] * transfer(ch);
    }
    out[static_cast<std::size_t>(t)] = std::move(v);
  }
  return out;
}

Index ClusterBasis::max_rank() const {
  Index k = 0;
  for (Index r : rank_) k = std::max(k, r);
  return k;
}

std::vector<Index> ClusterBasis::max_rank_per_level() const {
  std::vector<Index> out(static_cast<std::size_t>(tree_->depth()) + 1, 0);
  for (const Cluster& c : tree_->clusters()) {
    auto& slot = out[static_cast<std::size_t>(c.level)];
    slot = std::max(slot, rank(c.id));
  }
  return out;
}

std::size_t ClusterBasis::storage_entries() const {
  std::size_t n = 0;
  for (const auto& m : leaf_) n += static_cast<std::size_t>(m.size());
  for (const auto& m : transfer_) n += static_cast<std::size_t>(m.size());
  return n;
}

H2Matrix::H2Matrix(std::shared_ptr<const BlockClusterTree> blocks,
                   std::shared_ptr<const ClusterBasis> basis)
    : blocks_(std::move(blocks)), basis_(std::move(basis)) {
  if (&basis_->tree() != &blocks_->tree()) {
    throw Error("H2Matrix: basis and block tree refer to different cluster trees");
  }
  data_.resize(static_cast<std::size_t>(blocks_->num_nodes()));
  set_zero();
}

bool H2Matrix::same_structure(const H2Matrix& other) const {
  return blocks_ == other.blocks_ && basis_ == other.basis_;
}

void H2Matrix::set_zero() { set_zero(blocks_->root()); }

void H2Matrix::set_zero(Index node) {
  const BlockNode& n = blocks_->node(node);
  const ClusterTree& ct = tree();
  switch (n.kind) {
    case BlockKind::Admissible:
      block(node) = DenseMatrix::Zero(basis_->rank(n.row), basis_->rank(n.col));
      break;
    case BlockKind::Inadmissible:
      block(node) = DenseMatrix::Zero(ct.cluster(n.row).size, ct.cluster(n.col).size);
      break;
    case BlockKind::Subdivided:
      for (Index c : n.children) set_zero(c);
      break;
  }
}

void H2Matrix::add(Index node, const H2Matrix& other, Complex alpha) {
  if (!same_structure(other)) throw Error("H2Matrix::add: structure mismatch");
  const BlockNode& n = blocks_->node(node);
  if (n.kind == BlockKind::Subdivided) {
    for (Index c : n.children) add(c, other, alpha);
  } else {
    block(node) += alpha * other.block(node);
  }
}

DenseMatrix H2Matrix::materialize_block(Index node) const {
  const BlockNode& n = blocks_->node(node);
  const Cluster& t = tree().cluster(n.row);
  const Cluster& s = tree().cluster(n.col);
  switch (n.kind) {
    case BlockKind::Inadmissible:
      return block(node);
    case BlockKind::Admissible:
      return basis_->materialize(n.row) * block(node) * basis_->materialize(n.col).transpose();
    case BlockKind::Subdivided: {
      DenseMatrix out(t.size, s.size);
      for (Index c : n.children) {
        const BlockNode& cn = blocks_->node(c);
        const Cluster& ct = tree().cluster(cn.row);
        const Cluster& cs = tree().cluster(cn.col);
        out.block(ct.offset - t.offset, cs.offset - s.offset, ct.size, cs.size) =
            materialize_block(c);
      }
      return out;
    }
  }
  return {};
}

DenseMatrix H2Matrix::materialize() const {
  const Index n = size();
  const auto bases = basis_->materialize_all();
  DenseMatrix tree_order(n, n);
  for (Index id : blocks_->leaves()) {
    const BlockNode& b = blocks_->node(id);
    const Cluster& t = tree().cluster(b.row);
    const Cluster& s = tree().cluster(b.col);
    auto dst = tree_order.block(t.offset, s.offset, t.size, s.size);
    if (b.kind == BlockKind::Inadmissible) {
      dst = block(id);
    } else {
      dst = bases[static_cast<std::size_t>(b.row)] * block(id) *
            bases[static_cast<std::size_t>(b.col)].transpose();
    }
  }
  const auto& perm = tree().permutation();
  DenseMatrix out(n, n);
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < n; ++i) {
      out(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]) = tree_order(i, j);
    }
  }
  return out;
}

std::size_t H2Matrix::storage_entries() const {
  std::size_t n = basis_->storage_entries();
  for (const auto& m : data_) n += static_cast<std::size_t>(m.size());
  return n;
}

DenseMatrix to_tree_order(const ClusterTree& tree, const DenseMatrix& x) {
  const auto& perm = tree.permutation();
  DenseMatrix out(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) out.row(i) = x.row(perm[static_cast<std::size_t>(i)]);
  return out;
}

DenseMatrix from_tree_order(const ClusterTree& tree, const DenseMatrix& x) {
  const auto& perm = tree.permutation();
  DenseMatrix out(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) out.row(perm[static_cast<std::size_t>(i)]) = x.row(i);
  return out;
}

}  // namespace mrh2
