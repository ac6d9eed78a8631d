#include "mrh2/h2_build.hpp"

#include "mrh2/h2_arith.hpp"

#include <algorithm>
#include <chrono>
#include <string>

namespace mrh2 {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

DenseMatrix vstack(const DenseMatrix& top, const DenseMatrix& bottom) {
  DenseMatrix out(top.rows() + bottom.rows(), top.cols());
  out.topRows(top.rows()) = top;
  out.bottomRows(bottom.rows()) = bottom;
  return out;
}

}  // namespace

Index ClusterAB::slot(Index node) const {
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (blocks[i] == node) return offsets[i];
  }
  throw Error("ClusterAB: block " + std::to_string(node) + " not owned by cluster " +
              std::to_string(cluster));
}

std::vector<Index> grouped_columns(const BlockClusterTree& bt, Index t) {
  std::vector<Index> cols;
  for (Index b : bt.admissible_in_row(t)) {
    const Cluster& s = bt.tree().cluster(bt.node(b).col);
    for (Index j = s.offset; j < s.end(); ++j) cols.push_back(j);
  }
  return cols;
}

DenseMatrix assemble_grouped_block(const BlockClusterTree& bt, const EntryOracle& entry, Index t) {
  const Cluster& c = bt.tree().cluster(t);
  const auto& perm = bt.tree().permutation();
  const auto cols = grouped_columns(bt, t);
  DenseMatrix g(c.size, static_cast<Index>(cols.size()));
  for (Index j = 0; j < g.cols(); ++j) {
    for (Index i = 0; i < c.size; ++i) {
      g(i, j) = entry(perm[static_cast<std::size_t>(c.offset + i)],
                      perm[static_cast<std::size_t>(cols[static_cast<std::size_t>(j)])]);
    }
  }
  return g;
}

std::vector<ClusterAB> build_all_cluster_ab(const BlockClusterTree& bt, const EntryOracle& entry,
                                            const CompressionParams& params) {
  params.validate();
  const ClusterTree& tree = bt.tree();
  const auto& perm = tree.permutation();
  std::vector<ClusterAB> out(static_cast<std::size_t>(tree.num_clusters()));

  for (Index t = 0; t < tree.num_clusters(); ++t) {
    const Cluster& c = tree.cluster(t);
    ClusterAB& ab = out[static_cast<std::size_t>(t)];
    ab.cluster = t;
    ab.blocks = bt.admissible_in_row(t);
    Index width = 0;
    for (Index b : ab.blocks) {
      ab.offsets.push_back(width);
      width += tree.cluster(bt.node(b).col).size;
    }
    ab.offsets.push_back(width);

    if (ab.blocks.empty()) {
      ab.factor = LowRankFactor(c.size, 0);
    } else {
      const auto cols = grouped_columns(bt, t);
      const EntryOracle local = [&](Index i, Index j) {
        return entry(perm[static_cast<std::size_t>(c.offset + i)],
                     perm[static_cast<std::size_t>(cols[static_cast<std::size_t>(j)])]);
      };
      LowRankFactor f;
      try {
        f = aca_factorize(local, c.size, width, params.eps_aca, params.max_rank,
                          std::span<const Index>(ab.offsets.data(), ab.offsets.size() - 1));
      } catch (const RankOverflowError& e) {
        throw RankOverflowError("cluster " + std::to_string(t) + ": " + e.what(), e.partial());
      }
      ab.factor = recompress_lowrank(f, params.eps_acc);
    }
    ab.btb = ab.factor.b.transpose() * ab.factor.b.conjugate();
    ab.ata = ab.factor.a.transpose() * ab.factor.a.conjugate();
  }
  return out;
}

NestedBasisBuilder::NestedBasisBuilder(const BlockClusterTree& bt,
                                       const std::vector<ClusterAB>& abs, double eps_acc)
    : bt_(bt), abs_(abs), eps_acc_(eps_acc) {
  if (static_cast<Index>(abs.size()) != bt.tree().num_clusters()) {
    throw Error("NestedBasisBuilder: one stage I factor per cluster required");
  }
  if (!(eps_acc >= 0.0 && eps_acc < 1.0)) throw Error("NestedBasisBuilder: eps_acc must be in [0,1)");
  basis_ = std::make_shared<ClusterBasis>(bt.tree_ptr());
  const auto n = static_cast<std::size_t>(bt.tree().num_clusters());
  done_.assign(n, false);
  proj_.resize(n);
  self_row_.resize(n);
  self_col_.resize(n);
}

NestedBasisBuilder::Slices NestedBasisBuilder::raw_slices(Index c) const {
  const ClusterTree& tree = bt_.tree();
  const Cluster& cl = tree.cluster(c);
  const auto path = tree.path_to(c);
  Slices s;
  s.row.resize(path.size());
  s.col.resize(path.size());
  if (!extra_.empty()) s.extra.resize(path.size());
  for (std::size_t l = 0; l < path.size(); ++l) {
    const Cluster& j = tree.cluster(path[l]);
    const Index shift = cl.offset - j.offset;
    if (!extra_.empty()) s.extra[l] = extra_[static_cast<std::size_t>(j.id)].middleRows(shift, cl.size);
    s.row[l] = abs_[static_cast<std::size_t>(j.id)].factor.a.middleRows(shift, cl.size);
    for (Index b : bt_.admissible_in_col(j.id)) {
      const ClusterAB& owner = abs_[static_cast<std::size_t>(bt_.node(b).row)];
      s.col[l].push_back(owner.factor.b.middleRows(owner.slot(b) + shift, cl.size));
    }
  }
  return s;
}

NestedBasisBuilder::Slices NestedBasisBuilder::stacked_children(Index c) const {
  const Cluster& cl = bt_.tree().cluster(c);
  const Slices& p1 = proj_[static_cast<std::size_t>(cl.children[0])];
  const Slices& p2 = proj_[static_cast<std::size_t>(cl.children[1])];
  const std::size_t levels = static_cast<std::size_t>(cl.level) + 1;
  Slices s;
  s.row.resize(levels);
  s.col.resize(levels);
  if (!p1.extra.empty()) s.extra.resize(levels);
  for (std::size_t l = 0; l < levels; ++l) {
    s.row[l] = vstack(p1.row[l], p2.row[l]);
    if (!p1.extra.empty()) s.extra[l] = vstack(p1.extra[l], p2.extra[l]);
    for (std::size_t i = 0; i < p1.col[l].size(); ++i) {
      s.col[l].push_back(vstack(p1.col[l][i], p2.col[l][i]));
    }
  }
  return s;
}

DenseMatrix NestedBasisBuilder::gram_of(Index c, const Slices& s) const {
  const auto path = bt_.tree().path_to(c);
  const Index n = s.row.front().rows();
  DenseMatrix g = DenseMatrix::Zero(n, n);
  for (std::size_t l = 0; l < path.size(); ++l) {
    const Index j = path[l];
    const DenseMatrix& r = s.row[l];
    g.noalias() += r * abs_[static_cast<std::size_t>(j)].btb * r.adjoint();
    const auto& col_blocks = bt_.admissible_in_col(j);
    for (std::size_t i = 0; i < col_blocks.size(); ++i) {
      const DenseMatrix& b = s.col[l][i];
      const ClusterAB& owner = abs_[static_cast<std::size_t>(bt_.node(col_blocks[i]).row)];
      g.noalias() += b * owner.ata * b.adjoint();
    }
    if (!s.extra.empty()) g.noalias() += s.extra[l] * s.extra[l].adjoint();
  }
  // Remove rounding asymmetry before the Hermitian eigensolver checks it.
  return 0.5 * (g + g.adjoint());
}

namespace {

// F with F F^H = x w x^H, where w = y^T conj(y) comes from the partner factor y.
DenseMatrix weighted_content(const DenseMatrix& x, const DenseMatrix& y) {
  if (x.cols() == 0) return DenseMatrix(x.rows(), 0);
  Eigen::HouseholderQR<DenseMatrix> qr(y);
  const Index q = std::min(y.rows(), y.cols());
  const DenseMatrix r = qr.matrixQR().topRows(q).triangularView<Eigen::Upper>();
  return x * r.transpose();
}

// Orthogonal range of f scaled by its singular values, dropping directions
// far below the retained accuracy.
DenseMatrix compact_content(const DenseMatrix& f, double cut) {
  if (f.cols() == 0 || f.rows() == 0) return DenseMatrix(f.rows(), 0);
  Eigen::BDCSVD<DenseMatrix> svd(f, Eigen::ComputeThinU);
  const auto& sigma = svd.singularValues();
  Index k = 0;
  while (k < sigma.size() && sigma(k) > cut * sigma(0)) ++k;
  return svd.matrixU().leftCols(k) * sigma.head(k).asDiagonal();
}

}  // namespace

void NestedBasisBuilder::set_diagonal_solver(const DiagonalSolver& solve) {
  const ClusterTree& tree = bt_.tree();
  extra_.assign(static_cast<std::size_t>(tree.num_clusters()), DenseMatrix());
  const double cut = 0.1 * eps_acc_;
  for (Index j = 0; j < tree.num_clusters(); ++j) {
    const Cluster& c = tree.cluster(j);
    const ClusterAB& own = abs_[static_cast<std::size_t>(j)];
    const DenseMatrix row = compact_content(weighted_content(own.factor.a, own.factor.b), cut);

    std::vector<DenseMatrix> parts;
    Index width = 0;
    for (Index b : bt_.admissible_in_col(j)) {
      const ClusterAB& owner = abs_[static_cast<std::size_t>(bt_.node(b).row)];
      parts.push_back(weighted_content(owner.factor.b.middleRows(owner.slot(b), c.size),
                                       owner.factor.a));
      width += parts.back().cols();
    }
    DenseMatrix colf(c.size, width);
    Index at = 0;
    for (const auto& p : parts) {
      colf.middleCols(at, p.cols()) = p;
      at += p.cols();
    }
    const DenseMatrix col = compact_content(colf, cut);

    DenseMatrix mapped(c.size, row.cols() + col.cols());
    if (row.cols() > 0) mapped.leftCols(row.cols()) = solve(j, row, false);
    if (col.cols() > 0) mapped.rightCols(col.cols()) = solve(j, col, true);
    extra_[static_cast<std::size_t>(j)] = std::move(mapped);
  }
}

void NestedBasisBuilder::store_projection(Index c, const DenseMatrix& p, const Slices& s) {
  Slices out;
  out.row.reserve(s.row.size());
  out.col.resize(s.col.size());
  for (const auto& r : s.row) out.row.push_back(p.adjoint() * r);
  for (const auto& e : s.extra) out.extra.push_back(p.adjoint() * e);
  for (std::size_t l = 0; l < s.col.size(); ++l) {
    for (const auto& b : s.col[l]) out.col[l].push_back(p.adjoint() * b);
  }
  self_row_[static_cast<std::size_t>(c)] = out.row.back();
  self_col_[static_cast<std::size_t>(c)] = out.col.back();
  proj_[static_cast<std::size_t>(c)] = std::move(out);
  done_[static_cast<std::size_t>(c)] = true;
}

DenseMatrix NestedBasisBuilder::leaf_gram(Index t) const {
  if (!bt_.tree().cluster(t).is_leaf()) throw Error("leaf_gram: cluster is not a leaf");
  return gram_of(t, raw_slices(t));
}

DenseMatrix NestedBasisBuilder::build_leaf_basis(Index t) {
  const Slices s = raw_slices(t);
  if (!bt_.tree().cluster(t).is_leaf()) throw Error("build_leaf_basis: cluster is not a leaf");
  TruncatedEig eig = trunc_eig_hermitian(gram_of(t, s), eps_acc_);
  store_projection(t, eig.p, s);
  basis_->set_leaf(t, eig.p);
  return eig.p;
}

DenseMatrix NestedBasisBuilder::projected_gram(Index t) const {
  const Cluster& c = bt_.tree().cluster(t);
  if (c.is_leaf()) throw Error("projected_gram: cluster is a leaf");
  for (Index ch : c.children) {
    if (!done_[static_cast<std::size_t>(ch)]) {
      throw Error("projected_gram: basis of cluster " + std::to_string(ch) + " missing");
    }
  }
  return gram_of(t, stacked_children(t));
}

NestedBasisBuilder::Transfer NestedBasisBuilder::build_transfer(Index t) {
  const Cluster& c = bt_.tree().cluster(t);
  if (c.is_leaf()) throw Error("build_transfer: cluster is a leaf");
  for (Index ch : c.children) {
    if (!done_[static_cast<std::size_t>(ch)]) {
      throw Error("build_transfer: basis of cluster " + std::to_string(ch) + " missing");
    }
  }
  const Slices s = stacked_children(t);
  TruncatedEig eig = trunc_eig_hermitian(gram_of(t, s), eps_acc_);
  const Index k1 = basis_->rank(c.children[0]);
  const Index k2 = basis_->rank(c.children[1]);
  Transfer tr{eig.p.topRows(k1), eig.p.bottomRows(k2)};
  store_projection(t, eig.p, s);
  basis_->set_rank(t, eig.k());
  basis_->set_transfer(c.children[0], tr.first);
  basis_->set_transfer(c.children[1], tr.second);
  for (Index ch : c.children) proj_[static_cast<std::size_t>(ch)] = Slices{};
  return tr;
}

void NestedBasisBuilder::run() {
  const auto levels = bt_.tree().by_level();
  for (auto it = levels.rbegin(); it != levels.rend(); ++it) {
    for (Index t : *it) {
      if (bt_.tree().cluster(t).is_leaf()) {
        build_leaf_basis(t);
      } else {
        build_transfer(t);
      }
    }
  }
  basis_->finalize();
}

std::vector<DenseMatrix> NestedBasisBuilder::build_coupling() const {
  std::vector<DenseMatrix> out(static_cast<std::size_t>(bt_.num_nodes()));
  for (Index s = 0; s < bt_.tree().num_clusters(); ++s) {
    const auto& col_blocks = bt_.admissible_in_col(s);
    if (col_blocks.empty()) continue;
    if (!done_[static_cast<std::size_t>(s)]) {
      throw Error("build_coupling: basis of cluster " + std::to_string(s) + " missing");
    }
    for (std::size_t i = 0; i < col_blocks.size(); ++i) {
      const Index t = bt_.node(col_blocks[i]).row;
      if (!done_[static_cast<std::size_t>(t)]) {
        throw Error("build_coupling: basis of cluster " + std::to_string(t) + " missing");
      }
      out[static_cast<std::size_t>(col_blocks[i])] =
          self_row_[static_cast<std::size_t>(t)] *
          self_col_[static_cast<std::size_t>(s)][i].transpose();
    }
  }
  return out;
}

H2Matrix build_h2(std::shared_ptr<const BlockClusterTree> bt, const EntryOracle& entry,
                  const CompressionParams& params, H2BuildStats* stats,
                  bool inverse_aware) {
  const auto t0 = Clock::now();
  H2BuildStats local;

  auto t = Clock::now();
  const auto abs = build_all_cluster_ab(*bt, entry, params);
  local.stage1_s = seconds_since(t);
  for (const auto& ab : abs) {
    local.ab_rank.push_back(ab.rank());
    local.max_ab_rank = std::max(local.max_ab_rank, ab.rank());
  }

  t = Clock::now();
  const ClusterTree& tree = bt->tree();
  const auto& perm = tree.permutation();
  std::vector<DenseMatrix> dense(static_cast<std::size_t>(bt->num_nodes()));
  for (Index b : bt->inadmissible_leaves()) {
    const BlockNode& node = bt->node(b);
    const Cluster& rc = tree.cluster(node.row);
    const Cluster& cc = tree.cluster(node.col);
    DenseMatrix& d = dense[static_cast<std::size_t>(b)];
    d.resize(rc.size, cc.size);
    for (Index j = 0; j < cc.size; ++j) {
      for (Index i = 0; i < rc.size; ++i) {
        d(i, j) = entry(perm[static_cast<std::size_t>(rc.offset + i)],
                        perm[static_cast<std::size_t>(cc.offset + j)]);
      }
    }
  }
  local.dense_s = seconds_since(t);

  t = Clock::now();
  auto builder = std::make_unique<NestedBasisBuilder>(*bt, abs, params.eps_acc);
  builder->run();
  auto couplings = builder->build_coupling();

  auto assemble = [&](std::shared_ptr<const ClusterBasis> basis, std::vector<DenseMatrix>& cpl,
                      bool move_dense) {
    H2Matrix h(bt, std::move(basis));
    for (Index b : bt->admissible_leaves()) h.block(b) = std::move(cpl[static_cast<std::size_t>(b)]);
    for (Index b : bt->inadmissible_leaves()) {
      if (move_dense) {
        h.block(b) = std::move(dense[static_cast<std::size_t>(b)]);
      } else {
        h.block(b) = dense[static_cast<std::size_t>(b)];
      }
    }
    return h;
  };

  if (!inverse_aware) {
    local.stage2_s = seconds_since(t);
    H2Matrix h2 = assemble(builder->basis(), couplings, true);
    local.total_s = seconds_since(t0);
    if (stats != nullptr) *stats = std::move(local);
    return h2;
  }

  // Second pass: the first representation supplies the diagonal solves.
  const H2Matrix first = assemble(builder->basis(), couplings, false);
  const double tol = 0.1 * params.eps_acc;
  auto solve = [&](Index j, const DenseMatrix& rhs, bool transposed) -> DenseMatrix {
    const Index node = bt->find(j, j);
    if (tree.cluster(j).is_leaf()) {
      const DenseMatrix& d = dense[static_cast<std::size_t>(node)];
      if (transposed) return Eigen::PartialPivLU<DenseMatrix>(d.transpose()).solve(rhs);
      return Eigen::PartialPivLU<DenseMatrix>(d).solve(rhs);
    }
    const LinearOperator apply = [&](const Vector& v) -> Vector {
      return matmat_subblock(first, node, v, transposed);
    };
    DenseMatrix out(rhs.rows(), rhs.cols());
    for (Index c = 0; c < rhs.cols(); ++c) {
      out.col(c) = bicgstab_solve(apply, rhs.col(c), tol, 200);
    }
    return out;
  };
  builder = std::make_unique<NestedBasisBuilder>(*bt, abs, params.eps_acc);
  builder->set_diagonal_solver(solve);
  builder->run();
  couplings = builder->build_coupling();
  local.stage2_s = seconds_since(t);
  H2Matrix h2 = assemble(builder->basis(), couplings, true);
  local.total_s = seconds_since(t0);
  if (stats != nullptr) *stats = std::move(local);
  return h2;
}

H2Matrix build_h2(std::span<const Point3> points, const EntryOracle& entry, const H2Options& opts,
                  H2BuildStats* stats) {
  auto tree = std::make_shared<const ClusterTree>(points, opts.n_min);
  auto bt = std::make_shared<const BlockClusterTree>(tree, opts.eta);
  return build_h2(bt, entry, opts.compression, stats, opts.inverse_aware);
}

H2Matrix build_h2(const VieKernel& kernel, const H2Options& opts, H2BuildStats* stats) {
  return build_h2(std::span<const Point3>(kernel.geometry().centers), kernel.oracle(), opts, stats);
}

double rep_error(const H2Matrix& h2, const DenseMatrix& dense, Index cap) {
  if (h2.size() > cap) {
    throw Error("rep_error: N = " + std::to_string(h2.size()) + " exceeds the dense cap " +
                std::to_string(cap));
  }
  if (dense.rows() != h2.size() || dense.cols() != h2.size()) {
    throw Error("rep_error: dimension mismatch");
  }
  const double ref = dense.norm();
  const double diff = (dense - h2.materialize()).norm();
  return ref > 0.0 ? diff / ref : diff;
}

H2Matrix project_dense(std::shared_ptr<const BlockClusterTree> bt,
                       std::shared_ptr<const ClusterBasis> basis, const DenseMatrix& m) {
  H2Matrix out(bt, basis);
  const ClusterTree& tree = bt->tree();
  if (m.rows() != tree.num_points() || m.cols() != tree.num_points()) {
    throw Error("project_dense: dimension mismatch");
  }
  const DenseMatrix mt = to_tree_order(tree, to_tree_order(tree, m).transpose()).transpose();
  const auto v = basis->materialize_all();
  for (Index b : bt->leaves()) {
    const BlockNode& node = bt->node(b);
    const Cluster& t = tree.cluster(node.row);
    const Cluster& s = tree.cluster(node.col);
    const auto blk = mt.block(t.offset, s.offset, t.size, s.size);
    if (node.kind == BlockKind::Inadmissible) {
      out.block(b) = blk;
    } else {
      out.block(b) = v[static_cast<std::size_t>(t.id)].adjoint() * blk *
                     v[static_cast<std::size_t>(s.id)].conjugate();
    }
  }
  return out;
}

}  // namespace mrh2
