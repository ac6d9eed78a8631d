#include "mrh2/h2_arith.hpp"

#include <chrono>
#include <cmath>
#include <map>
#include <random>
#include <string>
#include <unordered_map>
#include <utility>

namespace mrh2 {

namespace {

// Shared by the block and single-vector products; M is DenseMatrix or Vector.
template <class M>
std::vector<M> forward_coefficients(const ClusterBasis& basis, const M& x_tree) {
  const ClusterTree& tree = basis.tree();
  std::vector<M> coef(static_cast<std::size_t>(tree.num_clusters()));
  for (Index t : tree.bottom_up()) {
    const Cluster& c = tree.cluster(t);
    M& out = coef[static_cast<std::size_t>(t)];
    if (c.is_leaf()) {
      out.noalias() = basis.leaf(t).transpose() * x_tree.middleRows(c.offset, c.size);
    } else {
      out = M::Zero(basis.rank(t), x_tree.cols());
      for (Index ch : c.children) {
        out.noalias() += basis.transfer(ch).transpose() * coef[static_cast<std::size_t>(ch)];
      }
    }
  }
  return coef;
}

template <class M>
M apply_tree(const H2Matrix& m, const M& x_tree) {
  const ClusterTree& tree = m.tree();
  const ClusterBasis& basis = m.basis();
  const BlockClusterTree& bt = m.blocks();
  if (x_tree.rows() != m.size()) throw Error("matmat: dimension mismatch");
  const Index q = x_tree.cols();

  const std::vector<M> xh = forward_coefficients(basis, x_tree);

  std::vector<M> yh(static_cast<std::size_t>(tree.num_clusters()));
  for (Index t = 0; t < tree.num_clusters(); ++t) {
    M& acc = yh[static_cast<std::size_t>(t)];
    acc = M::Zero(basis.rank(t), q);
    for (Index b : bt.admissible_in_row(t)) {
      acc.noalias() += m.block(b) * xh[static_cast<std::size_t>(bt.node(b).col)];
    }
  }

  M y = M::Zero(m.size(), q);
  const auto order = tree.bottom_up();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const Cluster& c = tree.cluster(*it);
    const M& own = yh[static_cast<std::size_t>(c.id)];
    if (c.is_leaf()) {
      y.middleRows(c.offset, c.size).noalias() += basis.leaf(c.id) * own;
    } else {
      for (Index ch : c.children) {
        yh[static_cast<std::size_t>(ch)].noalias() += basis.transfer(ch) * own;
      }
    }
  }

  for (Index b : bt.inadmissible_leaves()) {
    const BlockNode& n = bt.node(b);
    const Cluster& t = tree.cluster(n.row);
    const Cluster& s = tree.cluster(n.col);
    y.middleRows(t.offset, t.size).noalias() += m.block(b) * x_tree.middleRows(s.offset, s.size);
  }
  return y;
}

}  // namespace

ForwardCoefficients forward_transform(const ClusterBasis& basis, const DenseMatrix& x_tree) {
  return ForwardCoefficients{forward_coefficients(basis, x_tree)};
}

DenseMatrix matmat_tree(const H2Matrix& m, const DenseMatrix& x_tree) {
  return apply_tree(m, x_tree);
}

namespace {

struct SubblockProduct {
  const H2Matrix& m;
  bool transposed;
  std::vector<DenseMatrix> xh;
  std::vector<DenseMatrix> yh;

  const DenseMatrix& forward(Index c, Index root, const DenseMatrix& x) {
    const ClusterBasis& basis = m.basis();
    const Cluster& cl = m.tree().cluster(c);
    DenseMatrix& out = xh[static_cast<std::size_t>(c)];
    if (cl.is_leaf()) {
      out.noalias() = basis.leaf(c).transpose() *
                      x.middleRows(cl.offset - m.tree().cluster(root).offset, cl.size);
    } else {
      out = DenseMatrix::Zero(basis.rank(c), x.cols());
      for (Index ch : cl.children) {
        out.noalias() += basis.transfer(ch).transpose() * forward(ch, root, x);
      }
    }
    return out;
  }

  void couple(Index node, Index in_root, Index out_root, const DenseMatrix& x, DenseMatrix& y) {
    const BlockNode& n = m.blocks().node(node);
    const Index in = transposed ? n.row : n.col;
    const Index out = transposed ? n.col : n.row;
    switch (n.kind) {
      case BlockKind::Subdivided:
        for (Index ch : n.children) couple(ch, in_root, out_root, x, y);
        break;
      case BlockKind::Admissible: {
        DenseMatrix& acc = yh[static_cast<std::size_t>(out)];
        if (acc.size() == 0) acc = DenseMatrix::Zero(m.basis().rank(out), x.cols());
        if (transposed) {
          acc.noalias() += m.block(node).transpose() * xh[static_cast<std::size_t>(in)];
        } else {
          acc.noalias() += m.block(node) * xh[static_cast<std::size_t>(in)];
        }
        break;
      }
      case BlockKind::Inadmissible: {
        const Cluster& ci = m.tree().cluster(in);
        const Cluster& co = m.tree().cluster(out);
        const auto xi = x.middleRows(ci.offset - m.tree().cluster(in_root).offset, ci.size);
        auto yo = y.middleRows(co.offset - m.tree().cluster(out_root).offset, co.size);
        if (transposed) {
          yo.noalias() += m.block(node).transpose() * xi;
        } else {
          yo.noalias() += m.block(node) * xi;
        }
        break;
      }
    }
  }

  void backward(Index c, Index root, DenseMatrix& y) {
    const ClusterBasis& basis = m.basis();
    const Cluster& cl = m.tree().cluster(c);
    DenseMatrix& own = yh[static_cast<std::size_t>(c)];
    if (cl.is_leaf()) {
      if (own.size() > 0) {
        y.middleRows(cl.offset - m.tree().cluster(root).offset, cl.size).noalias() +=
            basis.leaf(c) * own;
      }
      return;
    }
    for (Index ch : cl.children) {
      if (own.size() > 0) {
        DenseMatrix& acc = yh[static_cast<std::size_t>(ch)];
        if (acc.size() == 0) acc = DenseMatrix::Zero(basis.rank(ch), own.cols());
        acc.noalias() += basis.transfer(ch) * own;
      }
      backward(ch, root, y);
    }
  }
};

}  // namespace

DenseMatrix matmat_subblock(const H2Matrix& m, Index node, const DenseMatrix& x_local,
                            bool transposed) {
  const BlockNode& n = m.blocks().node(node);
  const Index in = transposed ? n.row : n.col;
  const Index out = transposed ? n.col : n.row;
  if (x_local.rows() != m.tree().cluster(in).size) throw Error("matmat_subblock: dimension mismatch");
  const auto count = static_cast<std::size_t>(m.tree().num_clusters());
  SubblockProduct p{m, transposed, std::vector<DenseMatrix>(count), std::vector<DenseMatrix>(count)};
  p.forward(in, in, x_local);
  DenseMatrix y = DenseMatrix::Zero(m.tree().cluster(out).size, x_local.cols());
  p.couple(node, in, out, x_local, y);
  p.backward(out, out, y);
  return y;
}

DenseMatrix matmat_apply(const H2Matrix& m, const DenseMatrix& x) {
  if (x.rows() != m.size()) throw Error("matmat_apply: dimension mismatch");
  return from_tree_order(m.tree(), matmat_tree(m, to_tree_order(m.tree(), x)));
}

Vector matvec(const H2Matrix& m, const Vector& x) {
  if (x.size() != m.size()) throw Error("matvec: dimension mismatch");
  const auto& perm = m.tree().permutation();
  Vector x_tree(x.size());
  for (Index i = 0; i < x.size(); ++i) x_tree(i) = x(perm[static_cast<std::size_t>(i)]);
  const Vector y_tree = apply_tree(m, x_tree);
  Vector y(x.size());
  for (Index i = 0; i < x.size(); ++i) y(perm[static_cast<std::size_t>(i)]) = y_tree(i);
  return y;
}

void h2_add_formatted(H2Matrix& target, const H2Matrix& addend, Complex sign) {
  target.add(target.blocks().root(), addend, sign);
}

namespace {

// Accumulated contributions to one target node (t, s):
//   V_t k V_s^T
//   + sum over (b, g) in left:  V_t g V_r^T B(b)      with B(b) a block (r, s) of the right factor
//   + sum over (a, h) in right: A(a) V_r h V_s^T      with A(a) a block (t, r) of the left factor
struct Accumulator {
  DenseMatrix k;
  std::vector<std::pair<Index, DenseMatrix>> left;
  std::vector<std::pair<Index, DenseMatrix>> right;
};

void add_term(std::vector<std::pair<Index, DenseMatrix>>& terms, Index node, const DenseMatrix& m) {
  for (auto& [n, acc] : terms) {
    if (n == node) {
      acc += m;
      return;
    }
  }
  terms.emplace_back(node, m);
}

// Formatted c += alpha a b with one shared cluster basis. Products that
// involve an admissible factor are recorded at the target node where they
// occur and pushed down the target tree in a single pass afterwards.
class ProductEngine {
 public:
  ProductEngine(const H2Matrix& a, const H2Matrix& b, H2Matrix& c,
                const std::vector<DenseMatrix>& bases)
      : a_(a), b_(b), c_(c), basis_(c.basis()), tree_(c.tree()), v_(bases) {}

  void run(Complex alpha, Index a_node, Index b_node, Index c_node) {
    multiply(a_node, b_node, c_node, alpha);
    flush(c_node);
  }

 private:
  const DenseMatrix& v(Index t) const { return v_[static_cast<std::size_t>(t)]; }

  const DenseMatrix* lift(Index t, Index p) const {
    return t == p ? nullptr : &basis_.transfer(p);
  }

  Accumulator& acc(Index node) {
    auto [it, fresh] = acc_.try_emplace(node);
    if (fresh) {
      const BlockNode& n = c_.blocks().node(node);
      it->second.k = DenseMatrix::Zero(basis_.rank(n.row), basis_.rank(n.col));
    }
    return it->second;
  }

  void multiply(Index an, Index bn, Index cn, Complex alpha) {
    const BlockNode& a = a_.blocks().node(an);
    const BlockNode& b = b_.blocks().node(bn);
    const BlockNode& c = c_.blocks().node(cn);
    if (c.kind == BlockKind::Admissible) {
      c_.block(cn).noalias() += alpha * proj_prod(an, bn);
      return;
    }
    if (c.kind == BlockKind::Inadmissible) {
      c_.block(cn).noalias() += alpha * (dense(a_, an) * dense(b_, bn));
      return;
    }
    const bool a_adm = a.kind == BlockKind::Admissible;
    const bool b_adm = b.kind == BlockKind::Admissible;
    if (a_adm && b_adm) {
      acc(cn).k.noalias() += alpha * (a_.block(an) * basis_.gram_t(a.col) * b_.block(bn));
    } else if (a_adm) {
      add_term(acc(cn).left, bn, alpha * a_.block(an));
    } else if (b_adm) {
      add_term(acc(cn).right, an, alpha * b_.block(bn));
    } else {
      for (Index tc : tree_.parts(c.row)) {
        for (Index sc : tree_.parts(c.col)) {
          const Index child = c_.blocks().child(cn, tc, sc);
          for (Index rc : tree_.parts(a.col)) {
            multiply(sub(a_, an, tc, rc), sub(b_, bn, rc, sc), child, alpha);
          }
        }
      }
    }
  }

  static Index sub(const H2Matrix& m, Index node, Index row, Index col) {
    const BlockNode& n = m.blocks().node(node);
    if (n.row == row && n.col == col) return node;
    return m.blocks().child(node, row, col);
  }

  void flush(Index cn) {
    const BlockNode& c = c_.blocks().node(cn);
    auto it = acc_.find(cn);
    if (it != acc_.end()) {
      const Accumulator& ac = it->second;
      if (c.kind == BlockKind::Subdivided) {
        for (Index ch : c.children) split(ac, c, ch);
      } else {
        apply(ac, c, cn);
      }
      acc_.erase(it);
    }
    if (c.kind == BlockKind::Subdivided) {
      for (Index ch : c.children) flush(ch);
    }
  }

  // Moves the accumulator of a subdivided target node into its child.
  void split(const Accumulator& ac, const BlockNode& c, Index ch) {
    const BlockNode& cc = c_.blocks().node(ch);
    const DenseMatrix* et = lift(c.row, cc.row);
    const DenseMatrix* es = lift(c.col, cc.col);
    Accumulator& out = acc(ch);

    DenseMatrix k = ac.k;
    if (et) k = *et * k;
    if (es) k = k * es->transpose();
    out.k += k;

    for (const auto& [bn, g] : ac.left) {
      DenseMatrix gl = et ? DenseMatrix(*et * g) : g;
      const BlockNode& b = b_.blocks().node(bn);
      for (Index rc : tree_.parts(b.row)) {
        const Index bc = sub(b_, bn, rc, cc.col);
        DenseMatrix gc = gl;
        if (const DenseMatrix* e = lift(b.row, rc)) gc = gc * e->transpose();
        const BlockNode& bcn = b_.blocks().node(bc);
        if (bcn.kind == BlockKind::Admissible) {
          out.k.noalias() += gc * basis_.gram_t(rc) * b_.block(bc);
        } else {
          add_term(out.left, bc, gc);
        }
      }
    }

    for (const auto& [an, h] : ac.right) {
      DenseMatrix hl = es ? DenseMatrix(h * es->transpose()) : h;
      const BlockNode& a = a_.blocks().node(an);
      for (Index rc : tree_.parts(a.col)) {
        const Index ac2 = sub(a_, an, cc.row, rc);
        DenseMatrix hc = hl;
        if (const DenseMatrix* e = lift(a.col, rc)) hc = *e * hc;
        const BlockNode& acn = a_.blocks().node(ac2);
        if (acn.kind == BlockKind::Admissible) {
          out.k.noalias() += a_.block(ac2) * basis_.gram_t(rc) * hc;
        } else {
          add_term(out.right, ac2, hc);
        }
      }
    }
  }

  void apply(const Accumulator& ac, const BlockNode& c, Index cn) {
    DenseMatrix& target = c_.block(cn);
    if (c.kind == BlockKind::Admissible) {
      target += ac.k;
      for (const auto& [bn, g] : ac.left) target.noalias() += g * proj_right(bn);
      for (const auto& [an, h] : ac.right) target.noalias() += proj_left(an) * h;
      return;
    }
    target.noalias() += v(c.row) * ac.k * v(c.col).transpose();
    for (const auto& [bn, g] : ac.left) {
      const BlockNode& b = b_.blocks().node(bn);
      target.noalias() += v(c.row) * (g * (v(b.row).transpose() * dense(b_, bn)));
    }
    for (const auto& [an, h] : ac.right) {
      const BlockNode& a = a_.blocks().node(an);
      target.noalias() += ((dense(a_, an) * v(a.col)) * h) * v(c.col).transpose();
    }
  }

  DenseMatrix dense(const H2Matrix& m, Index node) const {
    const BlockNode& n = m.blocks().node(node);
    if (n.kind == BlockKind::Admissible) return v(n.row) * m.block(node) * v(n.col).transpose();
    if (n.kind == BlockKind::Inadmissible) return m.block(node);
    const Cluster& t = tree_.cluster(n.row);
    const Cluster& s = tree_.cluster(n.col);
    DenseMatrix out(t.size, s.size);
    for (Index ch : n.children) {
      const BlockNode& cn = m.blocks().node(ch);
      const Cluster& tc = tree_.cluster(cn.row);
      const Cluster& sc = tree_.cluster(cn.col);
      out.block(tc.offset - t.offset, sc.offset - s.offset, tc.size, sc.size) = dense(m, ch);
    }
    return out;
  }

  // V_t^H A V_r for a block of the left factor
  const DenseMatrix& proj_left(Index an) {
    if (auto it = left_.find(an); it != left_.end()) return it->second;
    const BlockNode& a = a_.blocks().node(an);
    DenseMatrix out;
    if (a.kind == BlockKind::Admissible) {
      out = a_.block(an) * basis_.gram_t(a.col);
    } else if (a.kind == BlockKind::Inadmissible) {
      out = basis_.leaf(a.row).adjoint() * a_.block(an) * basis_.leaf(a.col);
    } else {
      out = DenseMatrix::Zero(basis_.rank(a.row), basis_.rank(a.col));
      for (Index ch : a.children) {
        const BlockNode& cn = a_.blocks().node(ch);
        DenseMatrix p = proj_left(ch);
        if (const DenseMatrix* e = lift(a.row, cn.row)) p = e->adjoint() * p;
        if (const DenseMatrix* e = lift(a.col, cn.col)) p = p * *e;
        out += p;
      }
    }
    return left_.emplace(an, std::move(out)).first->second;
  }

  // V_r^T B conj(V_s) for a block of the right factor
  const DenseMatrix& proj_right(Index bn) {
    if (auto it = right_.find(bn); it != right_.end()) return it->second;
    const BlockNode& b = b_.blocks().node(bn);
    DenseMatrix out;
    if (b.kind == BlockKind::Admissible) {
      out = basis_.gram_t(b.row) * b_.block(bn);
    } else if (b.kind == BlockKind::Inadmissible) {
      out = basis_.leaf(b.row).transpose() * b_.block(bn) * basis_.leaf(b.col).conjugate();
    } else {
      out = DenseMatrix::Zero(basis_.rank(b.row), basis_.rank(b.col));
      for (Index ch : b.children) {
        const BlockNode& cn = b_.blocks().node(ch);
        DenseMatrix p = proj_right(ch);
        if (const DenseMatrix* e = lift(b.row, cn.row)) p = e->transpose() * p;
        if (const DenseMatrix* e = lift(b.col, cn.col)) p = p * e->conjugate();
        out += p;
      }
    }
    return right_.emplace(bn, std::move(out)).first->second;
  }

  // V_t^H A B conj(V_s)
  DenseMatrix proj_prod(Index an, Index bn) {
    const BlockNode& a = a_.blocks().node(an);
    const BlockNode& b = b_.blocks().node(bn);
    if (a.kind == BlockKind::Admissible) return a_.block(an) * proj_right(bn);
    if (b.kind == BlockKind::Admissible) return proj_left(an) * b_.block(bn);
    if (a.kind == BlockKind::Inadmissible && b.kind == BlockKind::Inadmissible) {
      return (basis_.leaf(a.row).adjoint() * a_.block(an)) *
             (b_.block(bn) * basis_.leaf(b.col).conjugate());
    }
    DenseMatrix out = DenseMatrix::Zero(basis_.rank(a.row), basis_.rank(b.col));
    for (Index tc : tree_.parts(a.row)) {
      for (Index sc : tree_.parts(b.col)) {
        DenseMatrix acc = DenseMatrix::Zero(basis_.rank(tc), basis_.rank(sc));
        for (Index rc : tree_.parts(a.col)) {
          acc += proj_prod(sub(a_, an, tc, rc), sub(b_, bn, rc, sc));
        }
        if (const DenseMatrix* e = lift(a.row, tc)) acc = e->adjoint() * acc;
        if (const DenseMatrix* e = lift(b.col, sc)) acc = acc * e->conjugate();
        out += acc;
      }
    }
    return out;
  }

  const H2Matrix& a_;
  const H2Matrix& b_;
  H2Matrix& c_;
  const ClusterBasis& basis_;
  const ClusterTree& tree_;
  const std::vector<DenseMatrix>& v_;
  std::unordered_map<Index, Accumulator> acc_;
  std::unordered_map<Index, DenseMatrix> left_;
  std::unordered_map<Index, DenseMatrix> right_;
};

void mul_add_with(const std::vector<DenseMatrix>& bases, Complex alpha, const H2Matrix& a,
                  Index a_node, const H2Matrix& b, Index b_node, H2Matrix& c, Index c_node) {
  ProductEngine engine(a, b, c, bases);
  engine.run(alpha, a_node, b_node, c_node);
}

}  // namespace

void h2_mul_add(Complex alpha, const H2Matrix& a, Index a_node, const H2Matrix& b, Index b_node,
                H2Matrix& c, Index c_node) {
  if (a.basis_ptr() != c.basis_ptr() || b.basis_ptr() != c.basis_ptr()) {
    throw Error("h2_mul_add: operands must share the cluster basis of the target");
  }
  const BlockNode& na = a.blocks().node(a_node);
  const BlockNode& nb = b.blocks().node(b_node);
  const BlockNode& nc = c.blocks().node(c_node);
  if (na.row != nc.row || nb.col != nc.col || na.col != nb.row) {
    throw Error("h2_mul_add: block clusters do not match");
  }
  mul_add_with(c.basis().materialize_all(), alpha, a, a_node, b, b_node, c, c_node);
}

H2Matrix h2_mul_formatted(const H2Matrix& a, const H2Matrix& b) {
  H2Matrix c(a.blocks_ptr(), a.basis_ptr());
  h2_mul_add(1.0, a, a.blocks().root(), b, b.blocks().root(), c, c.blocks().root());
  return c;
}

namespace {

void invert_node(const std::vector<DenseMatrix>& bases, H2Matrix& s, H2Matrix& x, Index d) {
  const BlockClusterTree& bt = s.blocks();
  const BlockNode& n = bt.node(d);
  if (n.row != n.col) throw Error("h2_invert: diagonal block expected");
  if (n.kind == BlockKind::Inadmissible) {
    try {
    s.block(d) = dense_lu_invert(s.block(d));
    } catch (const SingularMatrixError& e) {
      throw SingularMatrixError("h2_invert: singular leaf at cluster " + std::to_string(n.row) +
                                    ": " + e.what(),
                                e.pivot());
    }
    return;
  }
  if (n.kind != BlockKind::Subdivided) throw Error("h2_invert: admissible diagonal block");
  const Cluster& c = s.tree().cluster(n.row);
  const Index t1 = c.children[0];
  const Index t2 = c.children[1];
  const Index d11 = bt.child(d, t1, t1);
  const Index d12 = bt.child(d, t1, t2);
  const Index d21 = bt.child(d, t2, t1);
  const Index d22 = bt.child(d, t2, t2);

  invert_node(bases, s, x, d11);
  x.set_zero(d21);
  mul_add_with(bases, 1.0, s, d21, s, d11, x, d21);
  x.set_zero(d12);
  mul_add_with(bases, 1.0, s, d11, s, d12, x, d12);
  mul_add_with(bases, -1.0, x, d21, s, d12, s, d22);
  invert_node(bases, s, x, d22);
  s.set_zero(d21);
  mul_add_with(bases, -1.0, s, d22, x, d21, s, d21);
  s.set_zero(d12);
  mul_add_with(bases, -1.0, x, d12, s, d22, s, d12);
  mul_add_with(bases, -1.0, s, d12, x, d21, s, d11);
}

}  // namespace

void h2_invert_inplace(H2Matrix& s, H2Matrix& x) {
  if (!s.same_structure(x)) throw Error("h2_invert: workspace structure mismatch");
  invert_node(s.basis().materialize_all(), s, x, s.blocks().root());
}

H2Matrix h2_invert(const H2Matrix& m) {
  H2Matrix s = m;
  H2Matrix x(m.blocks_ptr(), m.basis_ptr());
  h2_invert_inplace(s, x);
  return s;
}

Vector random_unit_vector(Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = Complex(normal(rng), normal(rng));
  return v / v.norm();
}

Vector bicgstab_solve(const LinearOperator& apply, const Vector& rhs, double tol, Index max_iter,
                      SolveReport* report) {
  if (!(tol > 0.0 && tol < 1.0)) throw Error("bicgstab: tol must be in (0,1)");
  if (max_iter < 1) throw Error("bicgstab: max_iter must be >= 1");
  const auto t0 = std::chrono::steady_clock::now();
  SolveReport rep;
  const Index n = rhs.size();
  Vector x = Vector::Zero(n);
  const double bnorm = rhs.norm();

  auto finish = [&]() {
    rep.wall_time =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (report != nullptr) *report = rep;
    return x;
  };

  if (bnorm == 0.0) {
    rep.converged = true;
    return finish();
  }

  Vector r = rhs;
  Vector shadow = r;
  Vector p = Vector::Zero(n);
  Vector v = Vector::Zero(n);
  Complex rho = 1.0;
  Complex alpha = 1.0;
  Complex omega = 1.0;
  constexpr double kBreakdown = 1e-15;

  while (rep.iterations < max_iter) {
    Complex rho_new = shadow.dot(r);
    if (std::abs(rho_new) <= kBreakdown * shadow.norm() * r.norm() || std::abs(omega) == 0.0) {
      if (rep.restarted) break;
      rep.restarted = true;
      shadow = r + 1e-3 * r.norm() * random_unit_vector(n, 0x9e3779b9ULL);
      p.setZero();
      v.setZero();
      rho = alpha = omega = 1.0;
      rho_new = shadow.dot(r);
    }
    const Complex beta = (rho_new / rho) * (alpha / omega);
    rho = rho_new;
    p = r + beta * (p - omega * v);
    v = apply(p);
    const Complex sv = shadow.dot(v);
    if (std::abs(sv) == 0.0) {
      omega = 0.0;
      continue;
    }
    alpha = rho / sv;
    const Vector s = r - alpha * v;
    ++rep.iterations;
    if (s.norm() / bnorm <= tol) {
      x += alpha * p;
      rep.residual_history.push_back(s.norm() / bnorm);
      rep.converged = true;
      break;
    }
    const Vector t = apply(s);
    const double tt = t.squaredNorm();
    omega = tt > 0.0 ? t.dot(s) / tt : Complex(0.0);
    x += alpha * p + omega * s;
    r = s - omega * t;
    const double rel = r.norm() / bnorm;
    rep.residual_history.push_back(rel);
    if (rel <= tol) {
      rep.converged = true;
      break;
    }
  }
  return finish();
}

Vector apply_inverse_solve(const H2Matrix& inv, const Vector& e) { return matvec(inv, e); }

DenseMatrix apply_inverse_solve(const H2Matrix& inv, const DenseMatrix& e) {
  return matmat_apply(inv, e);
}

double inverse_residual_estimate(const LinearOperator& apply_s, const LinearOperator& apply_inv,
                                 Index n, int samples, std::uint64_t seed) {
  double worst = 0.0;
  for (int i = 0; i < samples; ++i) {
    const Vector v = random_unit_vector(n, seed + static_cast<std::uint64_t>(i));
    worst = std::max(worst, (v - apply_s(apply_inv(v))).norm());
  }
  return worst;
}

}  // namespace mrh2
