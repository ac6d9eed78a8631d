#include "mrh2/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace mrh2 {

Box Box::of(std::span<const Point3> points) {
  Box b;
  if (points.empty()) return b;
  for (int a = 0; a < 3; ++a) {
    b.lo[a] = std::numeric_limits<double>::infinity();
    b.hi[a] = -std::numeric_limits<double>::infinity();
  }
  for (const Point3& p : points) {
    for (int a = 0; a < 3; ++a) {
      b.lo[a] = std::min(b.lo[a], p[a]);
      b.hi[a] = std::max(b.hi[a], p[a]);
    }
  }
  return b;
}

double Box::diameter() const {
  double d2 = 0.0;
  for (int a = 0; a < 3; ++a) d2 += (hi[a] - lo[a]) * (hi[a] - lo[a]);
  return std::sqrt(d2);
}

double Box::distance(const Box& other) const {
  double d2 = 0.0;
  for (int a = 0; a < 3; ++a) {
    const double gap = std::max({0.0, other.lo[a] - hi[a], lo[a] - other.hi[a]});
    d2 += gap * gap;
  }
  return std::sqrt(d2);
}

int Box::longest_axis() const {
  int best = 0;
  for (int a = 1; a < 3; ++a) {
    if (hi[a] - lo[a] > hi[best] - lo[best]) best = a;
  }
  return best;
}

ClusterTree::ClusterTree(std::span<const Point3> points, Index n_min) : n_min_(n_min) {
  if (n_min < 1) throw Error("ClusterTree: n_min must be >= 1");
  if (points.empty()) throw Error("ClusterTree: empty point set");
  const Index n = static_cast<Index>(points.size());
  perm_.resize(static_cast<std::size_t>(n));
  std::iota(perm_.begin(), perm_.end(), Index{0});
  build(points, 0, n, -1, 0);
  iperm_.resize(perm_.size());
  for (std::size_t i = 0; i < perm_.size(); ++i) {
    iperm_[static_cast<std::size_t>(perm_[i])] = static_cast<Index>(i);
  }
}

Index ClusterTree::build(std::span<const Point3> points, Index offset, Index size,
                         Index parent, int level) {
  const Index id = static_cast<Index>(clusters_.size());
  clusters_.push_back(Cluster{});
  depth_ = std::max(depth_, level);

  auto first = perm_.begin() + offset;
  auto last = first + size;
  std::vector<Point3> local;
  local.reserve(static_cast<std::size_t>(size));
  for (auto it = first; it != last; ++it) local.push_back(points[static_cast<std::size_t>(*it)]);

  Cluster c;
  c.id = id;
  c.offset = offset;
  c.size = size;
  c.bbox = Box::of(local);
  c.parent = parent;
  c.level = level;

  if (size > n_min_) {
    const int axis = c.bbox.longest_axis();
    const Index left = (size + 1) / 2;
    std::nth_element(first, first + left, last, [&](Index a, Index b) {
      const double ca = points[static_cast<std::size_t>(a)][axis];
      const double cb = points[static_cast<std::size_t>(b)][axis];
      return ca < cb || (ca == cb && a < b);
    });
    // keep each half in original-index order so the layout is reproducible
    std::sort(first, first + left);
    std::sort(first + left, last);
    clusters_[static_cast<std::size_t>(id)] = c;
    const Index c0 = build(points, offset, left, id, level + 1);
    const Index c1 = build(points, offset + left, size - left, id, level + 1);
    clusters_[static_cast<std::size_t>(id)].children = {c0, c1};
  } else {
    clusters_[static_cast<std::size_t>(id)] = c;
  }
  return id;
}

std::vector<Index> ClusterTree::parts(Index t) const {
  const Cluster& c = cluster(t);
  if (c.is_leaf()) return {t};
  return {c.children[0], c.children[1]};
}

std::vector<Index> ClusterTree::path_to(Index t) const {
  std::vector<Index> path;
  for (Index c = t; c >= 0; c = cluster(c).parent) path.push_back(c);
  std::reverse(path.begin(), path.end());
  return path;
}

std::vector<Index> ClusterTree::bottom_up() const {
  // ids are assigned in pre-order, so reverse order visits children first
  std::vector<Index> order(clusters_.size());
  std::iota(order.rbegin(), order.rend(), Index{0});
  return order;
}

std::vector<std::vector<Index>> ClusterTree::by_level() const {
  std::vector<std::vector<Index>> levels(static_cast<std::size_t>(depth_) + 1);
  for (const Cluster& c : clusters_) levels[static_cast<std::size_t>(c.level)].push_back(c.id);
  return levels;
}

bool ClusterTree::is_ancestor_or_self(Index a, Index b) const {
  const Cluster& ca = cluster(a);
  const Cluster& cb = cluster(b);
  return ca.level <= cb.level && ca.offset <= cb.offset && cb.end() <= ca.end();
}

bool is_admissible(const Cluster& t, const Cluster& s, double eta) {
  const double diam = std::max(t.bbox.diameter(), s.bbox.diameter());
  const double dist = t.bbox.distance(s.bbox);
  return dist > 0.0 && diam <= eta * dist;
}

BlockClusterTree::BlockClusterTree(std::shared_ptr<const ClusterTree> tree, double eta)
    : tree_(std::move(tree)), eta_(eta) {
  if (!(eta > 0.0)) throw Error("BlockClusterTree: eta must be positive");
  adm_row_.resize(static_cast<std::size_t>(tree_->num_clusters()));
  adm_col_.resize(static_cast<std::size_t>(tree_->num_clusters()));
  build(tree_->root(), tree_->root(), 0, -1);
  const ClusterTree& ct = *tree_;
  for (auto& v : adm_row_) {
    std::sort(v.begin(), v.end(), [&](Index a, Index b) {
      return ct.cluster(node(a).col).offset < ct.cluster(node(b).col).offset;
    });
  }
  for (auto& v : adm_col_) {
    std::sort(v.begin(), v.end(), [&](Index a, Index b) {
      return ct.cluster(node(a).row).offset < ct.cluster(node(b).row).offset;
    });
  }
}

Index BlockClusterTree::build(Index t, Index s, int level, Index parent) {
  const Index id = static_cast<Index>(nodes_.size());
  nodes_.push_back(BlockNode{t, s, BlockKind::Inadmissible, level, parent, {}});
  const Cluster& ct = tree_->cluster(t);
  const Cluster& cs = tree_->cluster(s);
  if (is_admissible(ct, cs, eta_)) {
    nodes_[static_cast<std::size_t>(id)].kind = BlockKind::Admissible;
    adm_row_[static_cast<std::size_t>(t)].push_back(id);
    adm_col_[static_cast<std::size_t>(s)].push_back(id);
    return id;
  }
  if (ct.is_leaf() && cs.is_leaf()) return id;

  nodes_[static_cast<std::size_t>(id)].kind = BlockKind::Subdivided;
  std::vector<Index> kids;
  for (Index tc : tree_->parts(t)) {
    for (Index sc : tree_->parts(s)) kids.push_back(build(tc, sc, level + 1, id));
  }
  nodes_[static_cast<std::size_t>(id)].children = std::move(kids);
  return id;
}

Index BlockClusterTree::child(Index id, Index row, Index col) const {
  for (Index c : node(id).children) {
    const BlockNode& n = node(c);
    if (n.row == row && n.col == col) return c;
  }
  throw Error("BlockClusterTree: no child block for the requested clusters");
}

std::vector<Index> BlockClusterTree::leaves() const {
  std::vector<Index> out;
  for (Index i = 0; i < num_nodes(); ++i) {
    if (node(i).kind != BlockKind::Subdivided) out.push_back(i);
  }
  return out;
}

std::vector<Index> BlockClusterTree::admissible_leaves() const {
  std::vector<Index> out;
  for (Index i = 0; i < num_nodes(); ++i) {
    if (node(i).kind == BlockKind::Admissible) out.push_back(i);
  }
  return out;
}

std::vector<Index> BlockClusterTree::inadmissible_leaves() const {
  std::vector<Index> out;
  for (Index i = 0; i < num_nodes(); ++i) {
    if (node(i).kind == BlockKind::Inadmissible) out.push_back(i);
  }
  return out;
}

Index BlockClusterTree::find(Index t, Index s) const {
  Index id = root();
  const ClusterTree& ct = *tree_;
  while (true) {
    const BlockNode& n = node(id);
    if (n.row == t && n.col == s) return id;
    if (n.kind != BlockKind::Subdivided) return -1;
    Index next = -1;
    for (Index c : n.children) {
      const BlockNode& cn = node(c);
      if (ct.is_ancestor_or_self(cn.row, t) && ct.is_ancestor_or_self(cn.col, s)) {
        next = c;
        break;
      }
    }
    if (next < 0) return -1;
    id = next;
  }
}

SparsityConstant sparsity_constant(const BlockClusterTree& bt) {
  const ClusterTree& ct = bt.tree();
  SparsityConstant out;
  out.per_level.assign(static_cast<std::size_t>(ct.depth()) + 1, 0);
  for (Index t = 0; t < ct.num_clusters(); ++t) {
    const Index count = static_cast<Index>(bt.admissible_in_row(t).size());
    auto& slot = out.per_level[static_cast<std::size_t>(ct.cluster(t).level)];
    slot = std::max(slot, count);
  }
  for (Index c : out.per_level) out.global = std::max(out.global, c);
  return out;
}

}  // namespace mrh2
