#pragma once

#include <array>
#include <memory>
#include <span>
#include <vector>

#include "mrh2/linalg.hpp"

namespace mrh2 {

struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  double operator[](int axis) const { return axis == 0 ? x : (axis == 1 ? y : z); }
};

/// Axis-aligned bounding box.
struct Box {
  std::array<double, 3> lo{0.0, 0.0, 0.0};
  std::array<double, 3> hi{0.0, 0.0, 0.0};

  static Box of(std::span<const Point3> points);

  double diameter() const;
  double distance(const Box& other) const;
  int longest_axis() const;
};

struct Cluster {
  Index id = 0;
  Index offset = 0;  // first position in the permuted index array
  Index size = 0;
  Box bbox;
  std::array<Index, 2> children{-1, -1};
  Index parent = -1;
  int level = 0;

  bool is_leaf() const { return children[0] < 0; }
  Index end() const { return offset + size; }
};

/// Balanced binary cluster tree over a point cloud.
///
/// Each non-leaf cluster is split at the median coordinate along the longest
/// edge of its bounding box (ties broken by original index); the first child
/// receives ceil(size / 2) points. A cluster is a leaf iff size <= n_min.
class ClusterTree {
 public:
  ClusterTree(std::span<const Point3> points, Index n_min);

  Index root() const { return 0; }
  Index num_clusters() const { return static_cast<Index>(clusters_.size()); }
  Index num_points() const { return static_cast<Index>(perm_.size()); }
  Index n_min() const { return n_min_; }
  int depth() const { return depth_; }

  const Cluster& cluster(Index id) const { return clusters_[static_cast<std::size_t>(id)]; }
  const std::vector<Cluster>& clusters() const { return clusters_; }

  /// perm[i] is the original index of the point at tree position i.
  const std::vector<Index>& permutation() const { return perm_; }
  /// inverse_permutation()[original] is the tree position.
  const std::vector<Index>& inverse_permutation() const { return iperm_; }

  /// Children of t, or {t} when t is a leaf.
  std::vector<Index> parts(Index t) const;

  /// Root-to-t path, root first, t last.
  std::vector<Index> path_to(Index t) const;

  /// Cluster ids in bottom-up order (children always precede parents).
  std::vector<Index> bottom_up() const;

  /// Cluster ids grouped by level.
  std::vector<std::vector<Index>> by_level() const;

  /// Whether a is an ancestor of b or equal to it.
  bool is_ancestor_or_self(Index a, Index b) const;

 private:
  Index build(std::span<const Point3> points, Index offset, Index size, Index parent, int level);

  Index n_min_;
  int depth_ = 0;
  std::vector<Cluster> clusters_;
  std::vector<Index> perm_;
  std::vector<Index> iperm_;
};

/// Strong admissibility: max(diam t, diam s) <= eta * dist(t, s).
bool is_admissible(const Cluster& t, const Cluster& s, double eta);

enum class BlockKind { Admissible, Inadmissible, Subdivided };

struct BlockNode {
  Index row = 0;
  Index col = 0;
  BlockKind kind = BlockKind::Inadmissible;
  int level = 0;
  Index parent = -1;
  std::vector<Index> children;  // row-major over parts(row) x parts(col)
};

/// Block cluster tree of a cluster tree with itself.
class BlockClusterTree {
 public:
  BlockClusterTree(std::shared_ptr<const ClusterTree> tree, double eta);

  const ClusterTree& tree() const { return *tree_; }
  const std::shared_ptr<const ClusterTree>& tree_ptr() const { return tree_; }
  double eta() const { return eta_; }

  Index root() const { return 0; }
  Index num_nodes() const { return static_cast<Index>(nodes_.size()); }
  const BlockNode& node(Index id) const { return nodes_[static_cast<std::size_t>(id)]; }
  const std::vector<BlockNode>& nodes() const { return nodes_; }

  /// Child of a subdivided node covering (row, col).
  Index child(Index id, Index row, Index col) const;

  /// Admissible leaves with row cluster t, ordered by column cluster offset.
  const std::vector<Index>& admissible_in_row(Index t) const {
    return adm_row_[static_cast<std::size_t>(t)];
  }
  /// Admissible leaves with column cluster s, ordered by row cluster offset.
  const std::vector<Index>& admissible_in_col(Index s) const {
    return adm_col_[static_cast<std::size_t>(s)];
  }

  std::vector<Index> leaves() const;
  std::vector<Index> admissible_leaves() const;
  std::vector<Index> inadmissible_leaves() const;

  /// Node id of the block (t, s) if present, else -1.
  Index find(Index t, Index s) const;

 private:
  Index build(Index t, Index s, int level, Index parent);

  std::shared_ptr<const ClusterTree> tree_;
  double eta_;
  std::vector<BlockNode> nodes_;
  std::vector<std::vector<Index>> adm_row_;
  std::vector<std::vector<Index>> adm_col_;
};

struct SparsityConstant {
  std::vector<Index> per_level;  // indexed by row cluster level
  Index global = 0;
};

/// Per level, the maximum number of admissible blocks owned by a row cluster.
SparsityConstant sparsity_constant(const BlockClusterTree& bt);

}  // namespace mrh2
