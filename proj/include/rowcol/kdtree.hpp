#pragma once

#include <cstddef>
#include <vector>

#include "rowcol/vec3.hpp"

namespace rowcol {

struct Neighbor {
  std::size_t index;
  double dist;  // Euclidean
};

// Static kd-tree over a point set with exact k-nearest-neighbor queries.
// Results match a brute-force scan exactly: candidates are ordered by
// (squared distance, index) lexicographically, so ties break toward the
// lower index, and subtrees are only pruned when they provably cannot
// contain a better candidate (strict inequality).
class KdTree {
 public:
  explicit KdTree(std::vector<Vec3> points);

  std::size_t size() const { return pts_.size(); }
  const std::vector<Vec3>& points() const { return pts_; }

  // k exact nearest neighbors of q, ascending (distance, index).
  // Requires 1 <= k <= size().
  std::vector<Neighbor> knn(const Vec3& q, std::size_t k) const;

  // Convenience: the single nearest neighbor.
  Neighbor nearest(const Vec3& q) const { return knn(q, 1)[0]; }

 private:
  struct Node {
    std::size_t point;  // original index into pts_
    int axis;
    int left = -1;
    int right = -1;
  };

  struct Cand {
    double d2;
    std::size_t index;
    bool operator<(const Cand& o) const {
      return d2 < o.d2 || (d2 == o.d2 && index < o.index);
    }
  };

  int build(std::vector<std::size_t>& ids, std::size_t lo, std::size_t hi);
  void search(int node, const Vec3& q, std::size_t k,
              std::vector<Cand>& heap) const;

  std::vector<Vec3> pts_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

}  // namespace rowcol
