#include "rowcol/kdtree.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rowcol/errors.hpp"

namespace rowcol {

KdTree::KdTree(std::vector<Vec3> points) : pts_(std::move(points)) {
  if (pts_.empty()) return;
  std::vector<std::size_t> ids(pts_.size());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
  nodes_.reserve(pts_.size());
  root_ = build(ids, 0, ids.size());
}

int KdTree::build(std::vector<std::size_t>& ids, std::size_t lo,
                  std::size_t hi) {
  if (lo >= hi) return -1;
  // Split along the widest axis of this subset's bounding box.
  Aabb box;
  for (std::size_t i = lo; i < hi; ++i) box.expand(pts_[ids[i]]);
  const Vec3 ext = box.hi - box.lo;
  int axis = 0;
  if (ext.y > ext[axis]) axis = 1;
  if (ext.z > ext[axis]) axis = 2;

  const std::size_t mid = lo + (hi - lo) / 2;
  // (coordinate, index) is a strict total order, so the median point is
  // deterministic regardless of the library's partition details.
  std::nth_element(ids.begin() + lo, ids.begin() + mid, ids.begin() + hi,
                   [&](std::size_t a, std::size_t b) {
                     const double ca = pts_[a][axis];
                     const double cb = pts_[b][axis];
                     return ca < cb || (ca == cb && a < b);
                   });

  Node n;
  n.point = ids[mid];
  n.axis = axis;
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back(n);
  const int left = build(ids, lo, mid);
  const int right = build(ids, mid + 1, hi);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

void KdTree::search(int node, const Vec3& q, std::size_t k,
                    std::vector<Cand>& heap) const {
  if (node < 0) return;
  const Node& n = nodes_[node];
  const Vec3& p = pts_[n.point];
  const Cand cand{norm2(p - q), n.point};
  if (heap.size() < k) {
    heap.push_back(cand);
    std::push_heap(heap.begin(), heap.end());
  } else if (cand < heap.front()) {
    std::pop_heap(heap.begin(), heap.end());
    heap.back() = cand;
    std::push_heap(heap.begin(), heap.end());
  }

  const double delta = q[n.axis] - p[n.axis];
  const int near = delta < 0.0 ? n.left : n.right;
  const int far = delta < 0.0 ? n.right : n.left;
  search(near, q, k, heap);
  // Visit the far side unless it provably holds no better (d2, index)
  // candidate; at exact equality a lower index could still win a tie.
  if (heap.size() < k || delta * delta <= heap.front().d2)
    search(far, q, k, heap);
}

std::vector<Neighbor> KdTree::knn(const Vec3& q, std::size_t k) const {
  if (pts_.empty()) throw NumericError("knn: empty point set");
  if (k < 1 || k > pts_.size())
    throw NumericError("knn: k=" + std::to_string(k) + " outside [1, " +
                       std::to_string(pts_.size()) + "]");
  std::vector<Cand> heap;
  heap.reserve(k);
  search(root_, q, k, heap);
  std::sort(heap.begin(), heap.end());
  std::vector<Neighbor> out(heap.size());
  for (std::size_t i = 0; i < heap.size(); ++i)
    out[i] = Neighbor{heap[i].index, std::sqrt(heap[i].d2)};
  return out;
}

}  // namespace rowcol
