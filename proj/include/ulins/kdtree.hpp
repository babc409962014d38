#pragma once

// Small static 3-D KD-tree for the keyframe point maps. Built once per
// finalized keyframe, queried for 5-NN during association. Ties in distance
// are broken by point index so query results are reproducible.

#include <algorithm>
#include <vector>

#include "ulins/geometry.hpp"

namespace ulins {

class KdTree {
 public:
  KdTree() = default;

  explicit KdTree(std::vector<Vec3> points) : points_(std::move(points)) {
    order_.resize(points_.size());
    for (size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<int>(i);
    if (!points_.empty()) {
      nodes_.reserve(2 * points_.size() / kLeafSize + 2);
      root_ = build(0, static_cast<int>(points_.size()));
    }
  }

  size_t size() const { return points_.size(); }
  const Vec3& point(int i) const { return points_[i]; }

  // Indices of the k nearest points, sorted by (distance, index).
  // Returns fewer than k when the tree is smaller.
  std::vector<int> knn(const Vec3& q, int k) const {
    Best best;
    best.k = k;
    if (root_ >= 0) search(root_, q, best);
    std::sort(best.heap.begin(), best.heap.end());
    std::vector<int> out;
    out.reserve(best.heap.size());
    for (const auto& [d2, i] : best.heap) out.push_back(i);
    return out;
  }

 private:
  static constexpr int kLeafSize = 16;

  struct Node {
    int axis = -1;        // -1 marks a leaf
    double split = 0.0;
    int left = -1, right = -1;
    int begin = 0, end = 0;  // leaf range into order_
  };

  struct Best {
    int k = 0;
    std::vector<std::pair<double, int>> heap;  // max-heap on (dist2, index)

    double worst() const { return heap.front().first; }
    bool full() const { return static_cast<int>(heap.size()) == k; }
    void offer(double d2, int idx) {
      if (!full()) {
        heap.emplace_back(d2, idx);
        std::push_heap(heap.begin(), heap.end());
      } else if (std::make_pair(d2, idx) < heap.front()) {
        std::pop_heap(heap.begin(), heap.end());
        heap.back() = {d2, idx};
        std::push_heap(heap.begin(), heap.end());
      }
    }
  };

  int build(int begin, int end) {
    Node n;
    if (end - begin <= kLeafSize) {
      n.begin = begin;
      n.end = end;
      nodes_.push_back(n);
      return static_cast<int>(nodes_.size()) - 1;
    }
    // Split along the axis with the largest spread.
    Vec3 lo = points_[order_[begin]], hi = lo;
    for (int i = begin + 1; i < end; ++i) {
      lo = lo.cwiseMin(points_[order_[i]]);
      hi = hi.cwiseMax(points_[order_[i]]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    const int mid = (begin + end) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid,
                     order_.begin() + end, [&](int a, int b) {
                       const double ca = points_[a][axis], cb = points_[b][axis];
                       return ca < cb || (ca == cb && a < b);
                     });
    n.axis = axis;
    n.split = points_[order_[mid]][axis];
    const int self = static_cast<int>(nodes_.size());
    nodes_.push_back(n);
    const int l = build(begin, mid);
    const int r = build(mid, end);
    nodes_[self].left = l;
    nodes_[self].right = r;
    return self;
  }

  void search(int ni, const Vec3& q, Best& best) const {
    const Node& n = nodes_[ni];
    if (n.axis < 0) {
      for (int i = n.begin; i < n.end; ++i) {
        const int idx = order_[i];
        best.offer((points_[idx] - q).squaredNorm(), idx);
      }
      return;
    }
    const double delta = q[n.axis] - n.split;
    const int near = delta < 0.0 ? n.left : n.right;
    const int far = delta < 0.0 ? n.right : n.left;
    search(near, q, best);
    if (!best.full() || delta * delta <= best.worst()) {
      search(far, q, best);
    }
  }

  std::vector<Vec3> points_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

}  // namespace ulins
