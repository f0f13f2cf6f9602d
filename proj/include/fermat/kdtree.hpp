#pragma once

// Exact k-nearest-neighbor search over the columns of a matrix.

#include "fermat/numerics.hpp"

#include <algorithm>
#include <numeric>
#include <queue>
#include <utility>
#include <vector>

namespace fermat {

struct Neighbor {
  double squared_distance;
  std::size_t index;

  friend bool operator<(const Neighbor &a, const Neighbor &b) {
    return a.squared_distance < b.squared_distance ||
           (a.squared_distance == b.squared_distance && a.index < b.index);
  }
  friend bool operator==(const Neighbor &, const Neighbor &) = default;
};

/// Static kd-tree. Ties are resolved by smaller point index, so queries are
/// fully deterministic. Degrades gracefully to a brute-force scan in high
/// dimension.
class KdTree {
public:
  static constexpr std::size_t kLeafSize = 16;

  /// `points` holds one point per column and must outlive the tree.
  explicit KdTree(const Matrix &points) : points_(&points), order_(points.cols()) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    if (!order_.empty())
      build(0, order_.size());
  }

  std::size_t size() const { return order_.size(); }
  Eigen::Index dim() const { return points_->rows(); }

  /// The k nearest columns to `query`, ascending. `exclude` (if in range) is
  /// skipped, which is how a point is kept out of its own neighbor list.
  std::vector<Neighbor> knn(const Eigen::Ref<const Vector> &query, std::size_t k,
                            std::size_t exclude = static_cast<std::size_t>(-1)) const {
    std::priority_queue<Neighbor> heap;
    if (k > 0 && !nodes_.empty())
      search(0, query, k, exclude, heap);
    std::vector<Neighbor> out;
    out.reserve(heap.size());
    while (!heap.empty()) {
      out.push_back(heap.top());
      heap.pop();
    }
    std::reverse(out.begin(), out.end());
    return out;
  }

private:
  struct Node {
    std::size_t begin, end;
    int axis = -1; // -1 for leaves
    double split = 0.0;
    std::size_t left = 0, right = 0;
  };

  std::size_t build(std::size_t begin, std::size_t end) {
    const std::size_t id = nodes_.size();
    nodes_.push_back({begin, end});
    if (end - begin <= kLeafSize)
      return id;

    const Matrix &P = *points_;
    Eigen::Index axis = 0;
    double widest = -1.0;
    for (Eigen::Index d = 0; d < P.rows(); ++d) {
      double lo = P(d, order_[begin]), hi = lo;
      for (std::size_t i = begin + 1; i < end; ++i) {
        lo = std::min(lo, P(d, order_[i]));
        hi = std::max(hi, P(d, order_[i]));
      }
      if (hi - lo > widest) {
        widest = hi - lo;
        axis = d;
      }
    }
    if (widest <= 0.0)
      return id; // all points coincide

    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::size_t a, std::size_t b) {
                       return P(axis, a) < P(axis, b) || (P(axis, a) == P(axis, b) && a < b);
                     });
    const double split = P(axis, order_[mid]);
    const std::size_t left = build(begin, mid);
    const std::size_t right = build(mid, end);
    nodes_[id].axis = static_cast<int>(axis);
    nodes_[id].split = split;
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
  }

  void search(std::size_t id, const Eigen::Ref<const Vector> &q, std::size_t k,
              std::size_t exclude, std::priority_queue<Neighbor> &heap) const {
    const Node &node = nodes_[id];
    if (node.axis < 0) {
      const Matrix &P = *points_;
      for (std::size_t i = node.begin; i < node.end; ++i) {
        const std::size_t idx = order_[i];
        if (idx == exclude)
          continue;
        const Neighbor cand{(P.col(static_cast<Eigen::Index>(idx)) - q).squaredNorm(), idx};
        if (heap.size() < k) {
          heap.push(cand);
        } else if (cand < heap.top()) {
          heap.pop();
          heap.push(cand);
        }
      }
      return;
    }
    const double diff = q[node.axis] - node.split;
    const std::size_t near = diff < 0.0 ? node.left : node.right;
    const std::size_t far = diff < 0.0 ? node.right : node.left;
    search(near, q, k, exclude, heap);
    if (heap.size() < k || diff * diff <= heap.top().squared_distance)
      search(far, q, k, exclude, heap);
  }

  const Matrix *points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

} // namespace fermat
