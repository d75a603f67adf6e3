#pragma once

// kd-tree over 3d points for exact nearest-neighbor queries (used by the
// Chamfer metric).  Splits cycle through axes with deterministic tie-breaks.

#include <algorithm>
#include <limits>
#include <vector>

#include "hoi/common.hpp"
#include "hoi/geom/vec3.hpp"

namespace hoi::geom {

class KdTree3 {
 public:
  explicit KdTree3(std::vector<V3> points) : pts_(std::move(points)) {
    if (pts_.empty()) fail("KdTree3: no points");
    order_.resize(pts_.size());
    for (size_t i = 0; i < pts_.size(); ++i) order_[i] = static_cast<int64_t>(i);
    nodes_.reserve(2 * pts_.size());
    root_ = build(0, static_cast<int64_t>(pts_.size()), 0);
  }

  struct Hit {
    int64_t index = -1;
    double dist2 = std::numeric_limits<double>::infinity();
  };

  Hit nearest(const V3& q) const {
    Hit best;
    search(root_, q, best);
    return best;
  }

  const std::vector<V3>& points() const { return pts_; }

 private:
  struct Node {
    int axis = 0;
    int64_t point = -1;      // index into pts_
    int64_t left = -1, right = -1;
  };

  std::vector<V3> pts_;
  std::vector<int64_t> order_;
  std::vector<Node> nodes_;
  int64_t root_ = -1;

  int64_t build(int64_t lo, int64_t hi, int depth) {
    if (lo >= hi) return -1;
    int axis = depth % 3;
    int64_t mid = (lo + hi) / 2;
    std::nth_element(order_.begin() + lo, order_.begin() + mid, order_.begin() + hi,
                     [&](int64_t a, int64_t b) {
                       double ca = pts_[static_cast<size_t>(a)][axis];
                       double cb = pts_[static_cast<size_t>(b)][axis];
                       return ca < cb || (ca == cb && a < b);
                     });
    int64_t idx = static_cast<int64_t>(nodes_.size());
    nodes_.push_back({axis, order_[static_cast<size_t>(mid)], -1, -1});
    int64_t l = build(lo, mid, depth + 1);
    int64_t r = build(mid + 1, hi, depth + 1);
    nodes_[static_cast<size_t>(idx)].left = l;
    nodes_[static_cast<size_t>(idx)].right = r;
    return idx;
  }

  void search(int64_t ni, const V3& q, Hit& best) const {
    if (ni < 0) return;
    const Node& n = nodes_[static_cast<size_t>(ni)];
    const V3& p = pts_[static_cast<size_t>(n.point)];
    double d2 = norm2(q - p);
    if (d2 < best.dist2 || (d2 == best.dist2 && n.point < best.index)) {
      best.dist2 = d2;
      best.index = n.point;
    }
    double delta = q[n.axis] - p[n.axis];
    int64_t near = delta <= 0 ? n.left : n.right;
    int64_t far = delta <= 0 ? n.right : n.left;
    search(near, q, best);
    if (delta * delta <= best.dist2) search(far, q, best);
  }
};

}  // namespace hoi::geom
