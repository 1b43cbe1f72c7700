#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <queue>
#include <stdexcept>
#include <vector>

namespace ldlmoe {

/// Exact k-nearest-neighbor search over fixed points in R^m.
/// Median-split tree, cycling axes; queries prune on hyperplane distance.
class KdTree {
public:
    explicit KdTree(std::vector<std::vector<double>> points) : points_(std::move(points)) {
        if (points_.empty()) throw std::invalid_argument("KdTree: no points");
        dim_ = points_[0].size();
        for (const auto& p : points_)
            if (p.size() != dim_) throw std::invalid_argument("KdTree: inconsistent dimensions");
        index_.resize(points_.size());
        for (std::size_t i = 0; i < index_.size(); ++i) index_[i] = i;
        root_ = build(0, points_.size(), 0);
    }

    /// Indices of the k nearest points to `query`, excluding `exclude`
    /// (pass size() or larger to keep all). Ties broken by index for
    /// deterministic output; result sorted by ascending distance.
    std::vector<std::size_t> knn(const std::vector<double>& query, std::size_t k,
                                 std::size_t exclude = static_cast<std::size_t>(-1)) const {
        if (query.size() != dim_) throw std::invalid_argument("KdTree::knn: query dimension mismatch");
        if (k == 0) return {};
        // max-heap of (dist2, index)
        std::priority_queue<std::pair<double, std::size_t>> best;
        search(root_, query, k, exclude, best);
        std::vector<std::pair<double, std::size_t>> out;
        while (!best.empty()) {
            out.push_back(best.top());
            best.pop();
        }
        std::sort(out.begin(), out.end());
        std::vector<std::size_t> idx;
        idx.reserve(out.size());
        for (const auto& [d, i] : out) idx.push_back(i);
        return idx;
    }

    std::size_t size() const { return points_.size(); }
    std::size_t dim() const { return dim_; }

    static double dist2(const std::vector<double>& a, const std::vector<double>& b) {
        double s = 0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            double d = a[i] - b[i];
            s += d * d;
        }
        return s;
    }

private:
    struct Node {
        std::size_t point = 0;
        std::size_t axis = 0;
        int left = -1, right = -1;
    };

    std::vector<std::vector<double>> points_;
    std::vector<std::size_t> index_;
    std::vector<Node> nodes_;
    std::size_t dim_;
    int root_;

    int build(std::size_t lo, std::size_t hi, std::size_t depth) {
        if (lo >= hi) return -1;
        std::size_t axis = depth % dim_;
        std::size_t mid = (lo + hi) / 2;
        std::nth_element(index_.begin() + static_cast<long>(lo), index_.begin() + static_cast<long>(mid),
                         index_.begin() + static_cast<long>(hi), [&](std::size_t a, std::size_t b) {
                             double va = points_[a][axis], vb = points_[b][axis];
                             return va < vb || (va == vb && a < b);
                         });
        Node n;
        n.point = index_[mid];
        n.axis = axis;
        int id = static_cast<int>(nodes_.size());
        nodes_.push_back(n);
        int l = build(lo, mid, depth + 1);
        int r = build(mid + 1, hi, depth + 1);
        nodes_[static_cast<std::size_t>(id)].left = l;
        nodes_[static_cast<std::size_t>(id)].right = r;
        return id;
    }

    void search(int node, const std::vector<double>& q, std::size_t k, std::size_t exclude,
                std::priority_queue<std::pair<double, std::size_t>>& best) const {
        if (node < 0) return;
        const Node& n = nodes_[static_cast<std::size_t>(node)];
        if (n.point != exclude) {
            double d2 = dist2(q, points_[n.point]);
            if (best.size() < k) {
                best.emplace(d2, n.point);
            } else if (d2 < best.top().first ||
                       (d2 == best.top().first && n.point < best.top().second)) {
                best.pop();
                best.emplace(d2, n.point);
            }
        }
        double diff = q[n.axis] - points_[n.point][n.axis];
        int near = diff <= 0 ? n.left : n.right;
        int far = diff <= 0 ? n.right : n.left;
        search(near, q, k, exclude, best);
        if (best.size() < k || diff * diff <= best.top().first) search(far, q, k, exclude, best);
    }
};

}  // namespace ldlmoe
