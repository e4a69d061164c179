#pragma once

// Nearest-neighbor mapping of real minutiae into a synthetic template.
//
// Distances are squared Euclidean on (x, y) only; orientation plays no part
// in the search. Neighbors are ordered by (distance_sq, st_index), so equal
// distances resolve to the lower synthetic-template index.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "cancelmin/minutiae.hpp"

namespace cancelmin {

struct Neighbor {
  std::size_t st_index = 0;
  std::int64_t distance_sq = 0;

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
  friend bool operator<(const Neighbor& a, const Neighbor& b) {
    return a.distance_sq != b.distance_sq ? a.distance_sq < b.distance_sq : a.st_index < b.st_index;
  }
};

struct NeighborResult {
  Minutia query;
  std::vector<Neighbor> neighbors;

  friend bool operator==(const NeighborResult&, const NeighborResult&) = default;
};

inline std::int64_t planar_distance_sq(const Minutia& a, const Minutia& b) noexcept {
  const std::int64_t dx = static_cast<std::int64_t>(a.x) - b.x;
  const std::int64_t dy = static_cast<std::int64_t>(a.y) - b.y;
  return dx * dx + dy * dy;
}

namespace detail {

inline void check_k(std::size_t k, std::size_t n) {
  if (k < 1) throw ContractError("k must be >= 1");
  if (k > n) {
    throw ContractError("k = " + std::to_string(k) + " exceeds synthetic template size " + std::to_string(n));
  }
}

}  // namespace detail

/// Exhaustive k-NN scan. Reference implementation for the tree below.
inline NeighborResult brute_force_knn(const Template& st, const Minutia& q, std::size_t k) {
  detail::check_k(k, st.size());
  std::vector<Neighbor> all(st.size());
  for (std::size_t i = 0; i < st.size(); ++i) all[i] = {i, planar_distance_sq(st[i], q)};
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end());
  all.resize(k);
  return {q, std::move(all)};
}

/// Balanced 2-d tree over the positions of a synthetic template. Each node
/// splits its wider side at the median; leaves hold small buckets of original
/// indices. Immutable after construction, so concurrent queries are safe.
class SpatialIndex {
public:
  static constexpr std::size_t kLeafSize = 8;

  explicit SpatialIndex(const Template& st) {
    if (st.kind() != TemplateKind::Synthetic) throw ContractError("spatial index requires a synthetic template");
    if (st.empty()) throw ContractError("cannot index an empty synthetic template");
    points_.reserve(st.size());
    for (std::size_t i = 0; i < st.size(); ++i) points_.push_back({st[i].x, st[i].y, static_cast<std::uint32_t>(i)});
    nodes_.reserve(2 * st.size() / kLeafSize + 2);
    build(0, points_.size());
  }

  std::size_t size() const noexcept { return points_.size(); }

  NeighborResult query(const Minutia& q, std::size_t k) const {
    detail::check_k(k, points_.size());
    std::vector<Neighbor> heap;  // max-heap on (distance_sq, st_index)
    heap.reserve(k + 1);
    search(0, q.x, q.y, k, heap);
    std::sort_heap(heap.begin(), heap.end());
    return {q, std::move(heap)};
  }

private:
  struct Point {
    int x, y;
    std::uint32_t index;
  };
  struct Node {
    std::uint32_t begin, end;  // range into points_
    std::int32_t left = -1, right = -1;
    int axis = 0;
    int split = 0;
    // bounding box of the subtree
    int min_x, min_y, max_x, max_y;
  };

  std::int32_t build(std::size_t begin, std::size_t end) {
    const auto id = static_cast<std::int32_t>(nodes_.size());
    Node node{};
    node.begin = static_cast<std::uint32_t>(begin);
    node.end = static_cast<std::uint32_t>(end);
    node.min_x = node.min_y = INT32_MAX;
    node.max_x = node.max_y = INT32_MIN;
    for (std::size_t i = begin; i < end; ++i) {
      node.min_x = std::min(node.min_x, points_[i].x);
      node.max_x = std::max(node.max_x, points_[i].x);
      node.min_y = std::min(node.min_y, points_[i].y);
      node.max_y = std::max(node.max_y, points_[i].y);
    }
    nodes_.push_back(node);
    if (end - begin <= kLeafSize) return id;

    const int axis = (node.max_x - node.min_x >= node.max_y - node.min_y) ? 0 : 1;
    const std::size_t mid = begin + (end - begin) / 2;
    auto coord = [axis](const Point& p) { return axis == 0 ? p.x : p.y; };
    std::nth_element(points_.begin() + static_cast<std::ptrdiff_t>(begin),
                     points_.begin() + static_cast<std::ptrdiff_t>(mid),
                     points_.begin() + static_cast<std::ptrdiff_t>(end), [&](const Point& a, const Point& b) {
                       return coord(a) != coord(b) ? coord(a) < coord(b) : a.index < b.index;
                     });
    const std::int32_t l = build(begin, mid);
    const std::int32_t r = build(mid, end);
    nodes_[static_cast<std::size_t>(id)].left = l;
    nodes_[static_cast<std::size_t>(id)].right = r;
    nodes_[static_cast<std::size_t>(id)].axis = axis;
    nodes_[static_cast<std::size_t>(id)].split = coord(points_[mid]);
    return id;
  }

  static std::int64_t box_distance_sq(const Node& n, int x, int y) noexcept {
    std::int64_t dx = 0, dy = 0;
    if (x < n.min_x) dx = n.min_x - x;
    else if (x > n.max_x) dx = x - n.max_x;
    if (y < n.min_y) dy = n.min_y - y;
    else if (y > n.max_y) dy = y - n.max_y;
    return dx * dx + dy * dy;
  }

  void offer(std::vector<Neighbor>& heap, std::size_t k, Neighbor cand) const {
    if (heap.size() < k) {
      heap.push_back(cand);
      std::push_heap(heap.begin(), heap.end());
    } else if (cand < heap.front()) {
      std::pop_heap(heap.begin(), heap.end());
      heap.back() = cand;
      std::push_heap(heap.begin(), heap.end());
    }
  }

  void search(std::int32_t id, int x, int y, std::size_t k, std::vector<Neighbor>& heap) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    // A subtree at equal distance may still hold a lower index, so only
    // strictly farther boxes are pruned.
    if (heap.size() == k && box_distance_sq(n, x, y) > heap.front().distance_sq) return;
    if (n.left < 0) {
      for (std::uint32_t i = n.begin; i < n.end; ++i) {
        const Point& p = points_[i];
        const std::int64_t dx = static_cast<std::int64_t>(p.x) - x;
        const std::int64_t dy = static_cast<std::int64_t>(p.y) - y;
        offer(heap, k, {p.index, dx * dx + dy * dy});
      }
      return;
    }
    const int c = n.axis == 0 ? x : y;
    const bool left_first = c < n.split;
    search(left_first ? n.left : n.right, x, y, k, heap);
    search(left_first ? n.right : n.left, x, y, k, heap);
  }

  std::vector<Point> points_;
  std::vector<Node> nodes_;
};

inline SpatialIndex build_index(const Template& st) { return SpatialIndex(st); }

inline NeighborResult query_knn(const SpatialIndex& index, const Minutia& q, std::size_t k) {
  return index.query(q, k);
}

namespace detail {

// Stable 64-bit identifier for a synthetic template that carries no seed
// (e.g. one loaded from disk): FNV-1a over its .xyt serialization.
inline std::uint64_t content_fingerprint(const Template& t) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : serialize_xyt(t)) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

}  // namespace detail

/// Indices into `st` selected for each source minutia at ordinal `l`
/// (1-based), in source order, before duplicate removal.
inline std::vector<std::size_t> select_ordinal(const Template& source, const SpatialIndex& index, std::size_t l) {
  detail::check_k(l, index.size());
  std::vector<std::size_t> picks;
  picks.reserve(source.size());
  for (const Minutia& m : source.minutiae()) picks.push_back(index.query(m, l).neighbors.back().st_index);
  return picks;
}

/// Maps every source minutia to its l-th nearest synthetic minutia and keeps
/// the distinct selections in first-selection order.
inline Template construct_vt(const Template& rt, const Template& st, const SpatialIndex& index, std::size_t l) {
  if (st.kind() != TemplateKind::Synthetic) throw ContractError("construct_vt: second argument must be a synthetic template");
  if (rt.kind() == TemplateKind::Synthetic) throw ContractError("construct_vt: source must be a real or verification template");
  if (rt.width() != st.width() || rt.height() != st.height()) {
    throw ContractError("construct_vt: dimension mismatch " + std::to_string(rt.width()) + "x" +
                        std::to_string(rt.height()) + " vs " + std::to_string(st.width()) + "x" +
                        std::to_string(st.height()));
  }
  if (index.size() != st.size()) throw ContractError("construct_vt: index was built over a different template");
  if (l < 1 || l > st.size()) {
    throw ContractError("construct_vt: ordinal " + std::to_string(l) + " outside [1, " + std::to_string(st.size()) + "]");
  }

  std::vector<Minutia> out;
  out.reserve(rt.size());
  std::vector<bool> taken(st.size(), false);
  for (std::size_t idx : select_ordinal(rt, index, l)) {
    if (taken[idx]) continue;
    taken[idx] = true;
    out.push_back(st[idx]);
  }

  Provenance p;
  p.finger_id = rt.provenance().finger_id;
  p.impression_id = rt.provenance().impression_id;
  p.generation = rt.provenance().generation + 1;
  p.st_seed = st.provenance().st_seed ? *st.provenance().st_seed : detail::content_fingerprint(st);
  p.ordinal_l = static_cast<int>(l);
  return Template::create(std::move(out), st.width(), st.height(), TemplateKind::Verification, std::move(p));
}

inline Template construct_vt(const Template& rt, const Template& st, std::size_t l) {
  if (st.kind() != TemplateKind::Synthetic) throw ContractError("construct_vt: second argument must be a synthetic template");
  if (st.empty()) throw ContractError("construct_vt: ordinal " + std::to_string(l) + " exceeds empty synthetic template");
  return construct_vt(rt, st, SpatialIndex(st), l);
}

/// Re-transforms a verification template against a fresh synthetic template.
inline Template chain_generation(const Template& vt_prev, const Template& st_new, const SpatialIndex& index,
                                 std::size_t l_new) {
  if (vt_prev.kind() != TemplateKind::Verification) throw ContractError("chain_generation: source must be a verification template");
  return construct_vt(vt_prev, st_new, index, l_new);
}

inline Template chain_generation(const Template& vt_prev, const Template& st_new, std::size_t l_new) {
  if (vt_prev.kind() != TemplateKind::Verification) throw ContractError("chain_generation: source must be a verification template");
  return construct_vt(vt_prev, st_new, l_new);
}

/// Number of real minutiae reproduced exactly in a verification template.
/// The construction cannot rule these collisions out; they are reported.
inline std::size_t rt_vt_collisions(const Template& rt, const Template& vt) { return common_minutiae(rt, vt); }

}  // namespace cancelmin
