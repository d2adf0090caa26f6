#pragma once

#include <vector>

#include "garment/error.hpp"
#include "garment/vec3.hpp"

namespace garment {

struct NearestNeighbor {
  int index = -1;
  double distance = 0.0;
};

/// Exact nearest neighbor by linear scan; ties resolve to the lowest index.
inline NearestNeighbor nearest_neighbor(const Vec3& query, const PointSet& set) {
  if (set.empty()) throw Error("empty-input", "nearest_neighbor: empty point set");
  NearestNeighbor best{0, distance(query, set[0])};
  for (int i = 1; i < static_cast<int>(set.size()); ++i) {
    double d = distance(query, set[i]);
    if (d < best.distance) best = {i, d};
  }
  return best;
}

/// Nearest-neighbor matching in both directions plus the Chamfer value.
/// Convention: 0.5 * (mean_a min_b |a-b| + mean_b min_a |b-a|), unsquared
/// Euclidean distances, so values stay in cm.
struct ChamferMatch {
  std::vector<int> a_to_b;
  std::vector<int> b_to_a;
  double value = 0.0;
};

inline ChamferMatch chamfer_match(const PointSet& a, const PointSet& b) {
  if (a.empty() || b.empty())
    throw Error("empty-input", "chamfer: empty point set");
  ChamferMatch m;
  m.a_to_b.resize(a.size());
  m.b_to_a.resize(b.size());
  double sum_ab = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    NearestNeighbor nn = nearest_neighbor(a[i], b);
    m.a_to_b[i] = nn.index;
    sum_ab += nn.distance;
  }
  double sum_ba = 0.0;
  for (std::size_t j = 0; j < b.size(); ++j) {
    NearestNeighbor nn = nearest_neighbor(b[j], a);
    m.b_to_a[j] = nn.index;
    sum_ba += nn.distance;
  }
  m.value = 0.5 * (sum_ab / static_cast<double>(a.size()) +
                   sum_ba / static_cast<double>(b.size()));
  return m;
}

inline double chamfer(const PointSet& a, const PointSet& b) {
  return chamfer_match(a, b).value;
}

/// Chamfer value for a frozen matching (the per-step subgradient treatment
/// used by residual training and its gradient tests).
inline double chamfer_fixed(const PointSet& a, const PointSet& b,
                            const ChamferMatch& m) {
  double sum_ab = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    sum_ab += distance(a[i], b[m.a_to_b[i]]);
  double sum_ba = 0.0;
  for (std::size_t j = 0; j < b.size(); ++j)
    sum_ba += distance(b[j], a[m.b_to_a[j]]);
  return 0.5 * (sum_ab / static_cast<double>(a.size()) +
                sum_ba / static_cast<double>(b.size()));
}

/// d(chamfer_fixed)/da with the matching held fixed. Zero-length pairs
/// contribute a zero subgradient.
inline std::vector<Vec3> chamfer_backward(const PointSet& a, const PointSet& b,
                                          const ChamferMatch& m,
                                          double upstream = 1.0) {
  std::vector<Vec3> grad(a.size());
  const double wa = 0.5 * upstream / static_cast<double>(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    Vec3 d = a[i] - b[m.a_to_b[i]];
    double n = norm(d);
    if (n > 1e-12) grad[i] += (wa / n) * d;
  }
  const double wb = 0.5 * upstream / static_cast<double>(b.size());
  for (std::size_t j = 0; j < b.size(); ++j) {
    Vec3 d = a[m.b_to_a[j]] - b[j];
    double n = norm(d);
    if (n > 1e-12) grad[m.b_to_a[j]] += (wb / n) * d;
  }
  return grad;
}

}  // namespace garment
