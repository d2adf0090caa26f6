#pragma once

#include <algorithm>
#include <vector>

#include "garment/error.hpp"
#include "garment/sim/dataset.hpp"
#include "garment/sim/state.hpp"
#include "garment/vec3.hpp"

namespace garment {

enum class Category : int {
  GarmentLeftGrasped = 0,
  GarmentRightGrasped = 1,
  MainBody = 2,
  ActionNode = 3,
};
inline constexpr int kCategoryCount = 4;

struct GraphConfig {
  int k = 6;
  int region_size = 250;
  bool cross_region = true;
};

struct GraphNode {
  Vec3 position;
  Category category = Category::MainBody;
  Vec3 action_feature;   // zero for non-action nodes
  int source_index = -1; // particle index; -1 left gripper, -2 right gripper
};

struct GraphEdge {
  int sender = 0;
  int receiver = 0;
  Vec3 relative_displacement;  // receiver - sender
  double length = 0.0;
};

/// Per-dimension standardization constants, estimated on the training corpus
/// and carried with the model for inference.
struct NormalizationStats {
  Vec3 pos_mean{}, pos_std{1, 1, 1};
  Vec3 edge_mean{}, edge_std{1, 1, 1};
  double len_mean = 0.0, len_std = 1.0;
  Vec3 act_mean{}, act_std{1, 1, 1};
  Vec3 target_std{1, 1, 1};  // scale-only so a zero network output stays a
                             // zero position delta
  bool zero_std_replaced = false;
};

struct GarmentGraph {
  std::vector<GraphNode> nodes;
  std::vector<GraphEdge> edges;
  int k = 0;
  bool normalized = false;
  int action_left_id = -1;
  int action_right_id = -1;
  std::vector<int> eligible;  // node ids with edges, ascending

  Vec3 action_midpoint() const {
    return 0.5 * (nodes[action_left_id].position +
                  nodes[action_right_id].position);
  }
};

/// What graph construction needs from a state; adapters below.
struct GraphSource {
  const PointSet* positions = nullptr;
  const std::vector<int>* left_region = nullptr;
  const std::vector<int>* right_region = nullptr;
  Vec3 gripper_left, gripper_right;
};

inline GraphSource graph_source(const sim::GarmentState& s) {
  return {&s.positions, &s.left_region, &s.right_region, s.gripper_left,
          s.gripper_right};
}

inline GraphSource graph_source(const sim::Transition& t) {
  return {&t.positions, &t.left_region, &t.right_region, t.gripper_left,
          t.gripper_right};
}

/// Directed KNN edge list over a point set: each node i gets an edge to its
/// k nearest admissible neighbors (ties broken by the lower id). `allowed`
/// filters candidate pairs (sender, receiver). Distances are quantized to
/// 1e-9 cm for the comparison so that mirror-symmetric configurations tie
/// exactly and resolve by id instead of by floating-point noise.
template <typename AllowedFn>
std::vector<std::pair<int, int>> knn_edges(const PointSet& pts, int k,
                                           AllowedFn allowed) {
  const int n = static_cast<int>(pts.size());
  std::vector<std::pair<int, int>> edges;
  std::vector<std::pair<long long, int>> cand;
  for (int i = 0; i < n; ++i) {
    cand.clear();
    for (int j = 0; j < n; ++j) {
      if (j == i || !allowed(i, j)) continue;
      cand.emplace_back(std::llround(distance(pts[i], pts[j]) * 1e9), j);
    }
    int take = std::min<int>(k, static_cast<int>(cand.size()));
    std::partial_sort(cand.begin(), cand.begin() + take, cand.end());
    for (int t = 0; t < take; ++t) edges.emplace_back(i, cand[t].second);
  }
  return edges;
}

/// Typed KNN graph over the grasped regions and the two action nodes.
/// Main-body particles are carried as isolated nodes so output indexing
/// still matches the full state.
inline GarmentGraph build_graph(const GraphSource& src, const sim::Action& action,
                                const GraphConfig& cfg) {
  if (cfg.k < 1) throw Error("bad-config", "graph k must be >= 1");
  if (src.left_region->empty() || src.right_region->empty())
    throw Error("graph-construction", "grasp regions are empty");

  GarmentGraph g;
  g.k = cfg.k;
  const int n = static_cast<int>(src.positions->size());
  g.nodes.resize(n + 2);
  for (int i = 0; i < n; ++i) {
    g.nodes[i].position = (*src.positions)[i];
    g.nodes[i].category = Category::MainBody;
    g.nodes[i].source_index = i;
  }
  for (int i : *src.left_region) {
    if (i < 0 || i >= n)
      throw Error("graph-construction", "left region index out of range");
    g.nodes[i].category = Category::GarmentLeftGrasped;
  }
  for (int i : *src.right_region) {
    if (i < 0 || i >= n)
      throw Error("graph-construction", "right region index out of range");
    g.nodes[i].category = Category::GarmentRightGrasped;
  }
  g.action_left_id = n;
  g.action_right_id = n + 1;
  g.nodes[n] = {src.gripper_left, Category::ActionNode, action.delta_left, -1};
  g.nodes[n + 1] =
      {src.gripper_right, Category::ActionNode, action.delta_right, -2};

  for (int i = 0; i < n + 2; ++i)
    if (g.nodes[i].category != Category::MainBody) g.eligible.push_back(i);

  PointSet epos;
  epos.reserve(g.eligible.size());
  for (int id : g.eligible) epos.push_back(g.nodes[id].position);
  auto cat = [&](int row) { return g.nodes[g.eligible[row]].category; };
  auto allowed = [&](int a, int b) {
    if (cfg.cross_region) return true;
    Category ca = cat(a), cb = cat(b);
    if (ca == Category::ActionNode || cb == Category::ActionNode) return true;
    return ca == cb;
  };
  for (auto [a, b] : knn_edges(epos, cfg.k, allowed)) {
    GraphEdge e;
    e.sender = g.eligible[a];
    e.receiver = g.eligible[b];
    e.relative_displacement =
        g.nodes[e.receiver].position - g.nodes[e.sender].position;
    e.length = norm(e.relative_displacement);
    g.edges.push_back(e);
  }
  return g;
}

namespace detail {

struct RunningMoments {
  double sum[3] = {0, 0, 0}, sq[3] = {0, 0, 0};
  long long n = 0;
  void add(const Vec3& v) {
    for (int c = 0; c < 3; ++c) {
      sum[c] += v[c];
      sq[c] += v[c] * v[c];
    }
    ++n;
  }
  Vec3 mean() const {
    return n ? Vec3{sum[0] / n, sum[1] / n, sum[2] / n} : Vec3{};
  }
  Vec3 stddev(bool* replaced) const {
    Vec3 m = mean(), out{1, 1, 1};
    for (int c = 0; c < 3; ++c) {
      double var = n ? sq[c] / n - m[c] * m[c] : 0.0;
      double sd = std::sqrt(std::max(var, 0.0));
      if (sd < 1e-12) {
        out[c] = 1.0;
        if (replaced) *replaced = true;
      } else {
        out[c] = sd;
      }
    }
    return out;
  }
};

}  // namespace detail

/// Population mean/std over the eligible nodes of a graph corpus plus the
/// per-dimension scale of the supervision deltas.
inline NormalizationStats compute_normalization_stats(
    const std::vector<GarmentGraph>& corpus,
    const std::vector<Vec3>& target_deltas = {}) {
  NormalizationStats st;
  detail::RunningMoments pos, edge, act, tgt;
  detail::RunningMoments len;  // uses component 0 only
  for (const GarmentGraph& g : corpus) {
    if (g.normalized)
      throw Error("graph-construction",
                  "stats must be computed on unnormalized graphs");
    Vec3 mid = g.action_midpoint();
    for (int id : g.eligible) {
      pos.add(g.nodes[id].position - mid);
      if (g.nodes[id].category == Category::ActionNode)
        act.add(g.nodes[id].action_feature);
    }
    for (const GraphEdge& e : g.edges) {
      edge.add(e.relative_displacement);
      len.add({e.length, 0, 0});
    }
  }
  for (const Vec3& d : target_deltas) tgt.add(d);
  bool replaced = false;
  st.pos_mean = pos.mean();
  st.pos_std = pos.stddev(&replaced);
  st.edge_mean = edge.mean();
  st.edge_std = edge.stddev(&replaced);
  st.len_mean = len.mean().x;
  st.len_std = len.stddev(&replaced).x;
  st.act_mean = act.mean();
  st.act_std = act.stddev(&replaced);
  if (!target_deltas.empty()) st.target_std = tgt.stddev(&replaced);
  st.zero_std_replaced = replaced;
  return st;
}

inline Vec3 standardize(const Vec3& v, const Vec3& mean, const Vec3& std) {
  return {(v.x - mean.x) / std.x, (v.y - mean.y) / std.y,
          (v.z - mean.z) / std.z};
}

/// Express node positions relative to the action-node midpoint, then
/// standardize positions, action features and edge features.
inline GarmentGraph normalize_graph(const GarmentGraph& graph,
                                    const NormalizationStats& stats) {
  if (graph.normalized)
    throw Error("graph-construction", "graph is already normalized");
  GarmentGraph g = graph;
  Vec3 mid = g.action_midpoint();
  for (GraphNode& node : g.nodes) {
    node.position = standardize(node.position - mid, stats.pos_mean,
                                stats.pos_std);
    if (node.category == Category::ActionNode)
      node.action_feature =
          standardize(node.action_feature, stats.act_mean, stats.act_std);
  }
  for (GraphEdge& e : g.edges) {
    e.relative_displacement =
        standardize(e.relative_displacement, stats.edge_mean, stats.edge_std);
    e.length = (e.length - stats.len_mean) / stats.len_std;
  }
  g.normalized = true;
  return g;
}

}  // namespace garment
