#pragma once

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

#include "garment/graph.hpp"
#include "garment/nn/adam.hpp"
#include "garment/nn/mlp.hpp"
#include "garment/rng.hpp"
#include "garment/sim/dataset.hpp"

namespace garment {

struct DynamicsConfig {
  int latent = 128;
  int blocks = 15;
  int mlp_hidden_layers = 2;
  int epochs = 100;
  double lr = 1e-4;
  double lr_gamma = 0.5;
  int lr_step = 20;
  double noise_sigma = 0.05;  // input jitter augmentation, cm
  double val_split = 0.1;
};

inline constexpr int kNodeFeatureDim = 3 + kCategoryCount + 3;
inline constexpr int kEdgeFeatureDim = 4;

/// Encoder-Processor-Decoder over the garment graph. Encoders and processor
/// MLPs end in layer normalization; the decoder does not. The decoder output
/// is a per-node position delta in the normalized frame, so a zero-weight
/// model is the identity map on positions.
struct DynamicsModel {
  DynamicsConfig cfg;
  GraphConfig graph_cfg;
  nn::Mlp node_encoder, edge_encoder;
  std::vector<nn::Mlp> edge_blocks, node_blocks;
  nn::Mlp decoder;
  NormalizationStats stats;

  static DynamicsModel make(const DynamicsConfig& cfg, const GraphConfig& gcfg,
                            std::uint64_t init_seed, bool zero_init = false) {
    DynamicsModel m;
    m.cfg = cfg;
    m.graph_cfg = gcfg;
    const int d = cfg.latent;
    auto hidden = [&](int in, int out, bool ln) {
      nn::MlpSpec spec;
      spec.sizes.push_back(in);
      for (int i = 0; i < cfg.mlp_hidden_layers; ++i) spec.sizes.push_back(d);
      spec.sizes.push_back(out);
      spec.layer_norm = ln;
      return spec;
    };
    Rng rng(init_seed);
    auto build = [&](const nn::MlpSpec& spec) {
      nn::Mlp mlp;
      mlp.spec = spec;
      if (zero_init)
        mlp.zero_init();
      else
        mlp.init(rng);
      return mlp;
    };
    m.node_encoder = build(hidden(kNodeFeatureDim, d, true));
    m.edge_encoder = build(hidden(kEdgeFeatureDim, d, true));
    for (int l = 0; l < cfg.blocks; ++l) {
      m.edge_blocks.push_back(build(hidden(3 * d, d, true)));
      m.node_blocks.push_back(build(hidden(2 * d, d, true)));
    }
    m.decoder = build(hidden(d, 3, false));
    return m;
  }

  void visit(const std::function<void(std::span<double>)>& fn) {
    node_encoder.visit(fn);
    edge_encoder.visit(fn);
    for (std::size_t l = 0; l < edge_blocks.size(); ++l) {
      edge_blocks[l].visit(fn);
      node_blocks[l].visit(fn);
    }
    decoder.visit(fn);
  }

  nn::ParamRefs params() {
    nn::ParamRefs r;
    visit([&](std::span<double> s) { r.push_back(s); });
    return r;
  }
};

struct DynamicsGrads {
  nn::MlpGrads node_encoder, edge_encoder;
  std::vector<nn::MlpGrads> edge_blocks, node_blocks;
  nn::MlpGrads decoder;

  void init_like(const DynamicsModel& m) {
    node_encoder.init_like(m.node_encoder);
    edge_encoder.init_like(m.edge_encoder);
    edge_blocks.resize(m.edge_blocks.size());
    node_blocks.resize(m.node_blocks.size());
    for (std::size_t l = 0; l < m.edge_blocks.size(); ++l) {
      edge_blocks[l].init_like(m.edge_blocks[l]);
      node_blocks[l].init_like(m.node_blocks[l]);
    }
    decoder.init_like(m.decoder);
  }

  void set_zero() {
    node_encoder.set_zero();
    edge_encoder.set_zero();
    for (auto& g : edge_blocks) g.set_zero();
    for (auto& g : node_blocks) g.set_zero();
    decoder.set_zero();
  }

  nn::ParamRefs refs() {
    nn::ParamRefs r;
    auto push = [&](std::span<double> s) { r.push_back(s); };
    node_encoder.visit(push);
    edge_encoder.visit(push);
    for (std::size_t l = 0; l < edge_blocks.size(); ++l) {
      edge_blocks[l].visit(push);
      node_blocks[l].visit(push);
    }
    decoder.visit(push);
    return r;
  }
};

/// Node feature rows for the eligible nodes: (position, one-hot category,
/// action feature). Graph must be normalized first.
inline nn::Tensor2 assemble_node_features(const GarmentGraph& g) {
  nn::Tensor2 x(static_cast<int>(g.eligible.size()), kNodeFeatureDim);
  for (std::size_t r = 0; r < g.eligible.size(); ++r) {
    const GraphNode& node = g.nodes[g.eligible[r]];
    double* row = x.row(static_cast<int>(r));
    row[0] = node.position.x;
    row[1] = node.position.y;
    row[2] = node.position.z;
    row[3 + static_cast<int>(node.category)] = 1.0;
    row[3 + kCategoryCount + 0] = node.action_feature.x;
    row[3 + kCategoryCount + 1] = node.action_feature.y;
    row[3 + kCategoryCount + 2] = node.action_feature.z;
  }
  return x;
}

inline nn::Tensor2 assemble_edge_features(const GarmentGraph& g) {
  nn::Tensor2 x(static_cast<int>(g.edges.size()), kEdgeFeatureDim);
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    double* row = x.row(static_cast<int>(e));
    row[0] = g.edges[e].relative_displacement.x;
    row[1] = g.edges[e].relative_displacement.y;
    row[2] = g.edges[e].relative_displacement.z;
    row[3] = g.edges[e].length;
  }
  return x;
}

struct ForwardTrace {
  int blocks_executed = 0;
};

struct BlockCache {
  nn::MlpCache edge_mlp;
  nn::MlpCache node_mlp;
};

struct DynamicsForwardCache {
  std::vector<int> sender_row, recv_row;  // per edge, rows into V
  std::vector<int> grasped_rows;          // rows of grasped nodes in V
  std::vector<int> grasped_particles;     // aligned particle indices
  nn::MlpCache enc_v, enc_e;
  std::vector<BlockCache> blocks;
  std::vector<nn::Tensor2> V, E;  // latents per stage, [0..L]
  nn::MlpCache dec;
};

namespace detail {

inline void build_index_maps(const GarmentGraph& g, DynamicsForwardCache& c) {
  std::vector<int> row_of(g.nodes.size(), -1);
  for (std::size_t r = 0; r < g.eligible.size(); ++r)
    row_of[g.eligible[r]] = static_cast<int>(r);
  c.sender_row.resize(g.edges.size());
  c.recv_row.resize(g.edges.size());
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    c.sender_row[e] = row_of[g.edges[e].sender];
    c.recv_row[e] = row_of[g.edges[e].receiver];
  }
  c.grasped_rows.clear();
  c.grasped_particles.clear();
  for (std::size_t r = 0; r < g.eligible.size(); ++r) {
    const GraphNode& node = g.nodes[g.eligible[r]];
    if (node.category == Category::GarmentLeftGrasped ||
        node.category == Category::GarmentRightGrasped) {
      c.grasped_rows.push_back(static_cast<int>(r));
      c.grasped_particles.push_back(node.source_index);
    }
  }
}

inline nn::Tensor2 concat_cols(const nn::Tensor2& a, const nn::Tensor2& b) {
  nn::Tensor2 out(a.rows, a.cols + b.cols);
  for (int r = 0; r < a.rows; ++r) {
    std::copy(a.row(r), a.row(r) + a.cols, out.row(r));
    std::copy(b.row(r), b.row(r) + b.cols, out.row(r) + a.cols);
  }
  return out;
}

}  // namespace detail

/// Per-node and per-edge latents from the normalized graph.
inline void encode(const DynamicsModel& m, const GarmentGraph& g,
                   DynamicsForwardCache& c) {
  if (!g.normalized)
    throw Error("precondition", "encode requires a normalized graph");
  detail::build_index_maps(g, c);
  nn::Tensor2 xv = assemble_node_features(g);
  nn::Tensor2 xe = assemble_edge_features(g);
  c.V.clear();
  c.E.clear();
  c.V.push_back(nn::mlp_forward(m.node_encoder, xv, &c.enc_v));
  if (xe.rows > 0)
    c.E.push_back(nn::mlp_forward(m.edge_encoder, xe, &c.enc_e));
  else
    c.E.push_back(nn::Tensor2(0, m.cfg.latent));
}

/// Message-passing blocks: edge update from (edge, sender, receiver), then
/// node update from (node, sum of incoming updated edges), both with
/// residual connections. Isolated nodes see a zero aggregate.
inline void process(const DynamicsModel& m, DynamicsForwardCache& c,
                    ForwardTrace* trace = nullptr) {
  const int d = m.cfg.latent;
  for (std::size_t l = 0; l < m.edge_blocks.size(); ++l) {
    c.blocks.emplace_back();
    BlockCache& bc = c.blocks.back();
    const nn::Tensor2& v_in = c.V[l];
    const nn::Tensor2& e_in = c.E[l];
    const int ne = e_in.rows;

    nn::Tensor2 e_out = e_in;
    if (ne > 0) {
      nn::Tensor2 gather(ne, 2 * d);
      for (int e = 0; e < ne; ++e) {
        const double* vs = v_in.row(c.sender_row[e]);
        const double* vr = v_in.row(c.recv_row[e]);
        std::copy(vs, vs + d, gather.row(e));
        std::copy(vr, vr + d, gather.row(e) + d);
      }
      nn::Tensor2 edge_in = detail::concat_cols(e_in, gather);
      nn::Tensor2 de = nn::mlp_forward(m.edge_blocks[l], edge_in, &bc.edge_mlp);
      for (std::size_t i = 0; i < e_out.v.size(); ++i) e_out.v[i] += de.v[i];
    }

    nn::Tensor2 agg(v_in.rows, d);
    for (int e = 0; e < ne; ++e) {
      double* a = agg.row(c.recv_row[e]);
      const double* er = e_out.row(e);
      for (int i = 0; i < d; ++i) a[i] += er[i];
    }
    nn::Tensor2 node_in = detail::concat_cols(v_in, agg);
    nn::Tensor2 dv = nn::mlp_forward(m.node_blocks[l], node_in, &bc.node_mlp);
    nn::Tensor2 v_out = v_in;
    for (std::size_t i = 0; i < v_out.v.size(); ++i) v_out.v[i] += dv.v[i];

    c.E.push_back(std::move(e_out));
    c.V.push_back(std::move(v_out));
    if (trace) ++trace->blocks_executed;
  }
}

/// Normalized position deltas for the grasped nodes.
inline nn::Tensor2 decode(const DynamicsModel& m, DynamicsForwardCache& c) {
  const nn::Tensor2& v = c.V.back();
  nn::Tensor2 grasped(static_cast<int>(c.grasped_rows.size()), m.cfg.latent);
  for (std::size_t i = 0; i < c.grasped_rows.size(); ++i) {
    const double* src = v.row(c.grasped_rows[i]);
    std::copy(src, src + m.cfg.latent, grasped.row(static_cast<int>(i)));
  }
  return nn::mlp_forward(m.decoder, grasped, &c.dec);
}

inline nn::Tensor2 dynamics_forward(const DynamicsModel& m,
                                    const GarmentGraph& normalized,
                                    DynamicsForwardCache& c,
                                    ForwardTrace* trace = nullptr) {
  encode(m, normalized, c);
  process(m, c, trace);
  return decode(m, c);
}

/// Reverse pass through decode -> blocks -> encoders; accumulates into g.
inline void dynamics_backward(const DynamicsModel& m,
                              const DynamicsForwardCache& c,
                              const nn::Tensor2& dY, DynamicsGrads& g) {
  const int d = m.cfg.latent;
  const int nv = c.V[0].rows;
  const int ne = c.E[0].rows;
  const int L = static_cast<int>(m.edge_blocks.size());

  // Decoder.
  nn::Tensor2 d_grasped;
  nn::mlp_backward(m.decoder, c.dec, dY, g.decoder, &d_grasped);
  nn::Tensor2 dV(nv, d), dE(ne, d);
  for (std::size_t i = 0; i < c.grasped_rows.size(); ++i) {
    double* dst = dV.row(c.grasped_rows[i]);
    const double* src = d_grasped.row(static_cast<int>(i));
    for (int k = 0; k < d; ++k) dst[k] += src[k];
  }

  for (int l = L - 1; l >= 0; --l) {
    const BlockCache& bc = c.blocks[l];
    // Node update backward: V_out = V_in + f_v([V_in, agg]).
    nn::Tensor2 d_node_in;
    nn::mlp_backward(m.node_blocks[l], bc.node_mlp, dV, g.node_blocks[l],
                     &d_node_in);
    nn::Tensor2 dV_in = dV;  // residual path
    nn::Tensor2 dagg(nv, d);
    for (int r = 0; r < nv; ++r) {
      const double* dj = d_node_in.row(r);
      double* dvi = dV_in.row(r);
      double* da = dagg.row(r);
      for (int k = 0; k < d; ++k) {
        dvi[k] += dj[k];
        da[k] = dj[k + d];
      }
    }
    // Aggregate backward: every incoming edge of r receives dagg[r].
    nn::Tensor2 dE_out = dE;
    for (int e = 0; e < ne; ++e) {
      const double* da = dagg.row(c.recv_row[e]);
      double* de = dE_out.row(e);
      for (int k = 0; k < d; ++k) de[k] += da[k];
    }
    // Edge update backward: E_out = E_in + f_e([E_in, V_s, V_r]).
    nn::Tensor2 dE_in = dE_out;  // residual path
    if (ne > 0) {
      nn::Tensor2 d_edge_in;
      nn::mlp_backward(m.edge_blocks[l], bc.edge_mlp, dE_out, g.edge_blocks[l],
                       &d_edge_in);
      for (int e = 0; e < ne; ++e) {
        const double* di = d_edge_in.row(e);
        double* dei = dE_in.row(e);
        double* dvs = dV_in.row(c.sender_row[e]);
        double* dvr = dV_in.row(c.recv_row[e]);
        for (int k = 0; k < d; ++k) {
          dei[k] += di[k];
          dvs[k] += di[k + d];
          dvr[k] += di[k + 2 * d];
        }
      }
    }
    dV = std::move(dV_in);
    dE = std::move(dE_in);
  }

  nn::mlp_backward(m.node_encoder, c.enc_v, dV, g.node_encoder, nullptr);
  if (ne > 0) nn::mlp_backward(m.edge_encoder, c.enc_e, dE, g.edge_encoder, nullptr);
}

/// Predicted absolute positions of the grasped-region particles.
struct Prediction {
  std::vector<int> indices;  // particle indices, ascending
  PointSet points;
};

inline Prediction predict(const DynamicsModel& m, const GraphSource& src,
                          const sim::Action& action,
                          ForwardTrace* trace = nullptr) {
  GarmentGraph graph = build_graph(src, action, m.graph_cfg);
  GarmentGraph normalized = normalize_graph(graph, m.stats);
  DynamicsForwardCache c;
  nn::Tensor2 y = dynamics_forward(m, normalized, c, trace);
  Prediction out;
  out.indices = c.grasped_particles;
  out.points.reserve(out.indices.size());
  for (std::size_t i = 0; i < out.indices.size(); ++i) {
    Vec3 delta{y.at(static_cast<int>(i), 0) * m.stats.target_std.x,
               y.at(static_cast<int>(i), 1) * m.stats.target_std.y,
               y.at(static_cast<int>(i), 2) * m.stats.target_std.z};
    out.points.push_back((*src.positions)[out.indices[i]] + delta);
  }
  return out;
}

inline Prediction predict(const DynamicsModel& m, const sim::GarmentState& s,
                          const sim::Action& action) {
  return predict(m, graph_source(s), action);
}

inline Prediction predict(const DynamicsModel& m, const sim::Transition& t) {
  return predict(m, graph_source(t), t.action);
}

struct EpochLoss {
  double train_mse = 0.0;  // cm^2, mean over grasped coordinates
  double val_mse = 0.0;
};

struct TrainResult {
  DynamicsModel model;
  std::vector<EpochLoss> curve;
  double best_val = 0.0;
  int best_epoch = -1;
};

namespace detail {

/// Supervision targets: raw position deltas of the grasped particles.
inline nn::Tensor2 grasped_target_deltas(const sim::Transition& t,
                                         const std::vector<int>& particles) {
  nn::Tensor2 tgt(static_cast<int>(particles.size()), 3);
  for (std::size_t i = 0; i < particles.size(); ++i) {
    Vec3 delta = t.next_positions[particles[i]] - t.positions[particles[i]];
    tgt.at(static_cast<int>(i), 0) = delta.x;
    tgt.at(static_cast<int>(i), 1) = delta.y;
    tgt.at(static_cast<int>(i), 2) = delta.z;
  }
  return tgt;
}

/// MSE in cm^2 between predicted and true deltas; fills the upstream
/// gradient w.r.t. the decoder output (normalized units) when requested.
inline double delta_mse(const nn::Tensor2& y, const nn::Tensor2& target_cm,
                        const NormalizationStats& st, nn::Tensor2* dY) {
  const int n = y.rows;
  if (dY) *dY = nn::Tensor2(n, 3);
  double loss = 0.0;
  const double denom = static_cast<double>(n) * 3.0;
  const Vec3 sd = st.target_std;
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < 3; ++c) {
      double scale = sd[c];
      double diff = y.at(r, c) * scale - target_cm.at(r, c);
      loss += diff * diff;
      if (dY) dY->at(r, c) = 2.0 * diff * scale / denom;
    }
  }
  return loss / denom;
}

inline sim::Transition jittered(const sim::Transition& t, double sigma,
                                Rng& rng) {
  sim::Transition j = t;
  if (sigma > 0.0)
    for (Vec3& p : j.positions) {
      p.x += rng.normal(0.0, sigma);
      p.y += rng.normal(0.0, sigma);
      p.z += rng.normal(0.0, sigma);
    }
  return j;
}

}  // namespace detail

/// Supervised training: per-step loss is the MSE between predicted and true
/// grasped-region positions (index correspondence), Adam with a stepped
/// learning-rate decay, optional input jitter, best-validation selection.
inline TrainResult train_dynamics(const std::vector<sim::Transition>& dataset,
                                  const DynamicsConfig& cfg,
                                  const GraphConfig& gcfg, std::uint64_t seed) {
  if (dataset.empty()) throw Error("empty-input", "train_dynamics: no data");

  std::vector<int> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng(derive_seed(seed, "split"));
  split_rng.shuffle(order);
  int n_val = static_cast<int>(std::lround(cfg.val_split * dataset.size()));
  n_val = std::min<int>(n_val, static_cast<int>(dataset.size()) - 1);
  std::vector<int> val_idx(order.begin(), order.begin() + n_val);
  std::vector<int> train_idx(order.begin() + n_val, order.end());

  // Normalization stats from the unjittered training split.
  std::vector<GarmentGraph> stat_graphs;
  std::vector<Vec3> stat_deltas;
  for (int i : train_idx) {
    const sim::Transition& t = dataset[i];
    stat_graphs.push_back(build_graph(graph_source(t), t.action, gcfg));
    for (const std::vector<int>* region : {&t.left_region, &t.right_region})
      for (int p : *region)
        stat_deltas.push_back(t.next_positions[p] - t.positions[p]);
  }
  NormalizationStats stats = compute_normalization_stats(stat_graphs, stat_deltas);
  stat_graphs.clear();
  stat_graphs.shrink_to_fit();

  DynamicsModel model = DynamicsModel::make(cfg, gcfg, derive_seed(seed, "init"));
  model.stats = stats;

  DynamicsGrads grads;
  grads.init_like(model);
  nn::ParamRefs params = model.params();
  nn::AdamState adam = nn::AdamState::init(params, cfg.lr);

  auto eval_mse = [&](const DynamicsModel& m, const std::vector<int>& idx) {
    if (idx.empty()) return 0.0;
    double total = 0.0;
    for (int i : idx) {
      const sim::Transition& t = dataset[i];
      GarmentGraph graph =
          normalize_graph(build_graph(graph_source(t), t.action, gcfg), m.stats);
      DynamicsForwardCache c;
      nn::Tensor2 y = dynamics_forward(m, graph, c);
      nn::Tensor2 tgt = detail::grasped_target_deltas(t, c.grasped_particles);
      total += detail::delta_mse(y, tgt, m.stats, nullptr);
    }
    return total / static_cast<double>(idx.size());
  };

  TrainResult result;
  double best_val = std::numeric_limits<double>::infinity();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    adam.lr = nn::lr_schedule(epoch, cfg.lr, cfg.lr_gamma, cfg.lr_step);
    Rng epoch_rng(derive_seed(seed, "epoch", epoch));
    std::vector<int> sched = train_idx;
    epoch_rng.shuffle(sched);
    double train_loss = 0.0;
    int step = 0;
    for (int i : sched) {
      sim::Transition t =
          detail::jittered(dataset[i], cfg.noise_sigma, epoch_rng);
      GarmentGraph graph = normalize_graph(
          build_graph(graph_source(t), t.action, gcfg), model.stats);
      DynamicsForwardCache c;
      nn::Tensor2 y = dynamics_forward(model, graph, c);
      nn::Tensor2 tgt = detail::grasped_target_deltas(t, c.grasped_particles);
      nn::Tensor2 dY;
      double loss = detail::delta_mse(y, tgt, model.stats, &dY);
      if (!std::isfinite(loss))
        throw Error("nan-loss", "training loss diverged at epoch " +
                                    std::to_string(epoch) + " step " +
                                    std::to_string(step));
      train_loss += loss;
      grads.set_zero();
      dynamics_backward(model, c, dY, grads);
      nn::adam_step(adam, params, grads.refs());
      ++step;
    }
    EpochLoss el;
    el.train_mse = train_loss / std::max<std::size_t>(1, sched.size());
    el.val_mse = eval_mse(model, val_idx);
    result.curve.push_back(el);
    double val_metric = val_idx.empty() ? el.train_mse : el.val_mse;
    if (val_metric < best_val) {
      best_val = val_metric;
      result.model = model;
      result.best_epoch = epoch;
    }
  }
  result.best_val = best_val;
  if (result.best_epoch < 0) result.model = model;
  return result;
}

}  // namespace garment
