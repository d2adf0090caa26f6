#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "garment/nn/tensor.hpp"
#include "garment/rng.hpp"

namespace garment::nn {

inline constexpr double kLayerNormEps = 1e-6;

/// ReLU on hidden layers, identity on the output, optional layer
/// normalization (with learnable affine) after the output.
struct MlpSpec {
  std::vector<int> sizes;  // [in, hidden..., out]
  bool layer_norm = false;
};

struct Mlp {
  MlpSpec spec;
  std::vector<Tensor2> W;               // per layer, [in x out]
  std::vector<std::vector<double>> b;   // per layer
  std::vector<double> ln_gamma, ln_beta;

  int in_dim() const { return spec.sizes.front(); }
  int out_dim() const { return spec.sizes.back(); }
  int layer_count() const { return static_cast<int>(spec.sizes.size()) - 1; }

  void allocate() {
    W.clear();
    b.clear();
    for (int l = 0; l < layer_count(); ++l) {
      W.emplace_back(spec.sizes[l], spec.sizes[l + 1]);
      b.emplace_back(spec.sizes[l + 1], 0.0);
    }
    if (spec.layer_norm) {
      ln_gamma.assign(out_dim(), 1.0);
      ln_beta.assign(out_dim(), 0.0);
    }
  }

  /// Kaiming-style uniform init scaled by fan-in; biases zero.
  void init(Rng& rng) {
    allocate();
    for (Tensor2& w : W) {
      double limit = std::sqrt(6.0 / w.rows);
      for (double& x : w.v) x = rng.uniform(-limit, limit);
    }
  }

  void zero_init() { allocate(); }

  /// Fixed parameter enumeration order shared with gradients and Adam.
  void visit(const std::function<void(std::span<double>)>& fn) {
    for (int l = 0; l < layer_count(); ++l) {
      fn({W[l].v.data(), W[l].v.size()});
      fn({b[l].data(), b[l].size()});
    }
    if (spec.layer_norm) {
      fn({ln_gamma.data(), ln_gamma.size()});
      fn({ln_beta.data(), ln_beta.size()});
    }
  }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const Tensor2& w : W) n += w.size();
    for (const auto& bias : b) n += bias.size();
    return n + ln_gamma.size() + ln_beta.size();
  }
};

/// Gradient buffers mirroring an Mlp; backward accumulates into them.
struct MlpGrads {
  std::vector<Tensor2> dW;
  std::vector<std::vector<double>> db;
  std::vector<double> dgamma, dbeta;

  void init_like(const Mlp& m) {
    dW.clear();
    db.clear();
    for (const Tensor2& w : m.W) dW.emplace_back(w.rows, w.cols);
    for (const auto& bias : m.b) db.emplace_back(bias.size(), 0.0);
    dgamma.assign(m.ln_gamma.size(), 0.0);
    dbeta.assign(m.ln_beta.size(), 0.0);
  }

  void set_zero() {
    for (Tensor2& w : dW) w.set_zero();
    for (auto& bias : db) std::fill(bias.begin(), bias.end(), 0.0);
    std::fill(dgamma.begin(), dgamma.end(), 0.0);
    std::fill(dbeta.begin(), dbeta.end(), 0.0);
  }

  void visit(const std::function<void(std::span<double>)>& fn) {
    for (std::size_t l = 0; l < dW.size(); ++l) {
      fn({dW[l].v.data(), dW[l].v.size()});
      fn({db[l].data(), db[l].size()});
    }
    if (!dgamma.empty() || !dbeta.empty()) {
      fn({dgamma.data(), dgamma.size()});
      fn({dbeta.data(), dbeta.size()});
    }
  }
};

struct MlpCache {
  std::vector<Tensor2> x;  // x[l] = input to layer l; x[L] = pre-norm output
  Tensor2 ln_xhat;
  std::vector<double> ln_inv_std;
};

/// Batched forward pass; rows are independent samples. Pass a cache to
/// enable backward.
inline Tensor2 mlp_forward(const Mlp& m, const Tensor2& input,
                           MlpCache* cache = nullptr) {
  if (input.cols != m.in_dim())
    throw Error("dimension-mismatch",
                "mlp_forward: input cols " + std::to_string(input.cols) +
                    " != " + std::to_string(m.in_dim()));
  if (cache) {
    cache->x.clear();
    cache->x.push_back(input);
  }
  Tensor2 a = input;
  for (int l = 0; l < m.layer_count(); ++l) {
    Tensor2 z;
    matmul(a, m.W[l], z);
    for (int r = 0; r < z.rows; ++r) {
      double* zr = z.row(r);
      for (int c = 0; c < z.cols; ++c) zr[c] += m.b[l][c];
    }
    if (l + 1 < m.layer_count())
      for (double& x : z.v) x = x > 0.0 ? x : 0.0;
    a = std::move(z);
    if (cache) cache->x.push_back(a);
  }
  if (m.spec.layer_norm) {
    const int d = a.cols;
    Tensor2 y(a.rows, d);
    if (cache) {
      cache->ln_xhat = Tensor2(a.rows, d);
      cache->ln_inv_std.assign(a.rows, 0.0);
    }
    for (int r = 0; r < a.rows; ++r) {
      const double* xr = a.row(r);
      double mean = 0.0;
      for (int c = 0; c < d; ++c) mean += xr[c];
      mean /= d;
      double var = 0.0;
      for (int c = 0; c < d; ++c) var += (xr[c] - mean) * (xr[c] - mean);
      var /= d;
      double inv = 1.0 / std::sqrt(var + kLayerNormEps);
      double* yr = y.row(r);
      for (int c = 0; c < d; ++c) {
        double xhat = (xr[c] - mean) * inv;
        if (cache) cache->ln_xhat.at(r, c) = xhat;
        yr[c] = m.ln_gamma[c] * xhat + m.ln_beta[c];
      }
      if (cache) cache->ln_inv_std[r] = inv;
    }
    check_finite(y, "mlp_forward");
    return y;
  }
  check_finite(a, "mlp_forward");
  return a;
}

/// Exact reverse-mode gradients. Accumulates into `grads`; writes the input
/// gradient to `dX` when non-null. Requires the cache of a prior forward.
inline void mlp_backward(const Mlp& m, const MlpCache& cache, const Tensor2& dY,
                         MlpGrads& grads, Tensor2* dX = nullptr) {
  if (cache.x.empty())
    throw Error("precondition", "mlp_backward called before forward");
  Tensor2 da = dY;
  if (m.spec.layer_norm) {
    const int d = dY.cols;
    Tensor2 dpre(dY.rows, d);
    for (int r = 0; r < dY.rows; ++r) {
      const double* dyr = dY.row(r);
      const double* xhat = cache.ln_xhat.row(r);
      double inv = cache.ln_inv_std[r];
      double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
      for (int c = 0; c < d; ++c) {
        grads.dgamma[c] += dyr[c] * xhat[c];
        grads.dbeta[c] += dyr[c];
        double dxhat = dyr[c] * m.ln_gamma[c];
        sum_dxhat += dxhat;
        sum_dxhat_xhat += dxhat * xhat[c];
      }
      for (int c = 0; c < d; ++c) {
        double dxhat = dyr[c] * m.ln_gamma[c];
        dpre.at(r, c) =
            inv * (dxhat - sum_dxhat / d - xhat[c] * sum_dxhat_xhat / d);
      }
    }
    da = std::move(dpre);
  }
  for (int l = m.layer_count() - 1; l >= 0; --l) {
    // da currently holds dL/d(output of layer l, post-activation).
    if (l + 1 < m.layer_count()) {
      const Tensor2& act = cache.x[l + 1];  // post-ReLU activations
      for (std::size_t i = 0; i < da.v.size(); ++i)
        if (act.v[i] <= 0.0) da.v[i] = 0.0;
    }
    const Tensor2& xin = cache.x[l];
    Tensor2 dW;
    matmul_tn(xin, da, dW);
    for (std::size_t i = 0; i < dW.v.size(); ++i) grads.dW[l].v[i] += dW.v[i];
    for (int r = 0; r < da.rows; ++r) {
      const double* dr = da.row(r);
      for (int c = 0; c < da.cols; ++c) grads.db[l][c] += dr[c];
    }
    if (l > 0 || dX) {
      Tensor2 dx;
      matmul_nt(da, m.W[l], dx);
      da = std::move(dx);
    }
  }
  if (dX) *dX = std::move(da);
}

}  // namespace garment::nn
