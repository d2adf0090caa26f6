#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "garment/error.hpp"

namespace garment::nn {

using ParamRefs = std::vector<std::span<double>>;

/// Standard Adam with bias correction; beta1 = 0.9, beta2 = 0.999,
/// eps = 1e-8. Moment arrays mirror the parameter spans.
struct AdamState {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t t = 0;
  std::vector<std::vector<double>> m, v;

  static AdamState init(const ParamRefs& params, double lr) {
    AdamState s;
    s.lr = lr;
    for (const auto& p : params) {
      s.m.emplace_back(p.size(), 0.0);
      s.v.emplace_back(p.size(), 0.0);
    }
    return s;
  }
};

inline void adam_step(AdamState& st, const ParamRefs& params,
                      const ParamRefs& grads) {
  if (params.size() != grads.size() || params.size() != st.m.size())
    throw Error("dimension-mismatch", "adam_step: span count mismatch");
  ++st.t;
  const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.t));
  const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.t));
  for (std::size_t j = 0; j < params.size(); ++j) {
    auto p = params[j];
    auto g = grads[j];
    if (p.size() != g.size() || p.size() != st.m[j].size())
      throw Error("dimension-mismatch", "adam_step: span size mismatch");
    double* mj = st.m[j].data();
    double* vj = st.v[j].data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (!std::isfinite(g[i]))
        throw Error("nan-loss", "adam_step: non-finite gradient");
      mj[i] = st.beta1 * mj[i] + (1.0 - st.beta1) * g[i];
      vj[i] = st.beta2 * vj[i] + (1.0 - st.beta2) * g[i] * g[i];
      double mhat = mj[i] / bc1;
      double vhat = vj[i] / bc2;
      p[i] -= st.lr * mhat / (std::sqrt(vhat) + st.eps);
    }
  }
}

/// Step decay: base * gamma^floor(epoch / step_every).
inline double lr_schedule(int epoch, double base_lr, double gamma = 0.5,
                          int step_every = 20) {
  if (epoch < 0) throw Error("out-of-range", "lr_schedule: negative epoch");
  return base_lr * std::pow(gamma, static_cast<double>(epoch / step_every));
}

}  // namespace garment::nn
