#include "garment/nn/mlp.hpp"

#include <gtest/gtest.h>

#include <filesystem>

#include "garment/nn/adam.hpp"
#include "garment/nn/checkpoint.hpp"
#include "garment/nn/tensor.hpp"

namespace garment::nn {
namespace {

ParamRefs refs_of(Mlp& m) {
  ParamRefs r;
  m.visit([&](std::span<double> s) { r.push_back(s); });
  return r;
}

ParamRefs refs_of(MlpGrads& g) {
  ParamRefs r;
  g.visit([&](std::span<double> s) { r.push_back(s); });
  return r;
}

Tensor2 random_input(Rng& rng, int rows, int cols, double scale = 1.0) {
  Tensor2 t(rows, cols);
  for (double& x : t.v) x = rng.uniform(-scale, scale);
  return t;
}

// Weighted-output loss L = sum(R .* Y); its upstream gradient is R itself,
// which makes finite differencing straightforward.
double weighted_loss(const Mlp& m, const Tensor2& x, const Tensor2& r) {
  Tensor2 y = mlp_forward(m, x);
  double loss = 0.0;
  for (std::size_t i = 0; i < y.v.size(); ++i) loss += r.v[i] * y.v[i];
  return loss;
}

// Max relative error between analytic and central finite-difference
// gradients over all parameters of the network.
double gradient_check(Mlp& m, int rows, std::uint64_t seed) {
  Rng rng(seed);
  Tensor2 x = random_input(rng, rows, m.in_dim());
  MlpCache cache;
  Tensor2 y = mlp_forward(m, x, &cache);
  Tensor2 r = random_input(rng, y.rows, y.cols);

  MlpGrads grads;
  grads.init_like(m);
  mlp_backward(m, cache, r, grads);

  ParamRefs params = refs_of(m);
  ParamRefs grefs = refs_of(grads);
  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t j = 0; j < params.size(); ++j) {
    for (std::size_t i = 0; i < params[j].size(); ++i) {
      double saved = params[j][i];
      params[j][i] = saved + h;
      double lp = weighted_loss(m, x, r);
      params[j][i] = saved - h;
      double lm = weighted_loss(m, x, r);
      params[j][i] = saved;
      double fd = (lp - lm) / (2.0 * h);
      double an = grefs[j][i];
      double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-6});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

TEST(MlpForward, IdentityWeightsPassNonNegativeInputThrough) {
  Mlp m;
  m.spec.sizes = {3, 3, 3};
  m.zero_init();
  for (int l = 0; l < 2; ++l)
    for (int i = 0; i < 3; ++i) m.W[l].at(i, i) = 1.0;
  Tensor2 x(2, 3);
  x.v = {0.5, 1.0, 0.0, 2.0, 0.25, 3.0};
  Tensor2 y = mlp_forward(m, x);
  for (std::size_t i = 0; i < x.v.size(); ++i) EXPECT_DOUBLE_EQ(y.v[i], x.v[i]);
}

TEST(MlpForward, SingleLayerAffine) {
  Mlp m;
  m.spec.sizes = {1, 1};
  m.zero_init();
  m.W[0].at(0, 0) = 2.0;
  m.b[0][0] = 1.0;
  Tensor2 x(1, 1);
  x.v = {3.0};
  Tensor2 y = mlp_forward(m, x);
  EXPECT_DOUBLE_EQ(y.v[0], 7.0);
}

TEST(MlpForward, MatchesHandRolledMatrixOracle) {
  Rng rng(17);
  Mlp m;
  m.spec.sizes = {5, 7, 4};
  m.init(rng);
  Tensor2 x = random_input(rng, 6, 5);
  Tensor2 y = mlp_forward(m, x);

  // Independent oracle: naive triple loops.
  for (int r = 0; r < 6; ++r) {
    std::vector<double> h(7, 0.0);
    for (int c = 0; c < 7; ++c) {
      double acc = m.b[0][c];
      for (int i = 0; i < 5; ++i) acc += x.at(r, i) * m.W[0].at(i, c);
      h[c] = std::max(acc, 0.0);
    }
    for (int c = 0; c < 4; ++c) {
      double acc = m.b[1][c];
      for (int i = 0; i < 7; ++i) acc += h[i] * m.W[1].at(i, c);
      EXPECT_NEAR(y.at(r, c), acc, 1e-12);
    }
  }
}

TEST(MlpForward, DimensionMismatchThrows) {
  Mlp m;
  m.spec.sizes = {4, 2};
  m.zero_init();
  Tensor2 x(1, 3);
  EXPECT_THROW(mlp_forward(m, x), Error);
}

TEST(MlpBackward, ZeroUpstreamGivesZeroParameterGradients) {
  Rng rng(23);
  Mlp m;
  m.spec.sizes = {4, 8, 3};
  m.spec.layer_norm = true;
  m.init(rng);
  Tensor2 x = random_input(rng, 5, 4);
  MlpCache cache;
  mlp_forward(m, x, &cache);
  MlpGrads g;
  g.init_like(m);
  Tensor2 dy(5, 3);
  mlp_backward(m, cache, dy, g);
  ParamRefs grefs = refs_of(g);
  for (const auto& s : grefs)
    for (double v : s) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(MlpBackward, CalledBeforeForwardThrows) {
  Mlp m;
  m.spec.sizes = {2, 2};
  m.zero_init();
  MlpCache cache;
  MlpGrads g;
  g.init_like(m);
  Tensor2 dy(1, 2);
  EXPECT_THROW(mlp_backward(m, cache, dy, g), Error);
}

TEST(MlpBackward, FiniteDifferenceCheckAcrossShapes) {
  struct Case {
    std::vector<int> sizes;
    bool ln;
  };
  std::vector<Case> cases = {
      {{3, 8, 8, 3}, false},   {{10, 16, 16, 16}, true},
      {{4, 32, 3}, false},     {{5, 64, 64, 64}, true},
      {{7, 128, 128, 3}, false}, {{4, 24, 24, 24}, true},
  };
  std::uint64_t seed = 100;
  for (const Case& c : cases) {
    Mlp m;
    m.spec.sizes = c.sizes;
    m.spec.layer_norm = c.ln;
    Rng rng(seed);
    m.init(rng);
    double worst = gradient_check(m, 3, seed + 1);
    EXPECT_LT(worst, 1e-4) << "sizes[0]=" << c.sizes[0] << " ln=" << c.ln;
    seed += 7;
  }
}

TEST(MlpBackward, LinearNetSquaredLossMatchesHandAlgebra) {
  // L = sum((x W - y)^2), dW = 2 x^T (x W - y); worked by hand for a
  // 2x2 case below.
  Mlp m;
  m.spec.sizes = {2, 2};
  m.zero_init();
  m.W[0].at(0, 0) = 1.0;
  m.W[0].at(0, 1) = 2.0;
  m.W[0].at(1, 0) = -1.0;
  m.W[0].at(1, 1) = 0.5;
  Tensor2 x(1, 2);
  x.v = {2.0, 3.0};
  // xW = (2*1 + 3*(-1), 2*2 + 3*0.5) = (-1, 5.5); target y = (1, 2)
  // residual r = (-2, 3.5); dW = 2 * x^T r:
  //   dW = [[2*2*(-2), 2*2*3.5], [2*3*(-2), 2*3*3.5]] = [[-8,14],[-12,21]]
  MlpCache cache;
  Tensor2 out = mlp_forward(m, x, &cache);
  Tensor2 dy(1, 2);
  dy.v = {2.0 * (out.v[0] - 1.0), 2.0 * (out.v[1] - 2.0)};
  MlpGrads g;
  g.init_like(m);
  mlp_backward(m, cache, dy, g);
  EXPECT_DOUBLE_EQ(g.dW[0].at(0, 0), -8.0);
  EXPECT_DOUBLE_EQ(g.dW[0].at(0, 1), 14.0);
  EXPECT_DOUBLE_EQ(g.dW[0].at(1, 0), -12.0);
  EXPECT_DOUBLE_EQ(g.dW[0].at(1, 1), 21.0);
}

TEST(LayerNorm, RowsHaveZeroMeanUnitVarianceBeforeAffine) {
  Rng rng(31);
  Mlp m;
  m.spec.sizes = {6, 12, 12};
  m.spec.layer_norm = true;
  m.init(rng);  // gamma = 1, beta = 0 at init
  Tensor2 x = random_input(rng, 8, 6, 2.0);
  Tensor2 y = mlp_forward(m, x);
  for (int r = 0; r < y.rows; ++r) {
    double mean = 0.0;
    for (int c = 0; c < y.cols; ++c) mean += y.at(r, c);
    mean /= y.cols;
    double var = 0.0;
    for (int c = 0; c < y.cols; ++c)
      var += (y.at(r, c) - mean) * (y.at(r, c) - mean);
    var /= y.cols;
    EXPECT_NEAR(mean, 0.0, 1e-6);
    EXPECT_NEAR(var, 1.0, 1e-4);
  }
}

TEST(Adam, FirstStepClosedForm) {
  // One parameter, gradient 0.5 on the first step:
  // m_hat = g, v_hat = g^2, delta = lr * g / (|g| + eps) ~ 9.99999e-5.
  std::vector<double> p = {1.0};
  std::vector<double> g = {0.5};
  ParamRefs pr = {{p.data(), 1}}, gr = {{g.data(), 1}};
  AdamState st = AdamState::init(pr, 1e-4);
  adam_step(st, pr, gr);
  double expected_delta = 1e-4 * 0.5 / (0.5 + 1e-8);
  EXPECT_NEAR(1.0 - p[0], expected_delta, 1e-15);
  EXPECT_NEAR(1.0 - p[0], 9.99999e-5, 1e-9);
}

TEST(Adam, ZeroGradientLeavesParametersAndIncrementsStep) {
  std::vector<double> p = {1.0, -2.0};
  std::vector<double> g = {0.0, 0.0};
  ParamRefs pr = {{p.data(), 2}}, gr = {{g.data(), 2}};
  AdamState st = AdamState::init(pr, 1e-3);
  adam_step(st, pr, gr);
  EXPECT_DOUBLE_EQ(p[0], 1.0);
  EXPECT_DOUBLE_EQ(p[1], -2.0);
  EXPECT_EQ(st.t, 1);
}

TEST(Adam, DeterministicTrajectories) {
  auto run = [] {
    Rng rng(5);
    Mlp m;
    m.spec.sizes = {3, 8, 2};
    m.init(rng);
    ParamRefs pr = refs_of(m);
    AdamState st = AdamState::init(pr, 1e-3);
    MlpGrads g;
    g.init_like(m);
    for (int it = 0; it < 20; ++it) {
      Tensor2 x = random_input(rng, 4, 3);
      MlpCache cache;
      Tensor2 y = mlp_forward(m, x, &cache);
      g.set_zero();
      mlp_backward(m, cache, y, g);  // dL/dy = y (L = 0.5 sum y^2)
      adam_step(st, pr, refs_of(g));
    }
    std::vector<double> flat;
    for (auto s : pr) flat.insert(flat.end(), s.begin(), s.end());
    return flat;
  };
  std::vector<double> a = run(), b = run();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
}

TEST(Adam, ShapeMismatchThrows) {
  std::vector<double> p = {1.0};
  std::vector<double> g = {0.5, 0.5};
  ParamRefs pr = {{p.data(), 1}}, gr = {{g.data(), 2}};
  AdamState st = AdamState::init(pr, 1e-4);
  EXPECT_THROW(adam_step(st, pr, gr), Error);
}

TEST(LrSchedule, PaperValues) {
  EXPECT_DOUBLE_EQ(lr_schedule(0, 1e-4), 1e-4);
  EXPECT_DOUBLE_EQ(lr_schedule(19, 1e-4), 1e-4);
  EXPECT_DOUBLE_EQ(lr_schedule(20, 1e-4), 5e-5);
  EXPECT_DOUBLE_EQ(lr_schedule(100, 1e-4), 1e-4 * 0.03125);
}

TEST(Checkpoint, MlpRoundTripIsBitExact) {
  Rng rng(77);
  Mlp m;
  m.spec.sizes = {5, 16, 3};
  m.spec.layer_norm = true;
  m.init(rng);
  // Make the affine parameters non-trivial.
  for (double& v : m.ln_gamma) v = rng.uniform(0.5, 1.5);
  for (double& v : m.ln_beta) v = rng.normal();

  std::string path = testing::TempDir() + "mlp_ckpt.json";
  nlohmann::json j;
  j["format_version"] = kCheckpointVersion;
  j["kind"] = "test-mlp";
  j["mlp"] = mlp_to_json(m);
  write_checkpoint(path, j);
  nlohmann::json loaded = read_checkpoint(path, "test-mlp");
  Mlp m2 = mlp_from_json(loaded.at("mlp"));

  ASSERT_EQ(m2.spec.sizes, m.spec.sizes);
  for (std::size_t l = 0; l < m.W.size(); ++l) {
    ASSERT_EQ(m2.W[l].v.size(), m.W[l].v.size());
    for (std::size_t i = 0; i < m.W[l].v.size(); ++i)
      EXPECT_EQ(m2.W[l].v[i], m.W[l].v[i]);
    for (std::size_t i = 0; i < m.b[l].size(); ++i)
      EXPECT_EQ(m2.b[l][i], m.b[l][i]);
  }
  for (std::size_t i = 0; i < m.ln_gamma.size(); ++i) {
    EXPECT_EQ(m2.ln_gamma[i], m.ln_gamma[i]);
    EXPECT_EQ(m2.ln_beta[i], m.ln_beta[i]);
  }
}

TEST(Checkpoint, KindMismatchThrows) {
  std::string path = testing::TempDir() + "kind_ckpt.json";
  nlohmann::json j;
  j["format_version"] = kCheckpointVersion;
  j["kind"] = "alpha";
  write_checkpoint(path, j);
  EXPECT_THROW(read_checkpoint(path, "beta"), Error);
}

TEST(Checkpoint, MissingFileThrowsMissingModel) {
  try {
    read_checkpoint("/nonexistent/never.json", "x");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "missing-model");
  }
}

}  // namespace
}  // namespace garment::nn
