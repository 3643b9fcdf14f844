#include <gtest/gtest.h>

#include "nalm/analysis.hpp"
#include "nalm/gradcheck.hpp"
#include "nalm/model.hpp"
#include "oracles.hpp"

using nalm::Matrix;
using nalm::Model;
using nalm::ModelSpec;

namespace {
Matrix rand_m(std::size_t r, std::size_t c, double lo, double hi, nalm::Rng& rng) {
  Matrix m(r, c);
  for (double& v : m.data()) v = rng.uniform(lo, hi);
  return m;
}
}  // namespace

TEST(ModelSpec, ParseAndDescribe) {
  EXPECT_EQ(nalm::parse_unit("stgnmu"), nalm::UnitKind::StgNmu);
  EXPECT_THROW(nalm::parse_unit("nalu"), std::invalid_argument);
  EXPECT_EQ(ModelSpec::nmu().describe(), "unit=nmu");
  EXPECT_EQ(ModelSpec::snmu(nalm::NoiseConfig::fixed(1, 5)).describe(), "unit=snmu;noise=uniform 1 5");
  EXPECT_EQ(ModelSpec::mlp(100).describe(), "unit=mlp;width=100");
  auto s = ModelSpec::stg(0.01);
  s.grad_noise_eta = 0.3;
  EXPECT_EQ(s.describe(), "unit=stgnmu;stg_lambda=0.01;grad_noise_eta=0.29999999999999999");
}

TEST(Model, ParameterLayout) {
  nalm::Rng rng(41);
  EXPECT_EQ(Model(ModelSpec::nmu(), 2, false, rng).weights().size(), 1u);
  const Model stacked(ModelSpec::snmu(nalm::NoiseConfig::fixed(1, 5)), 10, true, rng);
  const auto w = stacked.weights();
  ASSERT_EQ(w.size(), 2u);
  EXPECT_EQ(w.at("nau.W").rows(), 10u);
  EXPECT_EQ(w.at("nau.W").cols(), 2u);
  EXPECT_EQ(w.at("snmu.W").rows(), 2u);
  const Model mlp(ModelSpec::mlp(7), 2, true, rng);
  EXPECT_FALSE(mlp.stacked());
  EXPECT_EQ(mlp.weights().at("mlp.W1").cols(), 7u);
  EXPECT_TRUE(mlp.nalm_weights().empty());
  const Model stg(ModelSpec::stg(0.1), 2, false, rng);
  EXPECT_EQ(stg.weights().at("stg.mu"), Matrix(2, 1, 0.5));
}

TEST(Model, PredictUsesInferenceForward) {
  nalm::Rng rng(42);
  Model m(ModelSpec::snmu(nalm::NoiseConfig::fixed(1, 5)), 2, false, rng);
  m.set_weights({{"snmu.W", Matrix::column({0.3, 0.8})}});
  const Matrix X = Matrix::from_rows({{2, 3}, {-1, 0.5}});
  const Matrix p = m.predict(X);
  EXPECT_NEAR(p(0, 0), oracle::nmu({2, 3}, {0.3, 0.8}), 1e-15);
  EXPECT_NEAR(p(1, 0), oracle::nmu({-1, 0.5}, {0.3, 0.8}), 1e-15);

  Model g(ModelSpec::stg(0.1), 2, false, rng);
  g.set_weights({{"stg.mu", Matrix::column({1.4, -0.2})}});
  EXPECT_EQ(g.unit_weights(), Matrix::column({1.0, 0.0}));
  EXPECT_DOUBLE_EQ(g.predict(Matrix::row({5, 7})).item(), 5.0);
  EXPECT_THROW(g.set_weights({{"nmu.W", Matrix::column({1, 1})}}), std::invalid_argument);
  EXPECT_THROW(g.set_weights({{"stg.mu", Matrix::column({1, 1, 1})}}), std::invalid_argument);
}

TEST(Model, TrainingLossByHand) {
  nalm::Rng rng(43);
  Model m(ModelSpec::nmu(), 2, false, rng);
  m.set_weights({{"nmu.W", Matrix::column({0.5, 1.0})}});
  auto& t = m.tape();
  const auto& n = m.nodes();
  t.bind(n.x, Matrix::from_rows({{3, 4}, {1, 2}}));
  t.bind(n.y, Matrix::column({12, 2}));
  t.bind(n.lambda, Matrix::scalar(2.0));
  // predictions: (0.5*3+0.5)*4 = 8, (1)*2 = 2 -> mse (16 + 0)/2 = 8
  // penalty: mean(0.5, 0) = 0.25 -> 2 * 0.25 = 0.5
  EXPECT_NEAR(t.forward(n.loss).item(), 8.5, 1e-14);
}

TEST(Model, StgLossIncludesGatePenalty) {
  nalm::Rng rng(44);
  Model m(ModelSpec::stg(0.01), 2, false, rng);
  auto& t = m.tape();
  const auto& n = m.nodes();
  t.bind(n.x, Matrix::row({3, 4}));
  t.bind(n.y, Matrix::scalar(12));
  t.bind(n.lambda, Matrix::scalar(0.0));
  t.bind(*n.gate_noise, Matrix::column({0.5, 0.5}));
  // gates open (w = 1): prediction 12, loss = 0.01 * 2 * Phi(1)
  EXPECT_NEAR(t.forward(n.loss).item(), 0.01 * 2 * 0.8413447460685429, 1e-14);
}

TEST(Model, StackedGradientsMatchClosedForm) {
  nalm::Rng rng(45);
  for (bool noisy : {false, true}) {
    Model m(noisy ? ModelSpec::snmu(nalm::NoiseConfig::fixed(1, 5)) : ModelSpec::nmu(), 6, true, rng);
    auto& t = m.tape();
    const auto& n = m.nodes();
    const Matrix X = rand_m(16, 6, -2, 2, rng), y = rand_m(16, 1, -3, 3, rng), N = rand_m(16, 2, 1, 5, rng);
    t.bind(n.x, X);
    t.bind(n.y, y);
    t.bind(n.lambda, Matrix::scalar(0.0));
    if (noisy) t.bind(*n.noise, N);
    t.forward(n.loss);
    const auto g = t.backward(n.loss);
    const auto w = m.weights();
    const Matrix Wm = w.at(noisy ? "snmu.W" : "nmu.W");
    const auto [ga, gm] = noisy ? nalm::analytic_grad_nau_snmu(X, y, w.at("nau.W"), Wm, N)
                                : nalm::analytic_grad_nau_nmu(X, y, w.at("nau.W"), Wm);
    const auto params = t.parameters();
    for (std::size_t k = 0; k < ga.size(); ++k) EXPECT_NEAR(g.at(params[0])[k], ga[k], 1e-12 * (1 + std::fabs(ga[k])));
    for (std::size_t k = 0; k < gm.size(); ++k) EXPECT_NEAR(g.at(params[1])[k], gm[k], 1e-12 * (1 + std::fabs(gm[k])));
  }
}

TEST(Model, FullLossGradientsMatchFiniteDifferences) {
  nalm::Rng rng(46);
  for (const auto& spec : {ModelSpec::nmu(), ModelSpec::snmu(nalm::NoiseConfig::fixed(1, 5)), ModelSpec::stg(0.1),
                           ModelSpec::mlp(5)}) {
    for (bool stacked : {false, true}) {
      Model m(spec, 4, stacked, rng);
      auto& t = m.tape();
      const auto& n = m.nodes();
      t.bind(n.x, rand_m(8, 4, 1, 2, rng));
      t.bind(n.y, rand_m(8, 1, 1, 4, rng));
      t.bind(n.lambda, Matrix::scalar(0.7));
      if (n.noise) t.bind(*n.noise, rand_m(8, m.unit_input_size(), 1, 5, rng));
      if (n.gate_noise) t.bind(*n.gate_noise, rand_m(m.unit_input_size(), 1, -0.2, 0.2, rng));
      t.forward(n.loss);
      const auto a = nalm::flatten_gradients(t, t.backward(n.loss));
      const auto fd = nalm::tape_finite_diff(t, n.loss, 1e-6);
      EXPECT_LT(nalm::max_relative_error(a, fd, 1e-7), 1e-5) << spec.describe() << " stacked=" << stacked;
    }
  }
}

TEST(Model, ClampParameters) {
  nalm::Rng rng(47);
  Model m(ModelSpec::nmu(), 3, true, rng);
  m.set_weights({{"nau.W", Matrix::from_rows({{-3, 0.2}, {1.5, 0}, {0, 0}})}, {"nmu.W", Matrix::column({-0.1, 1.2})}});
  m.clamp_parameters();
  EXPECT_EQ(m.weights().at("nau.W"), Matrix::from_rows({{-1, 0.2}, {1, 0}, {0, 0}}));
  EXPECT_EQ(m.weights().at("nmu.W"), Matrix::column({0, 1}));
  Model g(ModelSpec::stg(0.1), 2, false, rng);
  g.set_weights({{"stg.mu", Matrix::column({1.7, -0.4})}});
  g.clamp_parameters();
  EXPECT_EQ(g.weights().at("stg.mu"), Matrix::column({1.7, -0.4}));  // gate means are not clamped
}
