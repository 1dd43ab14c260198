#include <gtest/gtest.h>

#include <cmath>

#include "test_support.hpp"
#include "vrd/training.hpp"

namespace vrd {
namespace {

using testing::oracle::finite_difference;
using testing::oracle::rel_err;

std::vector<double> random_vec(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

TEST(XentLoss, UniformLogits) {
  const auto lg = xent_loss_grad(std::vector<double>(70, 0.0), 3);
  EXPECT_NEAR(lg.loss, std::log(70.0), 1e-12);
  EXPECT_NEAR(lg.loss, 4.248495242, 1e-9);
  EXPECT_NEAR(lg.grad[3], 1.0 / 70 - 1, 1e-15);
  EXPECT_NEAR(lg.grad[0], 1.0 / 70, 1e-15);
}

TEST(XentLoss, Saturation) {
  const auto right = xent_loss_grad(std::vector<double>{100, 0, 0}, 0);
  EXPECT_LT(right.loss, 1e-40);
  const auto wrong = xent_loss_grad(std::vector<double>{0, 800, 0}, 0);
  EXPECT_TRUE(std::isfinite(wrong.loss));
  EXPECT_NEAR(wrong.loss, 800.0, 1e-9);
  EXPECT_THROW(xent_loss_grad(std::vector<double>{1, 2}, 2), InvalidArgument);
}

TEST(XentLoss, MatchesOracle) {
  Rng rng(4);
  for (int t = 0; t < 100; ++t) {
    const auto z = random_vec(rng, 12, -20, 20);
    const auto label = static_cast<std::size_t>(rng.below(12));
    EXPECT_NEAR(xent_loss_grad(z, label).loss, testing::oracle::xent(z, label), 1e-12);
  }
}

// Loss of a single module as a function of its flattened [W, b].
double module_loss(const std::vector<double>& params, std::size_t rows, std::size_t cols,
                   const std::vector<double>& x, std::size_t label) {
  const std::vector<double> w(params.begin(), params.begin() + static_cast<std::ptrdiff_t>(rows * cols));
  const std::vector<double> b(params.begin() + static_cast<std::ptrdiff_t>(rows * cols), params.end());
  return testing::oracle::xent(testing::oracle::matvec(w, b, x), label);
}

TEST(Gradients, SingleModuleMatchesFiniteDifferences) {
  Rng rng(8);
  const std::size_t rows = 5;
  const std::size_t cols = 8;
  for (int trial = 0; trial < 10; ++trial) {
    const auto w = random_vec(rng, rows * cols);
    const auto b = random_vec(rng, rows);
    const auto x = random_vec(rng, cols);
    const auto label = static_cast<std::size_t>(rng.below(rows));
    const auto g = xent_loss_grad(LinearLayer(rows, cols, w, b).forward(x), label).grad;
    std::vector<double> params = w;
    params.insert(params.end(), b.begin(), b.end());
    const auto fd = finite_difference([&](const std::vector<double>& p) { return module_loss(p, rows, cols, x, label); },
                                      params);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) EXPECT_LT(rel_err(g[r] * x[c], fd[r * cols + c]), 1e-4);
      EXPECT_LT(rel_err(g[r], fd[rows * cols + r]), 1e-4);
    }
  }
}

double joint_loss(const std::vector<double>& a, const std::vector<double>& v, std::size_t label, bool product) {
  std::vector<double> z(a.size());
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = product ? a[i] * v[i] : a[i] + v[i];
  return testing::oracle::xent(z, label);
}

TEST(Gradients, JointMatchesFiniteDifferences) {
  Rng rng(12);
  for (bool product : {true, false}) {
    const auto space = product ? FusionSpace::logit_product : FusionSpace::log_space_sum;
    for (int trial = 0; trial < 10; ++trial) {
      const auto a = random_vec(rng, 5, -2, 2);
      const auto v = random_vec(rng, 5, -2, 2);
      const auto label = static_cast<std::size_t>(rng.below(5));
      const auto g = joint_loss_grad(a, v, label, space);
      EXPECT_NEAR(g.loss, joint_loss(a, v, label, product), 1e-12);
      const auto fa = finite_difference([&](const std::vector<double>& x) { return joint_loss(x, v, label, product); }, a);
      const auto fv = finite_difference([&](const std::vector<double>& x) { return joint_loss(a, x, label, product); }, v);
      for (std::size_t i = 0; i < 5; ++i) {
        EXPECT_LT(rel_err(g.grad_language[i], fa[i]), 1e-4);
        EXPECT_LT(rel_err(g.grad_visual[i], fv[i]), 1e-4);
      }
    }
  }
}

TEST(Gradients, JointWithUnitVisualEqualsSeparate) {
  Rng rng(13);
  const auto a = random_vec(rng, 6, -3, 3);
  const auto g = joint_loss_grad(a, std::vector<double>(6, 1.0), 2);
  const auto s = xent_loss_grad(a, 2);
  EXPECT_EQ(g.loss, s.loss);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(g.grad_language[i], s.grad[i]);
}

// Three well-separated clusters in 4-D.
std::vector<LabeledVector> toy_problem(std::uint64_t seed) {
  Rng rng(seed);
  const std::vector<std::vector<double>> centers{{3, 0, 0, 1}, {0, 3, 0, -1}, {0, 0, 3, 0}};
  std::vector<LabeledVector> out;
  for (int i = 0; i < 90; ++i) {
    const auto label = static_cast<std::size_t>(i % 3);
    auto x = centers[label];
    for (auto& v : x) v += rng.uniform(-0.5, 0.5);
    out.push_back({x, label});
  }
  return out;
}

TEST(TrainModule, SeparableToyReachesPerfectAccuracy) {
  const auto data = toy_problem(1);
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.batch_size = 10;
  cfg.epochs = 60;
  const auto trained = train_module(data, 3, cfg);
  EXPECT_EQ(trained.report.final_accuracy, 1.0);
  EXPECT_EQ(trained.report.epochs.size(), 60u);
  EXPECT_LT(trained.report.epochs.back().loss, trained.report.epochs.front().loss);
}

TEST(TrainModule, ZeroLearningRateLeavesParameters) {
  const auto data = toy_problem(2);
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.epochs = 3;
  const auto init = LinearLayer::random(3, 4, 77);
  const auto trained = train_module(data, 3, cfg, init);
  EXPECT_EQ(trained.report.checksum, init.checksum());
  EXPECT_EQ(trained.layer, init);
}

TEST(TrainModule, DeterministicForSeed) {
  const auto data = toy_problem(3);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 7;
  cfg.seed = 99;
  const auto a = train_module(data, 3, cfg);
  const auto b = train_module(data, 3, cfg);
  EXPECT_EQ(a.report.checksum, b.report.checksum);
  cfg.seed = 100;
  EXPECT_NE(train_module(data, 3, cfg).report.checksum, a.report.checksum);
}

TEST(TrainModule, FullBatchLossNonIncreasing) {
  const auto data = toy_problem(4);
  TrainConfig cfg;
  cfg.learning_rate = 0.05;
  cfg.batch_size = data.size();
  cfg.epochs = 40;
  cfg.shuffle = false;
  const auto r = train_module(data, 3, cfg).report;
  for (std::size_t e = 1; e < r.epochs.size(); ++e) EXPECT_LE(r.epochs[e].loss, r.epochs[e - 1].loss + 1e-12);
}

TEST(TrainModule, ValidatesInputs) {
  TrainConfig cfg;
  EXPECT_THROW(train_module(std::vector<LabeledVector>{}, 3, cfg), InvalidArgument);
  EXPECT_THROW(train_module(std::vector<LabeledVector>{{{1, 2}, 5}}, 3, cfg), InvalidArgument);
  EXPECT_THROW(train_module(std::vector<LabeledVector>{{{1, 2}, 0}, {{1}, 1}}, 3, cfg), InvalidArgument);
  cfg.batch_size = 0;
  EXPECT_THROW(train_module(std::vector<LabeledVector>{{{1, 2}, 0}}, 3, cfg), InvalidArgument);
  cfg.batch_size = 1;
  cfg.class_weights = {1, 1};
  EXPECT_THROW(train_module(std::vector<LabeledVector>{{{1, 2}, 0}}, 3, cfg), InvalidArgument);
}

TEST(TrainModule, ClassWeightZeroIgnoresClass) {
  // only class 2 examples, weighted out: nothing to learn
  std::vector<LabeledVector> data{{{1, 0}, 2}, {{0, 1}, 2}};
  TrainConfig cfg;
  cfg.class_weights = {1, 1, 0};
  cfg.epochs = 5;
  const auto init = LinearLayer::random(3, 2, 5);
  EXPECT_EQ(train_module(data, 3, cfg, init).layer, init);
}

TEST(TrainJoint, LearnsToy) {
  const auto toy = toy_problem(5);
  std::vector<JointExample> data;
  for (const auto& ex : toy) data.push_back({ex.input, {1.0, ex.input[0] - ex.input[1]}, ex.label});
  TrainConfig cfg;
  cfg.learning_rate = 0.05;
  cfg.batch_size = 10;
  cfg.epochs = 80;
  const auto trained = train_joint(data, 3, cfg);
  EXPECT_GE(trained.report.final_accuracy, 0.95);
  EXPECT_LT(trained.report.epochs.back().loss, trained.report.epochs.front().loss);
  EXPECT_EQ(trained.report.checksum, train_joint(data, 3, cfg).report.checksum);
}

TEST(TrainModel, VariantsProduceMatchingModules) {
  const ModelDims d{3, 2, 0};
  std::vector<JointExample> data;
  for (const auto& ex : toy_problem(6)) data.push_back({ex.input, {}, ex.label});
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.epochs = 30;
  const auto out = train_model(ModelConfig::from_variant("L"), d, data, cfg);
  EXPECT_TRUE(out.model.language());
  EXPECT_FALSE(out.model.visual());
  ASSERT_EQ(out.reports.size(), 1u);
  EXPECT_EQ(out.reports[0].module, "language");
  EXPECT_EQ(out.reports[0].report.final_accuracy, 1.0);

  // init from a trained model with lr=0 keeps it
  cfg.learning_rate = 0.0;
  const auto again = train_model(ModelConfig::from_variant("L"), d, data, cfg, CombineMode::joint, &out.model);
  EXPECT_EQ(again.model.checksum(), out.model.checksum());
  EXPECT_THROW(train_model(ModelConfig::from_variant("LS"), d, data, cfg, CombineMode::joint, &out.model),
               InvalidArgument);
}

TEST(TrainModel, SeparateModeReportsBothModules) {
  const ModelDims d{3, 2, 2};
  std::vector<JointExample> data;
  for (const auto& ex : toy_problem(7)) data.push_back({ex.input, {ex.input[0], ex.input[2]}, ex.label});
  TrainConfig cfg;
  cfg.epochs = 2;
  const auto sep = train_model(ModelConfig::from_variant("L+V"), d, data, cfg, CombineMode::separate);
  ASSERT_EQ(sep.reports.size(), 2u);
  EXPECT_EQ(sep.reports[0].module, "language");
  EXPECT_EQ(sep.reports[1].module, "visual");
  const auto joint = train_model(ModelConfig::from_variant("L+V"), d, data, cfg);
  ASSERT_EQ(joint.reports.size(), 1u);
  EXPECT_EQ(joint.reports[0].module, "joint");
}

}  // namespace
}  // namespace vrd
