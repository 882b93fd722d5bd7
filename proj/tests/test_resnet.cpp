#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "mfl/resnet.hpp"
#include "oracles.hpp"

namespace {

using namespace mfl::resnet;
using mfl::Vector;

Vector random_params(const Architecture& arch, double scale, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  Vector p(arch.parameter_count());
  for (double& v : p) v = n(rng);
  return p;
}

std::vector<Sample> small_batch(std::size_t n, unsigned seed) {
  const auto ds = generate_ellipses(n, 0.05, seed);
  std::vector<Sample> out;
  for (std::size_t i = 0; i < ds.size(); ++i) out.push_back({ds.points[i], ds.labels[i]});
  return out;
}

TEST(Architecture, ParameterCountIs774) {
  const Architecture arch;
  EXPECT_EQ(arch.layers, 128u);
  EXPECT_EQ(arch.step, 0.05);
  EXPECT_EQ(arch.parameter_count(), kParameterCount);
  EXPECT_EQ(VerletNet::build(arch).params.size(), 774u);
  EXPECT_NE(arch.descriptor().find("layers=128"), std::string::npos);
}

TEST(Architecture, WrongCountFailsWithAchievedCount) {
  Architecture arch;
  arch.layers = 127;
  try {
    VerletNet::build(arch);
    FAIL();
  } catch (const std::logic_error& e) {
    EXPECT_NE(std::string(e.what()).find("768"), std::string::npos) << e.what();
  }
  EXPECT_EQ(VerletNet::build(arch, 0).params.size(), 768u);
}

TEST(Ellipses, Deterministic) {
  const auto a = generate_ellipses(100, 0.05, 3);
  const auto b = generate_ellipses(100, 0.05, 3);
  EXPECT_EQ(a.points, b.points);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(a.train, b.train);
  EXPECT_NE(a.points, generate_ellipses(100, 0.05, 4).points);
}

TEST(Ellipses, ExactWithoutNoise) {
  const auto ds = generate_ellipses(200, 0.0, 1);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto [x, y] = ds.points[i];
    const double r = ds.labels[i] == 0 ? std::pow(x / 0.35, 2) + std::pow(y / 0.7, 2)
                                       : std::pow(x / 0.8, 2) + std::pow(y / 1.6, 2);
    EXPECT_NEAR(r, 1.0, 1e-9);
  }
}

TEST(Ellipses, RangeBalanceSplitAndSeparability) {
  const auto ds = generate_ellipses(EllipseOptions{}, 11);
  ASSERT_EQ(ds.size(), 1000u);
  std::size_t ones = 0, train = 0, violations = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto [x, y] = ds.points[i];
    EXPECT_LE(std::abs(x), 1.0);
    EXPECT_LE(std::abs(y), 2.0);
    ones += ds.labels[i];
    train += ds.train[i];
    const bool outside = std::pow(x / 0.55, 2) + std::pow(y / 1.1, 2) > 1.0;
    violations += outside != (ds.labels[i] == 1);
  }
  EXPECT_EQ(ones, 500u);
  EXPECT_EQ(train, 800u);
  EXPECT_LE(violations, 10u);
}

TEST(Forward, ZeroParametersGiveHalf) {
  const auto net = VerletNet::build(Architecture{});
  EXPECT_EQ(logit(net, {0.3, -1.2}), 0.0);
  const auto batch = small_batch(20, 1);
  // Every term is exactly ln 2; only the mean reduction rounds.
  EXPECT_NEAR(loss(net.arch, net.params, batch), std::log(2.0), 1e-14);
  const auto grid = probability_grid(net, {-2.0, 2.0}, {-4.0, 4.0}, 11);
  for (double p : grid.prob) EXPECT_EQ(p, 0.5);
}

TEST(Forward, FiniteAndBounded) {
  // With |tanh| <= 1 each layer moves y by at most h * sqrt(2).
  for (Scheme s : {Scheme::verlet, Scheme::euler}) {
    Architecture arch;
    arch.scheme = s;
    const Vector p = random_params(arch, 3.0, 5);
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    ForwardCache cache;
    for (int t = 0; t < 200; ++t) {
      const Point x{u(rng), u(rng)};
      const double l = forward(arch, p, x, cache);
      ASSERT_TRUE(std::isfinite(l));
      for (std::size_t j = 0; j < arch.layers; ++j) {
        const double dy = std::hypot(cache.y[j + 1][0] - cache.y[j][0], cache.y[j + 1][1] - cache.y[j][1]);
        EXPECT_LE(dy, arch.step * std::sqrt(2.0) + 1e-12);
      }
    }
  }
}

TEST(Forward, SchemesDiffer) {
  Architecture v, e;
  e.scheme = Scheme::euler;
  const Vector p = random_params(v, 0.5, 9);
  ForwardCache cache;
  const Point x{0.4, -0.9};
  EXPECT_GT(std::abs(forward(v, p, x, cache) - forward(e, p, x, cache)), 1e-9);
}

TEST(Loss, StableCrossEntropy) {
  EXPECT_NEAR(bce_with_logit(0.0, 1), std::log(2.0), 1e-15);
  EXPECT_NEAR(bce_with_logit(800.0, 1), 0.0, 1e-300);
  EXPECT_NEAR(bce_with_logit(800.0, 0), 800.0, 1e-9);
  EXPECT_NEAR(bce_with_logit(-800.0, 1), 800.0, 1e-9);
  EXPECT_NEAR(bce_with_logit(2.0, 1), -std::log(1.0 / (1.0 + std::exp(-2.0))), 1e-15);
  EXPECT_GE(sigmoid(-800.0), 0.0);
  EXPECT_EQ(sigmoid(0.0), 0.5);
  EXPECT_NEAR(sigmoid(3.0) + sigmoid(-3.0), 1.0, 1e-15);
}

// Reverse mode against central differences on 50 random coordinates.
void check_backprop(Scheme scheme, unsigned seed) {
  Architecture arch;
  arch.scheme = scheme;
  const Vector p = random_params(arch, 0.5, seed);
  const auto batch = small_batch(10, seed);
  const auto lg = loss_and_grad(arch, p, batch);
  EXPECT_NEAR(lg.loss, loss(arch, p, batch), 1e-14);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, p.size() - 1);
  const auto f = [&](std::span<const double> q) { return loss(arch, q, batch); };
  std::vector<std::size_t> coords{0, 1, 2, p.size() - 1, p.size() - 2, p.size() - 3};
  while (coords.size() < 50) coords.push_back(pick(rng));
  for (std::size_t k : coords) {
    const double fd = mfl::testing::central_difference(f, p, k, 1e-5);
    EXPECT_LE(std::abs(lg.grad[k] - fd), 1e-4 * std::abs(fd) + 1e-9)
        << to_string(scheme) << " coord " << k << " analytic " << lg.grad[k] << " fd " << fd;
  }
}

TEST(Backprop, VerletMatchesFiniteDifferences) { check_backprop(Scheme::verlet, 21); }
TEST(Backprop, EulerMatchesFiniteDifferences) { check_backprop(Scheme::euler, 22); }

TEST(Backprop, DuplicatedBatchUnchanged) {
  const Architecture arch;
  const Vector p = random_params(arch, 0.5, 3);
  auto batch = small_batch(8, 3);
  const auto a = loss_and_grad(arch, p, batch);
  auto doubled = batch;
  doubled.insert(doubled.end(), batch.begin(), batch.end());
  const auto b = loss_and_grad(arch, p, doubled);
  EXPECT_NEAR(a.loss, b.loss, 1e-14);
  for (std::size_t k = 0; k < p.size(); ++k) EXPECT_NEAR(a.grad[k], b.grad[k], 1e-14 + 1e-12 * std::abs(a.grad[k]));
}

TEST(Backprop, NetworkLossObjectiveAgrees) {
  const Architecture arch;
  const auto batch = small_batch(6, 4);
  const NetworkLoss obj(arch, batch);
  EXPECT_EQ(obj.dimension(), 774u);
  const Vector p = random_params(arch, 0.3, 4);
  EXPECT_EQ(obj.value(p), loss(arch, p, batch));
  EXPECT_EQ(obj.gradient(p), loss_and_grad(arch, p, batch).grad);
}

TEST(Grid, OpenIntervalAndPointSymmetry) {
  auto net = VerletNet::build(Architecture{});
  net.params = random_params(net.arch, 2.0, 8);
  const auto grid = probability_grid(net, {-2.0, 2.0}, {-4.0, 4.0}, 41);
  for (double p : grid.prob) {
    EXPECT_GT(p, 0.0);
    EXPECT_LT(p, 1.0);
  }

  // With all biases zero every map in the network is odd, so the logit is
  // odd in the input and p(-x) = 1 - p(x); at zero it is exactly 1/2.
  auto odd = VerletNet::build(Architecture{});
  odd.params = random_params(odd.arch, 0.7, 9);
  odd.params[2] = 0.0;
  for (std::size_t j = 0; j < odd.arch.layers; ++j) {
    odd.params[odd.arch.layer_offset(j) + 4] = 0.0;
    odd.params[odd.arch.layer_offset(j) + 5] = 0.0;
  }
  odd.params.back() = 0.0;
  const auto g = probability_grid(odd, {-2.0, 2.0}, {-4.0, 4.0}, 21);
  for (std::size_t i = 0; i < 21; ++i)
    for (std::size_t j = 0; j < 21; ++j) EXPECT_NEAR(g.at(i, j) + g.at(20 - i, 20 - j), 1.0, 1e-12);
  EXPECT_EQ(g.at(10, 10), 0.5);
}

TEST(Train, DeterministicAndLossDecreases) {
  Architecture arch;
  arch.layers = 16;
  EllipseOptions eo;
  eo.n_per_class = 40;
  const auto ds = generate_ellipses(eo, 2);
  mfl::HyperParams hp;
  hp.beta = 1e6;
  hp.outer_dt = 0.05;
  hp.agents = 2;
  TrainOptions opt;
  opt.epochs = 5;
  opt.steps_per_epoch = 10;
  opt.init_scale = 1.0;
  const auto a = train(ds, arch, mfl::Method::sgld, hp, 3, opt);
  const auto b = train(ds, arch, mfl::Method::sgld, hp, 3, opt);
  EXPECT_EQ(a.net.params, b.net.params);
  ASSERT_EQ(a.curve.size(), 6u);
  EXPECT_EQ(a.curve.front().epoch, 0u);
  EXPECT_LT(a.curve.back().train_loss, a.curve.front().train_loss);
  for (std::size_t e = 0; e < a.curve.size(); ++e) EXPECT_EQ(a.curve[e].train_loss, b.curve[e].train_loss);
}

}  // namespace
