#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <random>

#include "mfl/dynamics.hpp"
#include "oracles.hpp"

namespace {

using mfl::AgentMatrix;
using mfl::HyperParams;
using mfl::Method;
using mfl::NoiseStream;
using mfl::ParticleSystem;
using mfl::Vector;

AgentMatrix random_matrix(std::size_t n, std::size_t d, double lo, double hi, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  AgentMatrix X(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < d; ++k) X(i, k) = u(rng);
  return X;
}

HyperParams camel_params(double lambda) {
  HyperParams hp;
  hp.beta = 10.0;
  hp.lambda = lambda;
  hp.gamma = 0.1;
  hp.epsilon = 1.0;
  hp.outer_dt = 0.01;
  hp.inner_steps = 20;
  hp.burn_in = 1;
  hp.agents = 6;
  hp.iterations = 10;
  return hp.validated();
}

TEST(HyperParams, DerivesInnerStep) {
  HyperParams hp;
  hp.outer_dt = 0.01;
  hp.inner_steps = 20;
  EXPECT_DOUBLE_EQ(*hp.validated().inner_dt, 0.0005);
  hp.inner_dt = 0.0005;
  EXPECT_NO_THROW(hp.validated());
  hp.inner_dt = 0.0006;
  EXPECT_THROW(hp.validated(), std::invalid_argument);
}

TEST(HyperParams, RejectsBadRanges) {
  auto bad = [](auto mutate) {
    HyperParams hp;
    mutate(hp);
    EXPECT_THROW(hp.validated(), std::invalid_argument);
  };
  bad([](HyperParams& h) { h.beta = 0.0; });
  bad([](HyperParams& h) { h.lambda = -1.0; });
  bad([](HyperParams& h) { h.gamma = 0.0; });
  bad([](HyperParams& h) { h.epsilon = -1.0; });
  bad([](HyperParams& h) { h.outer_dt = 0.0; });
  bad([](HyperParams& h) { h.inner_steps = 0; });
  bad([](HyperParams& h) { h.burn_in = 0; });
  bad([](HyperParams& h) { h.burn_in = h.inner_steps + 1; });
  bad([](HyperParams& h) { h.agents = 0; });
}

TEST(Methods, ParseRoundTrip) {
  for (Method m : {Method::sgld, Method::mf_sgld, Method::hom_sgld, Method::mf_hom_sgld,
                   Method::smoothed_gd})
    EXPECT_EQ(mfl::parse_method(mfl::to_string(m)), m);
  EXPECT_THROW(mfl::parse_method("adam"), std::invalid_argument);
}

TEST(Sgld, QuadraticDriftIsContraction) {
  const mfl::Quadratic f(3);
  const Vector x{1.0, -2.0, 0.5};
  const Vector z(3, 0.0);
  const Vector out = mfl::sgld_step(x, f, 1.0, 0.01, z);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_DOUBLE_EQ(out[k], 0.99 * x[k]);
}

TEST(Sgld, NoiseVarianceMatchesDiffusion) {
  // Flat potential: x' - x is pure noise with variance 2 dt / beta.
  const mfl::Quadratic flat(1, 0.0);
  const NoiseStream noise(77);
  const double beta = 4.0, dt = 0.02;
  const std::size_t n = 100000;
  double s = 0.0, s2 = 0.0;
  Vector z(1);
  for (std::uint32_t t = 0; t < n; ++t) {
    mfl::AgentNoise(noise, {0, 0}, t).outer(z);
    const double dx = mfl::sgld_step(Vector{0.3}, flat, beta, dt, z)[0] - 0.3;
    s += dx;
    s2 += dx * dx;
  }
  const double var = s2 / n - (s / n) * (s / n);
  EXPECT_NEAR(var / (2.0 * dt / beta), 1.0, 0.05);
}

TEST(Sgld, GaussianTargetHistogram) {
  // Independent chains on Phi = |x|^2/2, beta = 1. The discrete chain
  // x' = (1 - dt) x + sqrt(2 dt) z has stationary variance 1 / (1 - dt/2).
  const mfl::Quadratic f(1);
  HyperParams hp;
  hp.beta = 1.0;
  hp.outer_dt = 0.01;
  hp.agents = 20000;
  hp.iterations = 1500;
  const NoiseStream noise(4);
  const auto final_state =
      mfl::run_method(Method::sgld, f, hp, noise, ParticleSystem(AgentMatrix(hp.agents, 1)));
  const double sd = 1.0 / std::sqrt(1.0 - hp.outer_dt / 2.0);
  const int bins = 20;
  std::vector<double> counts(bins, 0.0), probs(bins, 1.0 / bins);
  for (std::size_t i = 0; i < hp.agents; ++i) {
    const double u = mfl::testing::normal_cdf(final_state.X(i, 0) / sd);
    counts[std::min(bins - 1, static_cast<int>(u * bins))] += 1.0;
  }
  EXPECT_LT(mfl::testing::chi_square(counts, probs, double(hp.agents)), 43.8);
}

TEST(MeanField, ForceExamples) {
  AgentMatrix X(2, 1);
  X(0, 0) = 1.5;
  X(1, 0) = -1.5;
  EXPECT_DOUBLE_EQ(mfl::interaction_force(X, 0, 2.0)[0], 3.0);
  EXPECT_DOUBLE_EQ(mfl::interaction_force(X, 1, 2.0)[0], -3.0);

  AgentMatrix C(5, 2, 0.7);
  for (std::size_t i = 0; i < 5; ++i)
    for (double v : mfl::interaction_force(C, i, 10.0)) EXPECT_EQ(v, 0.0);
}

TEST(MeanField, ForcesSumToZero) {
  for (unsigned seed = 0; seed < 20; ++seed) {
    const AgentMatrix X = random_matrix(25, 3, -5.0, 5.0, seed);
    Vector total(3, 0.0), scale(3, 0.0);
    for (std::size_t i = 0; i < X.rows(); ++i) {
      const Vector f = mfl::interaction_force(X, i, 3.0);
      for (std::size_t k = 0; k < 3; ++k) {
        total[k] += f[k];
        scale[k] += std::abs(f[k]);
      }
    }
    for (std::size_t k = 0; k < 3; ++k) EXPECT_LE(std::abs(total[k]), 1e-12 * scale[k]);
  }
}

TEST(MeanField, EmpiricalMeanIsOrderFree) {
  AgentMatrix X = random_matrix(40, 2, -1e3, 1e3, 12);
  const Vector m = mfl::empirical_mean(X);
  std::vector<std::size_t> perm(40);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937 rng(1);
  std::shuffle(perm.begin(), perm.end(), rng);
  AgentMatrix P(40, 2);
  for (std::size_t i = 0; i < 40; ++i)
    for (std::size_t k = 0; k < 2; ++k) P(i, k) = X(perm[i], k);
  EXPECT_EQ(mfl::empirical_mean(P), m);
}

TEST(MeanField, ZeroLambdaReducesToSgldExactly) {
  const mfl::SixHumpCamel f;
  const HyperParams hp = camel_params(0.0);
  const NoiseStream noise(31);
  ParticleSystem a(random_matrix(6, 2, -2, 2, 3), 4), b = a;
  for (int n = 0; n < 25; ++n) {
    mfl::sgld_system_step(a, f, hp, noise);
    mfl::mf_sgld_step(b, f, hp, noise);
  }
  EXPECT_EQ(a, b);
}

TEST(MeanField, FlatPotentialRelaxesGeometrically) {
  // With a constant objective and no noise, X_i - mean shrinks by (1 - dt lambda)
  // per step and the mean stays put.
  const mfl::Quadratic flat(2, 0.0);
  HyperParams hp = camel_params(7.0);
  const auto noise = NoiseStream::disabled();
  const AgentMatrix X0 = random_matrix(6, 2, -2, 2, 8);
  const Vector m0 = mfl::empirical_mean(X0);
  ParticleSystem sys(X0);
  const int steps = 50;
  for (int n = 0; n < steps; ++n) mfl::mf_sgld_step(sys, flat, hp, noise);
  const double factor = std::pow(1.0 - hp.outer_dt * hp.lambda, steps);
  const Vector m = mfl::empirical_mean(sys.X);
  for (std::size_t k = 0; k < 2; ++k) EXPECT_NEAR(m[k], m0[k], 1e-13);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t k = 0; k < 2; ++k)
      EXPECT_NEAR(sys.X(i, k) - m0[k], factor * (X0(i, k) - m0[k]), 1e-12);
}

// Permuting agents together with their noise substreams permutes the output.
void check_exchangeable(Method method, double lambda) {
  const mfl::SixHumpCamel f;
  const HyperParams hp = camel_params(lambda);
  const NoiseStream noise(55);
  ParticleSystem sys(random_matrix(6, 2, -2, 2, 21), 2);
  sys.Y = random_matrix(6, 2, -2, 2, 22);
  const std::vector<std::size_t> perm{3, 0, 5, 1, 4, 2};
  ParticleSystem permuted = sys;
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t k = 0; k < 2; ++k) {
      permuted.X(i, k) = sys.X(perm[i], k);
      permuted.Y(i, k) = sys.Y(perm[i], k);
    }
    permuted.stream_ids[i] = sys.stream_ids[perm[i]];
  }
  for (int n = 0; n < 5; ++n) {
    mfl::step(method, sys, f, hp, noise);
    mfl::step(method, permuted, f, hp, noise);
  }
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t k = 0; k < 2; ++k) {
      EXPECT_EQ(permuted.X(i, k), sys.X(perm[i], k)) << mfl::to_string(method);
      if (mfl::is_homogenized(method)) EXPECT_EQ(permuted.Y(i, k), sys.Y(perm[i], k));
    }
}

TEST(MeanField, Exchangeable) {
  check_exchangeable(Method::mf_sgld, 5.0);
  check_exchangeable(Method::mf_hom_sgld, 5.0);
  check_exchangeable(Method::sgld, 0.0);
  check_exchangeable(Method::hom_sgld, 0.0);
}

TEST(Homogenized, InnerLoopGeometricRelaxation) {
  // grad Phi = 0 and no noise: Y_m - x = q^m (y0 - x), q = 1 - dt/(eps gamma).
  const mfl::Quadratic flat(1, 0.0);
  HyperParams hp;
  hp.outer_dt = 0.04;
  hp.inner_steps = 8;
  hp.burn_in = 3;
  hp.gamma = 0.5;
  hp.epsilon = 0.2;
  hp = hp.validated();
  const auto noise = NoiseStream::disabled();
  const double x = 1.25, y0 = -0.75;
  const auto res = mfl::hom_inner_loop(Vector{x}, Vector{y0}, flat, hp,
                                       mfl::AgentNoise(noise, {}, 1));
  const double q = 1.0 - hp.fast_dt() / (hp.epsilon * hp.gamma);
  const std::size_t total = hp.burn_in + hp.inner_steps - 1;
  EXPECT_NEAR(res.y_final[0] - x, std::pow(q, double(total)) * (y0 - x), 1e-14);
  double avg = 0.0;
  for (std::size_t m = hp.burn_in - 1; m <= hp.burn_in + hp.inner_steps - 2; ++m)
    avg += x + std::pow(q, double(m)) * (y0 - x);
  avg /= double(hp.inner_steps);
  EXPECT_NEAR(res.y_avg[0], avg, 1e-14);
}

TEST(Homogenized, SingleInnerStepAveragesStartingPoint) {
  const mfl::SixHumpCamel f;
  HyperParams hp = camel_params(0.0);
  hp.inner_steps = 1;
  hp.burn_in = 1;
  hp.inner_dt.reset();
  hp = hp.validated();
  const NoiseStream noise(3);
  const Vector y0{0.3, -0.6};
  const auto res = mfl::hom_inner_loop(Vector{0.1, 0.2}, y0, f, hp, mfl::AgentNoise(noise, {}, 1));
  EXPECT_EQ(res.y_avg, y0);
}

TEST(Homogenized, InnerNoiseVariance) {
  const mfl::Quadratic flat(1, 0.0);
  HyperParams hp;
  hp.beta = 2.0;
  hp.epsilon = 0.5;
  hp.outer_dt = 0.01;
  hp.inner_steps = 1;
  hp.burn_in = 1;
  hp = hp.validated();
  const NoiseStream noise(19);
  const std::size_t n = 100000;
  double s = 0.0, s2 = 0.0;
  for (std::uint32_t t = 0; t < n; ++t) {
    const auto r = mfl::hom_inner_loop(Vector{0.5}, Vector{0.5}, flat, hp,
                                       mfl::AgentNoise(noise, {0, 0}, t));
    const double dy = r.y_final[0] - 0.5;
    s += dy;
    s2 += dy * dy;
  }
  const double var = s2 / n - (s / n) * (s / n);
  EXPECT_NEAR(var / (2.0 * hp.fast_dt() / (hp.beta * hp.epsilon)), 1.0, 0.05);
}

TEST(Homogenized, ConsensusIsFixedPoint) {
  const mfl::Quadratic flat(2, 0.0);
  const HyperParams hp = camel_params(10.0);
  const auto noise = NoiseStream::disabled();
  AgentMatrix X(6, 2);
  for (std::size_t i = 0; i < 6; ++i) {
    X(i, 0) = 0.5;
    X(i, 1) = -0.25;
  }
  ParticleSystem sys(X);
  sys.init_fast();
  for (int n = 0; n < 10; ++n) mfl::mf_hom_sgld_step(sys, flat, hp, noise);
  EXPECT_EQ(sys.X, X);
  EXPECT_EQ(sys.Y, X);
}

TEST(Homogenized, ZeroLambdaMatchesIndependentCopies) {
  // Each agent of an N-agent run equals a one-agent run on the same substream,
  // and the mean-field variant with lambda = 0 reproduces it bit for bit.
  const mfl::SixHumpCamel f;
  const HyperParams hp = camel_params(0.0);
  const NoiseStream noise(8);
  const AgentMatrix X0 = random_matrix(4, 2, -2, 2, 30);
  ParticleSystem all(X0, 1), mf(X0, 1);
  all.init_fast();
  mf.init_fast();
  for (int n = 0; n < 6; ++n) {
    mfl::hom_sgld_step(all, f, hp, noise);
    mfl::mf_hom_sgld_step(mf, f, hp, noise);
  }
  EXPECT_EQ(all, mf);
  for (std::size_t i = 0; i < 4; ++i) {
    AgentMatrix xi(1, 2);
    xi(0, 0) = X0(i, 0);
    xi(0, 1) = X0(i, 1);
    ParticleSystem one(xi, 1);
    one.stream_ids[0] = static_cast<std::uint32_t>(i);
    one.init_fast();
    for (int n = 0; n < 6; ++n) mfl::hom_sgld_step(one, f, hp, noise);
    EXPECT_EQ(one.X(0, 0), all.X(i, 0));
    EXPECT_EQ(one.X(0, 1), all.X(i, 1));
  }
}

TEST(Homogenized, QuadraticSpectralContraction) {
  // Without noise on Phi = a x^2 / 2 one outer step is linear in (x, y). Build
  // the 2x2 matrix from the scalar recursion and compare with the library.
  const double a = 1.0;
  const mfl::Quadratic f(1, a);
  const HyperParams hp = camel_params(0.0);
  const auto noise = NoiseStream::disabled();

  const double r = hp.fast_dt() / hp.epsilon;
  auto oracle = [&](double x, double y) {
    double acc = 0.0;
    const std::size_t total = hp.burn_in + hp.inner_steps - 1;
    for (std::size_t m = 1; m <= total; ++m) {
      if (m >= hp.burn_in) acc += y;
      y = y - r * (a * y - (x - y) / hp.gamma);
    }
    acc /= double(hp.inner_steps);
    return std::pair{x - hp.outer_dt / hp.gamma * (x - acc), y};
  };

  double A[2][2];
  for (int col = 0; col < 2; ++col) {
    AgentMatrix X(1, 1, col == 0 ? 1.0 : 0.0);
    ParticleSystem sys(X);
    sys.Y = AgentMatrix(1, 1, col == 1 ? 1.0 : 0.0);
    mfl::hom_sgld_step(sys, f, hp, noise);
    const auto [ox, oy] = oracle(col == 0 ? 1.0 : 0.0, col == 1 ? 1.0 : 0.0);
    EXPECT_NEAR(sys.X(0, 0), ox, 1e-14);
    EXPECT_NEAR(sys.Y(0, 0), oy, 1e-14);
    A[0][col] = sys.X(0, 0);
    A[1][col] = sys.Y(0, 0);
  }
  const double tr = A[0][0] + A[1][1];
  const double det = A[0][0] * A[1][1] - A[0][1] * A[1][0];
  const std::complex<double> disc = std::sqrt(std::complex<double>(tr * tr - 4.0 * det));
  const double rho = std::max(std::abs((tr + disc) / 2.0), std::abs((tr - disc) / 2.0));
  EXPECT_LT(rho, 1.0);

  ParticleSystem sys(AgentMatrix(1, 1, 1.5));
  sys.init_fast();
  double prev = 1.5;
  for (int n = 0; n < 400; ++n) {
    mfl::hom_sgld_step(sys, f, hp, noise);
    const double cur = std::abs(sys.X(0, 0));
    EXPECT_LT(cur, prev);
    prev = cur;
  }
  EXPECT_LT(prev, 1.5 * std::pow(rho, 400) * 10.0);
}

TEST(SmoothedGd, ZeroBandwidthIsGradientDescent) {
  const mfl::SixHumpCamel f;
  const NoiseStream noise(2);
  const Vector x{0.4, -0.3};
  const Vector out = mfl::smoothed_gd_step(x, f, 0.0, 5, 0.01, mfl::AgentNoise(noise, {}, 1));
  const Vector g = f.gradient(x);
  for (std::size_t k = 0; k < 2; ++k) EXPECT_NEAR(out[k], x[k] - 0.01 * g[k], 1e-16);
}

TEST(SmoothedGd, LinearObjectiveIgnoresSmoothing) {
  const mfl::Linear f({2.0, -1.0});
  const NoiseStream noise(2);
  const Vector x{0.4, -0.3};
  const Vector out = mfl::smoothed_gd_step(x, f, 3.0, 17, 0.1, mfl::AgentNoise(noise, {}, 1));
  EXPECT_NEAR(out[0], 0.4 - 0.2, 1e-15);
  EXPECT_NEAR(out[1], -0.3 + 0.1, 1e-15);
}

TEST(SmoothedGd, QuadraticMeanStep) {
  const mfl::Quadratic f(2);
  const NoiseStream noise(6);
  const Vector x{1.0, -2.0};
  const double h = 0.25;
  const std::size_t n = 10000;
  const Vector out = mfl::smoothed_gd_step(x, f, h, n, 0.1, mfl::AgentNoise(noise, {}, 1));
  const double se = 0.1 * std::sqrt(h / n);
  for (std::size_t k = 0; k < 2; ++k) EXPECT_NEAR(out[k], x[k] - 0.1 * x[k], 4.0 * se);
  EXPECT_THROW(mfl::smoothed_gd_step(x, f, h, 0, 0.1, mfl::AgentNoise(noise, {}, 1)),
               std::invalid_argument);
}

TEST(Driver, TraceAndDeterminism) {
  const mfl::SixHumpCamel f;
  HyperParams hp = camel_params(2.0);
  hp.iterations = 7;
  const NoiseStream noise(12);
  for (Method m : {Method::sgld, Method::mf_sgld, Method::hom_sgld, Method::mf_hom_sgld,
                   Method::smoothed_gd}) {
    std::vector<std::size_t> seen;
    const ParticleSystem init(random_matrix(6, 2, -2, 2, 1));
    const auto a = mfl::run_method(m, f, hp, noise, init,
                                   [&](const ParticleSystem& s) { seen.push_back(s.iter); });
    const auto b = mfl::run_method(m, f, hp, noise, init);
    EXPECT_EQ(a, b) << mfl::to_string(m);
    EXPECT_EQ(seen.size(), hp.iterations + 1);
    EXPECT_EQ(seen.front(), 0u);
    EXPECT_EQ(seen.back(), hp.iterations);
    EXPECT_EQ(a.has_fast(), mfl::is_homogenized(m));
  }
}

TEST(Driver, DimensionMismatchRejected) {
  const mfl::SixHumpCamel f;
  const NoiseStream noise(1);
  EXPECT_THROW(mfl::run_method(Method::sgld, f, camel_params(0.0), noise,
                               ParticleSystem(AgentMatrix(3, 5))),
               std::invalid_argument);
}

TEST(Driver, DivergenceRaisesNumericalAbort) {
  const mfl::Oscillatory f(10, 0.01);
  HyperParams hp;
  hp.beta = 1.0;
  hp.outer_dt = 0.01;
  hp.agents = 3;
  hp.iterations = 200;
  const NoiseStream noise(1);
  try {
    mfl::run_method(Method::sgld, f, hp, noise, ParticleSystem(AgentMatrix(3, 10, 9.0)));
    FAIL() << "expected NumericalAbort";
  } catch (const mfl::NumericalAbort& e) {
    EXPECT_GE(e.iteration(), 1u);
    EXPECT_LE(e.iteration(), hp.iterations);
    EXPECT_LT(e.agent(), 3u);
  }
}

}  // namespace
