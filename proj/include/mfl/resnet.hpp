#pragma once

// Co-centric ellipse classification with a dynamical-systems residual
// network. The network state is propagated through L layers of a
// leapfrog (Verlet) or explicit Euler discretization with tanh activations;
// gradients are computed by hand-written reverse mode.
//
// Parameter layout (774 values for L = 128):
//   [0, 2)          opening weights  w_o (1x2)
//   [2]             opening bias     b_o
//   [3 + 6j, +4)    layer j weights  K_j (2x2, row-major)
//   [7 + 6j, +2)    layer j bias     b_j
//   [3 + 6L, +2)    readout weights  w_r
//   [5 + 6L]        readout bias     b_r
// Forward pass:
//   y_0 = x + tanh(w_o . x + b_o) * (1, 1),   z_0 = 0
//   verlet: z_{j+1} = z_j - h tanh(K_j^T y_j + b_j)
//           y_{j+1} = y_j + h tanh(K_j z_{j+1} + b_j)
//   euler:  y_{j+1} = y_j + h tanh(K_j y_j + b_j)
//   logit  = w_r . y_L + b_r

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mfl/dynamics.hpp"
#include "mfl/linalg.hpp"
#include "mfl/objectives.hpp"
#include "mfl/random.hpp"

namespace mfl::resnet {

using Point = std::array<double, 2>;

struct EllipseDataset {
  std::vector<Point> points;
  std::vector<int> labels;
  std::vector<bool> train;  ///< split tag, false = test
  std::uint64_t seed = 0;

  std::size_t size() const noexcept { return points.size(); }
};

struct EllipseOptions {
  std::size_t n_per_class = 500;
  double noise_sigma = 0.05;
  double train_fraction = 0.8;
  Point inner_axes{0.35, 0.7};
  Point outer_axes{0.8, 1.6};
  Point clip{1.0, 2.0};
};

/// Class 0 on the inner ellipse, class 1 on the outer one, uniform angle and
/// multiplicative radial jitter, clipped to [-1,1] x [-2,2]. Points are
/// interleaved by class; the first train_fraction of each class is training.
inline EllipseDataset generate_ellipses(const EllipseOptions& opt, std::uint64_t seed) {
  if (opt.n_per_class < 1) throw std::invalid_argument("generate_ellipses: n_per_class must be >= 1");
  if (opt.noise_sigma < 0.0) throw std::invalid_argument("generate_ellipses: noise_sigma must be >= 0");
  if (opt.train_fraction < 0.0 || opt.train_fraction > 1.0)
    throw std::invalid_argument("generate_ellipses: train_fraction must be in [0, 1]");
  const NoiseStream stream(seed);
  EllipseDataset ds;
  ds.seed = seed;
  const auto n_train =
      static_cast<std::size_t>(std::llround(opt.train_fraction * static_cast<double>(opt.n_per_class)));
  double u[1], z[1];
  for (std::size_t k = 0; k < opt.n_per_class; ++k) {
    for (int label = 0; label < 2; ++label) {
      const StreamId id{0, static_cast<std::uint32_t>(label)};
      stream.uniform(Purpose::data, id, static_cast<std::uint32_t>(k), 0, u);
      stream.gaussian(Purpose::data, id, static_cast<std::uint32_t>(k), 1, z);
      const double theta = 2.0 * std::numbers::pi * u[0];
      const double r = opt.noise_sigma > 0.0 ? 1.0 + opt.noise_sigma * z[0] : 1.0;
      const Point& axes = label == 0 ? opt.inner_axes : opt.outer_axes;
      Point p{axes[0] * r * std::cos(theta), axes[1] * r * std::sin(theta)};
      p[0] = std::clamp(p[0], -opt.clip[0], opt.clip[0]);
      p[1] = std::clamp(p[1], -opt.clip[1], opt.clip[1]);
      ds.points.push_back(p);
      ds.labels.push_back(label);
      ds.train.push_back(k < n_train);
    }
  }
  return ds;
}

inline EllipseDataset generate_ellipses(std::size_t n_per_class, double noise_sigma,
                                        std::uint64_t seed) {
  EllipseOptions opt;
  opt.n_per_class = n_per_class;
  opt.noise_sigma = noise_sigma;
  return generate_ellipses(opt, seed);
}

enum class Scheme { verlet, euler };

inline std::string_view to_string(Scheme s) { return s == Scheme::verlet ? "verlet" : "euler"; }

inline Scheme parse_scheme(std::string_view s) {
  if (s == "verlet") return Scheme::verlet;
  if (s == "euler") return Scheme::euler;
  throw std::invalid_argument("unknown scheme: " + std::string(s));
}

struct Architecture {
  std::size_t layers = 128;
  double step = 0.05;
  Scheme scheme = Scheme::verlet;

  static constexpr std::size_t kWidth = 2;
  static constexpr std::size_t kOpening = 3;
  static constexpr std::size_t kPerLayer = 6;
  static constexpr std::size_t kReadout = 3;

  std::size_t parameter_count() const { return kOpening + kPerLayer * layers + kReadout; }
  std::size_t layer_offset(std::size_t j) const { return kOpening + kPerLayer * j; }
  std::size_t readout_offset() const { return kOpening + kPerLayer * layers; }

  std::string descriptor() const {
    std::ostringstream os;
    os << "opening=1x2+1;layers=" << layers << "x(2x2+2);readout=2+1;h=" << step
       << ";activation=tanh;scheme=" << to_string(scheme);
    return os.str();
  }
};

inline constexpr std::size_t kParameterCount = 774;

struct VerletNet {
  Architecture arch;
  Vector params;

  /// Zero-initialized network. Fails with the achieved count when it differs
  /// from `expected_count` (pass 0 to skip the check).
  static VerletNet build(const Architecture& arch,
                         std::size_t expected_count = kParameterCount) {
    const std::size_t count = arch.parameter_count();
    if (expected_count != 0 && count != expected_count)
      throw std::logic_error("VerletNet: architecture yields " + std::to_string(count) +
                             " parameters, expected " + std::to_string(expected_count));
    if (!(arch.step > 0.0)) throw std::invalid_argument("VerletNet: step must be positive");
    return {arch, Vector(count, 0.0)};
  }
};

/// Per-layer activations retained for the backward pass.
struct ForwardCache {
  Point input{};
  double opening = 0.0;                 ///< tanh(w_o . x + b_o)
  std::vector<Point> y;                 ///< y_0 .. y_L
  std::vector<Point> z;                 ///< z_0 .. z_L (verlet only)
  std::vector<Point> act_a;             ///< tanh(K^T y + b) (verlet only)
  std::vector<Point> act_c;             ///< tanh(K z + b) or tanh(K y + b)
};

inline double forward(const Architecture& arch, std::span<const double> p, const Point& x,
                      ForwardCache& cache) {
  const std::size_t L = arch.layers;
  const double h = arch.step;
  cache.input = x;
  cache.opening = std::tanh(p[0] * x[0] + p[1] * x[1] + p[2]);
  cache.y.resize(L + 1);
  cache.act_c.resize(L);
  cache.y[0] = {x[0] + cache.opening, x[1] + cache.opening};
  if (arch.scheme == Scheme::verlet) {
    cache.z.resize(L + 1);
    cache.act_a.resize(L);
    cache.z[0] = {0.0, 0.0};
    for (std::size_t j = 0; j < L; ++j) {
      const double* K = &p[arch.layer_offset(j)];
      const double* b = K + 4;
      const Point& y = cache.y[j];
      const Point& z = cache.z[j];
      Point ta{std::tanh(K[0] * y[0] + K[2] * y[1] + b[0]),
               std::tanh(K[1] * y[0] + K[3] * y[1] + b[1])};
      Point zn{z[0] - h * ta[0], z[1] - h * ta[1]};
      Point tc{std::tanh(K[0] * zn[0] + K[1] * zn[1] + b[0]),
               std::tanh(K[2] * zn[0] + K[3] * zn[1] + b[1])};
      cache.act_a[j] = ta;
      cache.z[j + 1] = zn;
      cache.act_c[j] = tc;
      cache.y[j + 1] = {y[0] + h * tc[0], y[1] + h * tc[1]};
    }
  } else {
    cache.z.clear();
    cache.act_a.clear();
    for (std::size_t j = 0; j < L; ++j) {
      const double* K = &p[arch.layer_offset(j)];
      const double* b = K + 4;
      const Point& y = cache.y[j];
      Point tc{std::tanh(K[0] * y[0] + K[1] * y[1] + b[0]),
               std::tanh(K[2] * y[0] + K[3] * y[1] + b[1])};
      cache.act_c[j] = tc;
      cache.y[j + 1] = {y[0] + h * tc[0], y[1] + h * tc[1]};
    }
  }
  const double* r = &p[arch.readout_offset()];
  return r[0] * cache.y[L][0] + r[1] * cache.y[L][1] + r[2];
}

inline double forward(const VerletNet& net, const Point& x, ForwardCache& cache) {
  return forward(net.arch, net.params, x, cache);
}

inline double logit(const VerletNet& net, const Point& x) {
  ForwardCache cache;
  return forward(net, x, cache);
}

/// Accumulates upstream * d logit / d params into grad.
inline void backward(const Architecture& arch, std::span<const double> p, const ForwardCache& cache,
                     double upstream, std::span<double> grad) {
  const std::size_t L = arch.layers;
  const double h = arch.step;
  double* gr = &grad[arch.readout_offset()];
  const double* r = &p[arch.readout_offset()];
  gr[0] += upstream * cache.y[L][0];
  gr[1] += upstream * cache.y[L][1];
  gr[2] += upstream;
  Point ybar{upstream * r[0], upstream * r[1]};
  Point zbar{0.0, 0.0};
  for (std::size_t jj = L; jj-- > 0;) {
    const double* K = &p[arch.layer_offset(jj)];
    double* gK = &grad[arch.layer_offset(jj)];
    double* gb = gK + 4;
    const Point& tc = cache.act_c[jj];
    const Point cbar{h * ybar[0] * (1.0 - tc[0] * tc[0]), h * ybar[1] * (1.0 - tc[1] * tc[1])};
    gb[0] += cbar[0];
    gb[1] += cbar[1];
    if (arch.scheme == Scheme::verlet) {
      // c = K z_{j+1} + b
      const Point& zn = cache.z[jj + 1];
      gK[0] += cbar[0] * zn[0];
      gK[1] += cbar[0] * zn[1];
      gK[2] += cbar[1] * zn[0];
      gK[3] += cbar[1] * zn[1];
      zbar[0] += K[0] * cbar[0] + K[2] * cbar[1];
      zbar[1] += K[1] * cbar[0] + K[3] * cbar[1];
      // z_{j+1} = z_j - h tanh(a),  a = K^T y_j + b
      const Point& ta = cache.act_a[jj];
      const Point abar{-h * zbar[0] * (1.0 - ta[0] * ta[0]), -h * zbar[1] * (1.0 - ta[1] * ta[1])};
      const Point& y = cache.y[jj];
      // a[s] = sum_r K[r][s] y[r] + b[s]
      gK[0] += abar[0] * y[0];
      gK[1] += abar[1] * y[0];
      gK[2] += abar[0] * y[1];
      gK[3] += abar[1] * y[1];
      gb[0] += abar[0];
      gb[1] += abar[1];
      ybar[0] += K[0] * abar[0] + K[1] * abar[1];
      ybar[1] += K[2] * abar[0] + K[3] * abar[1];
    } else {
      const Point& y = cache.y[jj];
      gK[0] += cbar[0] * y[0];
      gK[1] += cbar[0] * y[1];
      gK[2] += cbar[1] * y[0];
      gK[3] += cbar[1] * y[1];
      ybar[0] += K[0] * cbar[0] + K[2] * cbar[1];
      ybar[1] += K[1] * cbar[0] + K[3] * cbar[1];
    }
  }
  const double obar = (ybar[0] + ybar[1]) * (1.0 - cache.opening * cache.opening);
  grad[0] += obar * cache.input[0];
  grad[1] += obar * cache.input[1];
  grad[2] += obar;
}

/// log(1 + e^l) - label * l without overflow.
inline double bce_with_logit(double l, int label) {
  return std::max(l, 0.0) - (label ? l : 0.0) + std::log1p(std::exp(-std::abs(l)));
}

inline double sigmoid(double l) {
  return l >= 0.0 ? 1.0 / (1.0 + std::exp(-l)) : std::exp(l) / (1.0 + std::exp(l));
}

struct Sample {
  Point x;
  int label;
};

inline std::vector<Sample> select(const EllipseDataset& ds, bool train) {
  std::vector<Sample> out;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (ds.train[i] == train) out.push_back({ds.points[i], ds.labels[i]});
  return out;
}

struct LossAndGrad {
  double loss = 0.0;
  Vector grad;
};

/// Mean binary cross-entropy of sigmoid(logit) and its gradient.
inline LossAndGrad loss_and_grad(const Architecture& arch, std::span<const double> params,
                                 std::span<const Sample> batch) {
  if (batch.empty()) throw std::invalid_argument("loss_and_grad: empty batch");
  LossAndGrad out;
  out.grad.assign(params.size(), 0.0);
  ForwardCache cache;
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (const Sample& s : batch) {
    const double l = forward(arch, params, s.x, cache);
    total += bce_with_logit(l, s.label);
    backward(arch, params, cache, (sigmoid(l) - s.label) * inv_n, out.grad);
  }
  out.loss = total * inv_n;
  return out;
}

inline LossAndGrad loss_and_grad(const VerletNet& net, std::span<const Sample> batch) {
  return loss_and_grad(net.arch, net.params, batch);
}

inline double loss(const Architecture& arch, std::span<const double> params,
                   std::span<const Sample> batch) {
  if (batch.empty()) throw std::invalid_argument("loss: empty batch");
  ForwardCache cache;
  double total = 0.0;
  for (const Sample& s : batch) total += bce_with_logit(forward(arch, params, s.x, cache), s.label);
  return total / static_cast<double>(batch.size());
}

inline double accuracy(const Architecture& arch, std::span<const double> params,
                       std::span<const Sample> batch) {
  if (batch.empty()) return 0.0;
  ForwardCache cache;
  std::size_t hits = 0;
  for (const Sample& s : batch) {
    const double l = forward(arch, params, s.x, cache);
    hits += ((l > 0.0 ? 1 : 0) == s.label);
  }
  return static_cast<double>(hits) / static_cast<double>(batch.size());
}

/// Training loss over a fixed batch, exposed as an optimizer objective whose
/// position is the flattened parameter vector.
class NetworkLoss final : public Objective {
 public:
  NetworkLoss(Architecture arch, std::vector<Sample> batch)
      : arch_(arch), batch_(std::move(batch)) {
    if (batch_.empty()) throw std::invalid_argument("NetworkLoss: empty batch");
  }
  std::string id() const override { return "ellipse-bce"; }
  std::size_t dimension() const override { return arch_.parameter_count(); }
  double value(std::span<const double> x) const override { return loss(arch_, x, batch_); }
  void gradient(std::span<const double> x, std::span<double> g) const override {
    const LossAndGrad lg = loss_and_grad(arch_, x, batch_);
    std::copy(lg.grad.begin(), lg.grad.end(), g.begin());
  }
  using Objective::gradient;
  const Architecture& architecture() const noexcept { return arch_; }

 private:
  Architecture arch_;
  std::vector<Sample> batch_;
};

struct ProbabilityGrid {
  UniformGrid xs;
  UniformGrid ys;
  Vector prob;  ///< row-major, x outer

  double at(std::size_t i, std::size_t j) const { return prob[i * ys.n + j]; }
};

/// Class-1 probabilities on a uniform lattice, clamped to the open interval
/// (0, 1) so saturated logits stay distinguishable from certainty.
inline ProbabilityGrid probability_grid(const VerletNet& net, std::pair<double, double> x_range,
                                        std::pair<double, double> y_range, std::size_t resolution) {
  if (resolution < 2) throw std::invalid_argument("probability_grid: resolution must be >= 2");
  ProbabilityGrid g{UniformGrid(x_range.first, x_range.second, resolution),
                    UniformGrid(y_range.first, y_range.second, resolution),
                    {}};
  g.prob.resize(resolution * resolution);
  const double lo = std::numeric_limits<double>::min();
  const double hi = std::nextafter(1.0, 0.0);
  ForwardCache cache;
  for (std::size_t i = 0; i < resolution; ++i)
    for (std::size_t j = 0; j < resolution; ++j) {
      const double l = forward(net, {g.xs.point(i), g.ys.point(j)}, cache);
      g.prob[i * resolution + j] = std::clamp(sigmoid(l), lo, hi);
    }
  return g;
}

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double test_acc = 0.0;
};

struct TrainOptions {
  std::size_t epochs = 100;
  std::size_t steps_per_epoch = 1;
  double init_scale = 0.1;
  std::uint32_t run = 0;
};

struct TrainResult {
  VerletNet net;
  std::vector<EpochRecord> curve;  ///< epoch 0 is the initial state
  std::size_t best_agent = 0;
};

/// Drives the network parameters with one of the Langevin optimizers. Each
/// epoch is `steps_per_epoch` full-batch iterations; the curve tracks the
/// replica with the lowest training loss.
inline TrainResult train(const EllipseDataset& ds, const Architecture& arch, Method method,
                         const HyperParams& params, std::uint64_t seed, const TrainOptions& opt) {
  HyperParams hp = params;
  hp.iterations = std::max<std::size_t>(1, opt.epochs * opt.steps_per_epoch);
  hp = hp.validated();
  const VerletNet blank = VerletNet::build(arch, 0);
  const auto train_set = select(ds, true);
  const auto test_set = select(ds, false);
  const NetworkLoss objective(arch, train_set);
  const NoiseStream noise(seed);

  AgentMatrix X(hp.agents, blank.params.size());
  for (std::size_t i = 0; i < hp.agents; ++i) {
    auto row = X.row(i);
    noise.gaussian(Purpose::network_init, {opt.run, static_cast<std::uint32_t>(i)}, 0, 0, row);
    for (double& v : row) v *= opt.init_scale;
  }
  ParticleSystem sys(std::move(X), opt.run);
  if (is_homogenized(method)) sys.init_fast();

  TrainResult result;
  result.net = blank;
  auto record = [&](std::size_t epoch) {
    std::size_t best = 0;
    double best_loss = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < sys.agents(); ++i) {
      const double l = objective.value(sys.X.row(i));
      if (l < best_loss) {
        best_loss = l;
        best = i;
      }
    }
    result.best_agent = best;
    result.curve.push_back({epoch, best_loss, accuracy(arch, sys.X.row(best), test_set)});
  };
  record(0);
  for (std::size_t e = 1; e <= opt.epochs; ++e) {
    for (std::size_t s = 0; s < opt.steps_per_epoch; ++s) step(method, sys, objective, hp, noise);
    record(e);
  }
  const auto best = sys.X.row(result.best_agent);
  result.net.params.assign(best.begin(), best.end());
  return result;
}

}  // namespace mfl::resnet
