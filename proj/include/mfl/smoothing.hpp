#pragma once

// Loss-smoothing diagnostics in one and two dimensions: Gaussian kernel
// convolution, Gibbs and mean-field stationary densities, the Cole-Hopf
// effective potential and the mean-field free energy.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mfl/linalg.hpp"
#include "mfl/objectives.hpp"
#include "mfl/quadrature.hpp"
#include "mfl/random.hpp"

namespace mfl {

/// Raised when exp(-beta * Phi) still carries mass at the grid boundary.
class NonIntegrable : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

inline constexpr std::size_t kDefaultNodes1D = 128;
inline constexpr std::size_t kDefaultNodes2D = 64;

namespace detail {

inline std::size_t default_nodes(std::size_t dim, std::size_t requested) {
  if (requested != 0) return requested;
  return dim == 1 ? kDefaultNodes1D : kDefaultNodes2D;
}

inline void require_low_dim(const Objective& f, const char* what) {
  if (f.dimension() != 1 && f.dimension() != 2)
    throw std::invalid_argument(std::string(what) + ": only 1D and 2D objectives are supported");
}

// E[g(x + sqrt(variance) xi)], xi ~ N(0, I), by tensor Gauss-Hermite.
template <typename G>
double gaussian_expectation(std::span<const double> x, double variance, std::size_t nodes, G&& g) {
  const auto& rule = gauss_hermite(nodes);
  const double scale = std::sqrt(2.0 * variance);
  const double inv_sqrt_pi = 1.0 / std::sqrt(std::numbers::pi);
  if (x.size() == 1) {
    double s = 0.0;
    double y[1];
    for (std::size_t i = 0; i < rule.size(); ++i) {
      y[0] = x[0] + scale * rule.nodes[i];
      s += rule.weights[i] * g(std::span<const double>(y, 1));
    }
    return s * inv_sqrt_pi;
  }
  double s = 0.0;
  double y[2];
  for (std::size_t i = 0; i < rule.size(); ++i) {
    y[0] = x[0] + scale * rule.nodes[i];
    double inner = 0.0;
    for (std::size_t j = 0; j < rule.size(); ++j) {
      y[1] = x[1] + scale * rule.nodes[j];
      inner += rule.weights[j] * g(std::span<const double>(y, 2));
    }
    s += rule.weights[i] * inner;
  }
  return s * inv_sqrt_pi * inv_sqrt_pi;
}

}  // namespace detail

/// Phi^h(x) = (G_h * Phi)(x) with G_h the centred Gaussian of variance h.
inline double kernel_smooth(const Objective& f, double h, std::span<const double> x,
                            std::size_t nodes = 0) {
  detail::require_low_dim(f, "kernel_smooth");
  if (!(h > 0.0)) throw std::invalid_argument("kernel_smooth: h must be positive");
  return detail::gaussian_expectation(x, h, detail::default_nodes(f.dimension(), nodes),
                                      [&](std::span<const double> y) { return f.value(y); });
}

inline Vector kernel_smooth(const Objective& f, double h, const UniformGrid& grid,
                            std::size_t nodes = 0) {
  if (f.dimension() != 1) throw std::invalid_argument("kernel_smooth: grid form is 1D only");
  Vector out(grid.n);
  for (std::size_t i = 0; i < grid.n; ++i) {
    const double x = grid.point(i);
    out[i] = kernel_smooth(f, h, std::span<const double>(&x, 1), nodes);
  }
  return out;
}

/// Monte-Carlo estimate of grad Phi^h(x): mean of grad Phi(x + xi_k),
/// xi_k ~ N(0, h I). Sample k uses inner index k of the smoothing substream.
inline Vector mc_smoothed_gradient(const Objective& f, std::span<const double> x, double h,
                                   std::size_t n_samples, const AgentNoise& noise) {
  if (n_samples == 0) throw std::invalid_argument("mc_smoothed_gradient: n_samples must be >= 1");
  if (h < 0.0) throw std::invalid_argument("mc_smoothed_gradient: h must be non-negative");
  const std::size_t d = x.size();
  const double sd = std::sqrt(h);
  Vector acc(d, 0.0), y(d), z(d), g(d);
  for (std::size_t k = 0; k < n_samples; ++k) {
    noise.sample(static_cast<std::uint32_t>(k), z);
    for (std::size_t j = 0; j < d; ++j) y[j] = x[j] + sd * z[j];
    f.gradient(y, g);
    for (std::size_t j = 0; j < d; ++j) acc[j] += g[j];
  }
  for (double& v : acc) v /= static_cast<double>(n_samples);
  return acc;
}

inline Vector mc_smoothed_gradient(const Objective& f, std::span<const double> x, double h,
                                   std::size_t n_samples, std::uint64_t seed) {
  const NoiseStream stream(seed);
  return mc_smoothed_gradient(f, x, h, n_samples, AgentNoise(stream, {}, 0));
}

/// Normalized density sampled on a 1D grid or a 2D tensor grid (row-major,
/// first axis outer).
struct GridDensity {
  std::vector<UniformGrid> axes;
  Vector values;

  std::size_t dimension() const noexcept { return axes.size(); }

  double integral() const {
    return axes.size() == 1 ? trapezoid(values, axes[0]) : trapezoid2d(values, axes[0], axes[1]);
  }

  void normalize() {
    const double z = integral();
    if (!(z > 0.0) || !std::isfinite(z)) throw NonIntegrable("density has no finite mass");
    for (double& v : values) v /= z;
  }

  /// Integral of g(point) * density.
  template <typename G>
  double expect(G&& g) const {
    Vector w(values.size());
    if (axes.size() == 1) {
      for (std::size_t i = 0; i < axes[0].n; ++i) {
        const double p = axes[0].point(i);
        w[i] = g(std::span<const double>(&p, 1)) * values[i];
      }
      return trapezoid(w, axes[0]);
    }
    double p[2];
    for (std::size_t i = 0; i < axes[0].n; ++i) {
      p[0] = axes[0].point(i);
      for (std::size_t j = 0; j < axes[1].n; ++j) {
        p[1] = axes[1].point(j);
        w[i * axes[1].n + j] = g(std::span<const double>(p, 2)) * values[i * axes[1].n + j];
      }
    }
    return trapezoid2d(w, axes[0], axes[1]);
  }

  double mean(std::size_t axis = 0) const {
    return expect([axis](std::span<const double> p) { return p[axis]; });
  }

  double variance(std::size_t axis = 0) const {
    const double m = mean(axis);
    return expect([axis, m](std::span<const double> p) { return (p[axis] - m) * (p[axis] - m); });
  }
};

namespace detail {

// Density proportional to exp(-beta * potential(point)) on the given axes,
// with the boundary integrability check.
template <typename Potential>
GridDensity gibbs_density(const std::vector<UniformGrid>& axes, double beta, Potential&& potential) {
  GridDensity rho;
  rho.axes = axes;
  const std::size_t nx = axes[0].n;
  const std::size_t ny = axes.size() == 2 ? axes[1].n : 1;
  Vector log_rho(nx * ny);
  double p[2];
  for (std::size_t i = 0; i < nx; ++i) {
    p[0] = axes[0].point(i);
    for (std::size_t j = 0; j < ny; ++j) {
      if (axes.size() == 2) p[1] = axes[1].point(j);
      log_rho[i * ny + j] = -beta * potential(std::span<const double>(p, axes.size()));
    }
  }
  const double top = *std::max_element(log_rho.begin(), log_rho.end());
  if (!std::isfinite(top)) throw NonIntegrable("stationary density: non-finite potential on grid");
  rho.values.resize(log_rho.size());
  for (std::size_t k = 0; k < log_rho.size(); ++k) rho.values[k] = std::exp(log_rho[k] - top);
  double boundary = 0.0;
  for (std::size_t i = 0; i < nx; ++i) {
    for (std::size_t j = 0; j < ny; ++j) {
      const bool edge = i == 0 || i + 1 == nx || (axes.size() == 2 && (j == 0 || j + 1 == ny));
      if (edge) boundary = std::max(boundary, rho.values[i * ny + j]);
    }
  }
  if (boundary >= 1e-12)
    throw NonIntegrable("stationary density: exp(-beta*Phi) not negligible at grid boundary "
                        "(relative value " + std::to_string(boundary) + ")");
  rho.normalize();
  return rho;
}

}  // namespace detail

/// rho_inf = Z^{-1} exp(-beta Phi) on a 1D grid.
inline GridDensity stationary_density(const Objective& f, double beta, const UniformGrid& grid) {
  if (f.dimension() != 1) throw std::invalid_argument("stationary_density: objective is not 1D");
  if (!(beta > 0.0)) throw std::invalid_argument("stationary_density: beta must be positive");
  return detail::gibbs_density({grid}, beta, [&](std::span<const double> p) { return f.value(p); });
}

/// rho_inf on a 2D tensor grid.
inline GridDensity stationary_density(const Objective& f, double beta, const UniformGrid& gx,
                                      const UniformGrid& gy) {
  if (f.dimension() != 2) throw std::invalid_argument("stationary_density: objective is not 2D");
  if (!(beta > 0.0)) throw std::invalid_argument("stationary_density: beta must be positive");
  return detail::gibbs_density({gx, gy}, beta,
                               [&](std::span<const double> p) { return f.value(p); });
}

/// Candidate mean-field stationary state exp(-beta (Phi + lambda/2 |x - m|^2)) / Z.
inline GridDensity mean_field_state(const Objective& f, double beta, double lambda, double m,
                                    const UniformGrid& grid) {
  if (f.dimension() != 1) throw std::invalid_argument("mean_field_state: objective is not 1D");
  return detail::gibbs_density({grid}, beta, [&](std::span<const double> p) {
    return f.value(p) + 0.5 * lambda * (p[0] - m) * (p[0] - m);
  });
}

inline UniformGrid default_density_grid() { return {-10.0, 10.0, 4001}; }

struct FixedPointResult {
  double m = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  bool damped = false;
};

/// Picard iteration m <- mean of the mean-field state with parameter m.
/// Switches to 0.5 damping once successive updates change sign.
/// Non-convergence is reported through the result, not thrown.
inline FixedPointResult self_consistent_mean(const Objective& f, double beta, double lambda,
                                             double m0, double tol, std::size_t max_iter,
                                             const UniformGrid& grid = default_density_grid()) {
  if (!(tol > 0.0)) throw std::invalid_argument("self_consistent_mean: tol must be positive");
  if (lambda < 0.0) throw std::invalid_argument("self_consistent_mean: lambda must be >= 0");
  FixedPointResult result;
  double m = m0;
  double last_step = 0.0;
  for (std::size_t k = 1; k <= max_iter; ++k) {
    const double image = mean_field_state(f, beta, lambda, m, grid).mean();
    double next = image;
    if (!result.damped && last_step != 0.0 && (image - m) * last_step < 0.0) result.damped = true;
    if (result.damped) next = 0.5 * m + 0.5 * image;
    const double step = next - m;
    m = next;
    result.iterations = k;
    if (std::abs(step) < tol) {
      result.converged = true;
      break;
    }
    last_step = step;
  }
  result.m = m;
  return result;
}

/// Interaction strength at which Var_{rho_inf}(x) = 1 / (beta lambda).
inline double critical_lambda(const Objective& f, double beta,
                              const UniformGrid& grid = default_density_grid()) {
  const GridDensity rho = stationary_density(f, beta, grid);
  return 1.0 / (beta * rho.variance());
}

enum class ColeHopfSign {
  effective,  ///< -(1/beta) log(G * exp(-beta Phi)), the smoothed loss
  literal,    ///< +(1/beta) log(G * exp(-beta Phi)), as the formula is printed
};

/// Cole-Hopf effective potential with kernel variance gamma / beta, by
/// Gauss-Hermite quadrature evaluated in log-sum-exp form.
inline double cole_hopf(const Objective& f, double beta, double gamma, std::span<const double> x,
                        std::size_t nodes = 0, ColeHopfSign sign = ColeHopfSign::effective) {
  detail::require_low_dim(f, "cole_hopf");
  if (!(gamma > 0.0)) throw std::invalid_argument("cole_hopf: gamma must be positive");
  if (!(beta > 0.0)) throw std::invalid_argument("cole_hopf: beta must be positive");
  const auto& rule = gauss_hermite(detail::default_nodes(f.dimension(), nodes));
  const double scale = std::sqrt(2.0 * gamma / beta);
  const std::size_t n = rule.size();
  Vector terms;
  terms.reserve(f.dimension() == 1 ? n : n * n);
  double y[2];
  if (f.dimension() == 1) {
    for (std::size_t i = 0; i < n; ++i) {
      y[0] = x[0] + scale * rule.nodes[i];
      terms.push_back(rule.log_weights[i] - beta * f.value(std::span<const double>(y, 1)));
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      y[0] = x[0] + scale * rule.nodes[i];
      for (std::size_t j = 0; j < n; ++j) {
        y[1] = x[1] + scale * rule.nodes[j];
        terms.push_back(rule.log_weights[i] + rule.log_weights[j] -
                        beta * f.value(std::span<const double>(y, 2)));
      }
    }
  }
  const double top = *std::max_element(terms.begin(), terms.end());
  double s = 0.0;
  for (double t : terms) s += std::exp(t - top);
  const double log_norm = 0.5 * static_cast<double>(f.dimension()) * std::log(std::numbers::pi);
  const double log_conv = top + std::log(s) - log_norm;
  return sign == ColeHopfSign::effective ? -log_conv / beta : log_conv / beta;
}

/// F(rho) = beta^{-1} int rho ln rho + int Phi rho + (lambda/2) int (D * rho) rho,
/// with D(x, y) = |x - y|^2 / 2. The interaction term is evaluated through
/// the identity int int |x-y|^2/2 rho rho = mass * E[x^2] - E[x]^2.
inline double free_energy(const GridDensity& rho, const Objective& f, double beta, double lambda) {
  if (rho.dimension() != 1 || f.dimension() != 1)
    throw std::invalid_argument("free_energy: 1D only");
  const UniformGrid& grid = rho.axes[0];
  Vector entropy(grid.n), potential(grid.n);
  for (std::size_t i = 0; i < grid.n; ++i) {
    const double r = rho.values[i];
    entropy[i] = r > 0.0 ? r * std::log(r) : 0.0;
    const double x = grid.point(i);
    potential[i] = f.value(std::span<const double>(&x, 1)) * r;
  }
  double interaction = 0.0;
  if (lambda != 0.0) {
    const double mass = rho.integral();
    const double m1 = rho.expect([](std::span<const double> p) { return p[0]; });
    const double m2 = rho.expect([](std::span<const double> p) { return p[0] * p[0]; });
    interaction = 0.5 * lambda * (mass * m2 - m1 * m1);
  }
  return trapezoid(entropy, grid) / beta + trapezoid(potential, grid) + interaction;
}

/// One row of the sampled-potential table.
struct PotentialSample {
  double x = 0.0;
  double phi = 0.0;
  double phi_kernel = 0.0;
  double phi_cole_hopf = 0.0;
};

struct FixedPointSummary {
  double m0 = 0.0;
  FixedPointResult result;
};

struct SmoothingReport {
  std::string objective;
  double beta = 1.0;
  double lambda = 0.0;
  double gamma = 0.1;
  double h = 0.1;
  ColeHopfSign sign = ColeHopfSign::effective;
  double critical_lambda = 0.0;
  std::vector<FixedPointSummary> fixed_points;
  std::vector<PotentialSample> samples;
  std::vector<double> kernel_minima;
  std::vector<double> cole_hopf_minima;
};

/// Strict interior local minima of sampled values.
inline std::vector<std::size_t> local_minima(std::span<const double> v) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 1; i + 1 < v.size(); ++i)
    if (v[i] < v[i - 1] && v[i] < v[i + 1]) idx.push_back(i);
  return idx;
}

struct DiagnoseOptions {
  double beta = 1.0;
  double lambda = 0.0;
  double gamma = 0.1;
  double h = 0.1;
  UniformGrid sample_grid{-2.0, 2.0, 401};
  UniformGrid density_grid = default_density_grid();
  std::vector<double> starts{-0.5, 0.0, 0.5};
  double tol = 1e-10;
  std::size_t max_iter = 1000;
  ColeHopfSign sign = ColeHopfSign::effective;
};

/// Full 1D diagnostic sweep for a single objective.
inline SmoothingReport diagnose(const Objective& f, const DiagnoseOptions& opt) {
  if (f.dimension() != 1) throw std::invalid_argument("diagnose: 1D objectives only");
  SmoothingReport report;
  report.objective = f.id();
  report.beta = opt.beta;
  report.lambda = opt.lambda;
  report.gamma = opt.gamma;
  report.h = opt.h;
  report.sign = opt.sign;
  report.critical_lambda = critical_lambda(f, opt.beta, opt.density_grid);
  for (double m0 : opt.starts)
    report.fixed_points.push_back(
        {m0, self_consistent_mean(f, opt.beta, opt.lambda, m0, opt.tol, opt.max_iter,
                                  opt.density_grid)});
  Vector kern(opt.sample_grid.n), ch(opt.sample_grid.n);
  for (std::size_t i = 0; i < opt.sample_grid.n; ++i) {
    const double x = opt.sample_grid.point(i);
    const std::span<const double> p(&x, 1);
    PotentialSample s{x, f.value(p), kernel_smooth(f, opt.h, p),
                      cole_hopf(f, opt.beta, opt.gamma, p, 0, opt.sign)};
    kern[i] = s.phi_kernel;
    ch[i] = s.phi_cole_hopf;
    report.samples.push_back(s);
  }
  for (std::size_t i : local_minima(kern)) report.kernel_minima.push_back(opt.sample_grid.point(i));
  for (std::size_t i : local_minima(ch)) report.cole_hopf_minima.push_back(opt.sample_grid.point(i));
  return report;
}

}  // namespace mfl
