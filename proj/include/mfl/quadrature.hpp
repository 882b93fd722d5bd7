#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <mutex>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Eigenvalues>

#include "mfl/linalg.hpp"

namespace mfl {

/// Physicists' Gauss-Hermite rule: integral of e^{-t^2} f(t) ~ sum w_i f(t_i).
struct GaussHermiteRule {
  Vector nodes;
  Vector weights;
  Vector log_weights;

  std::size_t size() const noexcept { return nodes.size(); }
};

namespace detail {

// Nodes start from the eigenvalues of the Jacobi matrix (Golub-Welsch) and are
// polished by Newton steps on the normalized Hermite functions
// psi_j(z) = p_j(z) exp(-z^2/2), which stay in range for any node count.
// Weights come out in log form, w = exp(-z^2) / (n psi_{n-1}(z)^2), so they keep
// full relative accuracy in the tails.
inline GaussHermiteRule compute_gauss_hermite(std::size_t n) {
  const double dn = static_cast<double>(n);
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  Eigen::VectorXd off(static_cast<Eigen::Index>(n - 1));
  for (Eigen::Index k = 0; k < off.size(); ++k) off[k] = std::sqrt(0.5 * static_cast<double>(k + 1));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig;
  eig.computeFromTridiagonal(diag, off, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) throw std::runtime_error("gauss_hermite: eigen solver failed");

  GaussHermiteRule rule;
  rule.nodes.assign(n, 0.0);
  rule.log_weights.assign(n, 0.0);
  const std::size_t half = (n + 1) / 2;
  for (std::size_t i = 0; i < half; ++i) {
    // Positive roots from the top down; mirrored below.
    double z = eig.eigenvalues()[static_cast<Eigen::Index>(n - 1 - i)];
    // log |psi_{n-1}(z)|; the recurrence is rescaled on the fly so that
    // neither exp(-z^2/2) nor the raw polynomial leaves double range.
    double log_psi = 0.0;
    bool converged = false;
    for (int it = 0; it < 100; ++it) {
      double p1 = 1.0, p2 = 0.0, log_scale = -0.25 * std::log(std::numbers::pi);
      for (std::size_t j = 0; j < n; ++j) {
        const double p3 = p2;
        p2 = p1;
        const double dj = static_cast<double>(j);
        p1 = z * std::sqrt(2.0 / (dj + 1.0)) * p2 - std::sqrt(dj / (dj + 1.0)) * p3;
        if (std::abs(p1) > 1e150) {
          p1 *= 1e-150;
          p2 *= 1e-150;
          log_scale += 150.0 * std::numbers::ln10;
        }
      }
      log_psi = std::log(std::abs(p2)) + log_scale - 0.5 * z * z;
      const double z1 = z;
      z = z1 - p1 / (std::sqrt(2.0 * dn) * p2);
      if (std::abs(z - z1) <= 1e-14 * std::max(1.0, std::abs(z))) {
        converged = true;
        break;
      }
    }
    if (!converged) throw std::runtime_error("gauss_hermite: Newton iteration did not converge");
    if (n % 2 == 1 && i + 1 == half) z = 0.0;
    const double log_w = -z * z - std::log(dn) - 2.0 * log_psi;
    rule.nodes[n - 1 - i] = z;
    rule.nodes[i] = -z;
    rule.log_weights[n - 1 - i] = rule.log_weights[i] = log_w;
  }
  rule.weights.resize(n);
  for (std::size_t k = 0; k < n; ++k) rule.weights[k] = std::exp(rule.log_weights[k]);
  return rule;
}

}  // namespace detail

/// Cached rule for n nodes.
inline const GaussHermiteRule& gauss_hermite(std::size_t n) {
  if (n == 0) throw std::invalid_argument("gauss_hermite: need at least one node");
  static std::mutex mutex;
  static std::map<std::size_t, GaussHermiteRule> cache;
  std::lock_guard lock(mutex);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, detail::compute_gauss_hermite(n)).first;
  return it->second;
}

/// Uniform lattice on [lo, hi] with n points. Points are computed so that a
/// grid with lo = -hi is exactly mirror-symmetric.
struct UniformGrid {
  double lo = -1.0;
  double hi = 1.0;
  std::size_t n = 2;

  UniformGrid() = default;
  UniformGrid(double lo_, double hi_, std::size_t n_) : lo(lo_), hi(hi_), n(n_) {
    if (n < 2) throw std::invalid_argument("grid: need at least two points");
    if (!(lo < hi)) throw std::invalid_argument("grid: lo must be below hi");
  }

  double point(std::size_t i) const {
    const double m = static_cast<double>(n - 1);
    return (static_cast<double>(n - 1 - i) * lo + static_cast<double>(i) * hi) / m;
  }
  double spacing() const { return (hi - lo) / static_cast<double>(n - 1); }
  Vector points() const {
    Vector p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = point(i);
    return p;
  }
};

/// Trapezoid rule on a uniform grid. Terms are summed in mirrored pairs so an
/// odd integrand on a symmetric grid integrates to exactly zero.
inline double trapezoid(std::span<const double> values, const UniformGrid& grid) {
  if (values.size() != grid.n) throw std::invalid_argument("trapezoid: size mismatch");
  const std::size_t n = values.size();
  double sum = 0.5 * (values[0] + values[n - 1]);
  for (std::size_t i = 1; i < n / 2; ++i) sum += values[i] + values[n - 1 - i];
  if (n % 2 == 1 && n > 2) sum += values[n / 2];
  return sum * grid.spacing();
}

/// 2D trapezoid on a tensor grid, values stored row-major (x outer, y inner).
inline double trapezoid2d(std::span<const double> values, const UniformGrid& gx,
                          const UniformGrid& gy) {
  if (values.size() != gx.n * gy.n) throw std::invalid_argument("trapezoid2d: size mismatch");
  Vector inner(gx.n);
  for (std::size_t i = 0; i < gx.n; ++i) inner[i] = trapezoid(values.subspan(i * gy.n, gy.n), gy);
  return trapezoid(inner, gx);
}

}  // namespace mfl
