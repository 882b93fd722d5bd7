#pragma once

// Benchmark losses with analytic gradients and a string-keyed registry.

#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mfl/linalg.hpp"

namespace mfl {

// Six-hump camel: (4 - 2.1 x1^2 + x1^4/3) x1^2 + x1 x2 + (-4 + 4 x2^2) x2^2.
inline double camel_value(std::span<const double> x) {
  const double a = x[0], b = x[1];
  const double a2 = a * a, b2 = b * b;
  return (4.0 - 2.1 * a2 + a2 * a2 / 3.0) * a2 + a * b + (-4.0 + 4.0 * b2) * b2;
}

inline void camel_gradient(std::span<const double> x, std::span<double> g) {
  const double a = x[0], b = x[1];
  const double a2 = a * a;
  g[0] = 8.0 * a - 8.4 * a2 * a + 2.0 * a2 * a2 * a + b;
  g[1] = a - 8.0 * b + 16.0 * b * b * b;
}

// Separable oscillatory loss: sum_i (x_i sin(x_i/delta) + 0.1 x_i)^2.
inline double oscillatory_value(std::span<const double> x, double delta) {
  if (!(delta > 0.0)) throw std::invalid_argument("oscillatory: osc_delta must be positive");
  double s = 0.0;
  for (double xi : x) {
    const double t = xi * std::sin(xi / delta) + 0.1 * xi;
    s += t * t;
  }
  return s;
}

inline void oscillatory_gradient(std::span<const double> x, double delta, std::span<double> g) {
  if (!(delta > 0.0)) throw std::invalid_argument("oscillatory: osc_delta must be positive");
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double u = x[i] / delta;
    const double s = std::sin(u);
    const double t = x[i] * s + 0.1 * x[i];
    g[i] = 2.0 * t * (s + u * std::cos(u) + 0.1);
  }
}

inline double double_well_value(double x) {
  const double x2 = x * x;
  return 0.25 * x2 * x2 - 0.5 * x2;
}

inline double double_well_gradient(double x) { return x * x * x - x; }

/// Differentiable scalar field on R^d. Implementations are immutable and
/// safe to evaluate concurrently.
class Objective {
 public:
  virtual ~Objective() = default;

  virtual std::string id() const = 0;
  virtual std::size_t dimension() const = 0;
  virtual double value(std::span<const double> x) const = 0;
  virtual void gradient(std::span<const double> x, std::span<double> g) const = 0;

  virtual std::vector<Vector> known_minimizers() const { return {}; }
  virtual std::map<std::string, double> params() const { return {}; }
  /// Per-axis box used for sampling and finite-difference checks.
  virtual std::pair<double, double> reference_box() const { return {-2.0, 2.0}; }

  Vector gradient(std::span<const double> x) const {
    Vector g(x.size());
    gradient(x, g);
    return g;
  }
};

class SixHumpCamel final : public Objective {
 public:
  std::string id() const override { return "camel6"; }
  std::size_t dimension() const override { return 2; }
  double value(std::span<const double> x) const override { return camel_value(x); }
  void gradient(std::span<const double> x, std::span<double> g) const override {
    camel_gradient(x, g);
  }
  using Objective::gradient;
  std::vector<Vector> known_minimizers() const override {
    return {{-0.0898, 0.7126}, {0.0898, -0.7126}};
  }
  std::pair<double, double> reference_box() const override { return {-2.0, 2.0}; }
};

class Oscillatory final : public Objective {
 public:
  Oscillatory(std::size_t dim, double osc_delta) : dim_(dim), delta_(osc_delta) {
    if (dim == 0) throw std::invalid_argument("oscillatory: dimension must be positive");
    if (!(osc_delta > 0.0)) throw std::invalid_argument("oscillatory: osc_delta must be positive");
  }
  std::string id() const override { return "oscillatory"; }
  std::size_t dimension() const override { return dim_; }
  double value(std::span<const double> x) const override { return oscillatory_value(x, delta_); }
  void gradient(std::span<const double> x, std::span<double> g) const override {
    oscillatory_gradient(x, delta_, g);
  }
  using Objective::gradient;
  // The loss is a sum of squares that all vanish at the origin.
  std::vector<Vector> known_minimizers() const override { return {Vector(dim_, 0.0)}; }
  std::map<std::string, double> params() const override { return {{"osc_delta", delta_}}; }
  std::pair<double, double> reference_box() const override { return {-10.0, 10.0}; }
  double osc_delta() const noexcept { return delta_; }

 private:
  std::size_t dim_;
  double delta_;
};

class DoubleWell1D final : public Objective {
 public:
  std::string id() const override { return "doublewell1d"; }
  std::size_t dimension() const override { return 1; }
  double value(std::span<const double> x) const override { return double_well_value(x[0]); }
  void gradient(std::span<const double> x, std::span<double> g) const override {
    g[0] = double_well_gradient(x[0]);
  }
  using Objective::gradient;
  std::vector<Vector> known_minimizers() const override { return {{-1.0}, {1.0}}; }
};

/// 0.5 * curvature * |x|^2 + offset.
class Quadratic final : public Objective {
 public:
  explicit Quadratic(std::size_t dim, double curvature = 1.0, double offset = 0.0)
      : dim_(dim), a_(curvature), c_(offset) {
    if (dim == 0) throw std::invalid_argument("quadratic: dimension must be positive");
  }
  std::string id() const override { return "quadratic"; }
  std::size_t dimension() const override { return dim_; }
  double value(std::span<const double> x) const override {
    double s = 0.0;
    for (double v : x) s += v * v;
    return 0.5 * a_ * s + c_;
  }
  void gradient(std::span<const double> x, std::span<double> g) const override {
    for (std::size_t i = 0; i < x.size(); ++i) g[i] = a_ * x[i];
  }
  using Objective::gradient;
  std::vector<Vector> known_minimizers() const override {
    if (a_ > 0.0) return {Vector(dim_, 0.0)};
    return {};
  }
  std::map<std::string, double> params() const override {
    return {{"curvature", a_}, {"offset", c_}};
  }

 private:
  std::size_t dim_;
  double a_;
  double c_;
};

/// slope . x
class Linear final : public Objective {
 public:
  explicit Linear(Vector slope) : slope_(std::move(slope)) {
    if (slope_.empty()) throw std::invalid_argument("linear: dimension must be positive");
  }
  std::string id() const override { return "linear"; }
  std::size_t dimension() const override { return slope_.size(); }
  double value(std::span<const double> x) const override {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += slope_[i] * x[i];
    return s;
  }
  void gradient(std::span<const double>, std::span<double> g) const override {
    std::copy(slope_.begin(), slope_.end(), g.begin());
  }
  using Objective::gradient;

 private:
  Vector slope_;
};

using ObjectiveFactory =
    std::function<std::unique_ptr<Objective>(std::size_t dim, const std::map<std::string, double>&)>;

namespace detail {

inline double param_or(const std::map<std::string, double>& p, const std::string& key,
                       double fallback) {
  const auto it = p.find(key);
  return it == p.end() ? fallback : it->second;
}

inline void require_dim(std::string_view id, std::size_t dim, std::size_t expected) {
  if (dim != 0 && dim != expected)
    throw std::invalid_argument(std::string(id) + ": dimension must be " +
                                std::to_string(expected));
}

}  // namespace detail

/// Name-keyed objective registry. dim = 0 selects the objective's natural
/// dimension where it has one.
class ObjectiveRegistry {
 public:
  static ObjectiveRegistry& instance() {
    static ObjectiveRegistry registry;
    return registry;
  }

  std::unique_ptr<Objective> make(const std::string& id, std::size_t dim,
                                  const std::map<std::string, double>& params = {}) const {
    const auto it = factories_.find(id);
    if (it == factories_.end()) throw std::invalid_argument("unknown objective id: " + id);
    return it->second(dim, params);
  }

  std::vector<std::string> ids() const {
    std::vector<std::string> out;
    for (const auto& [k, _] : factories_) out.push_back(k);
    return out;
  }

  bool contains(const std::string& id) const { return factories_.count(id) != 0; }

 private:
  ObjectiveRegistry() {
    factories_["camel6"] = [](std::size_t dim, const auto&) {
      detail::require_dim("camel6", dim, 2);
      return std::make_unique<SixHumpCamel>();
    };
    factories_["oscillatory"] = [](std::size_t dim, const auto& p) {
      return std::make_unique<Oscillatory>(dim == 0 ? 1 : dim,
                                           detail::param_or(p, "osc_delta", 0.01));
    };
    factories_["doublewell1d"] = [](std::size_t dim, const auto&) {
      detail::require_dim("doublewell1d", dim, 1);
      return std::make_unique<DoubleWell1D>();
    };
    factories_["quadratic"] = [](std::size_t dim, const auto& p) {
      return std::make_unique<Quadratic>(dim == 0 ? 1 : dim, detail::param_or(p, "curvature", 1.0),
                                         detail::param_or(p, "offset", 0.0));
    };
  }

  std::map<std::string, ObjectiveFactory> factories_;
};

inline std::unique_ptr<Objective> make_objective(const std::string& id, std::size_t dim = 0,
                                                 const std::map<std::string, double>& params = {}) {
  return ObjectiveRegistry::instance().make(id, dim, params);
}

}  // namespace mfl
