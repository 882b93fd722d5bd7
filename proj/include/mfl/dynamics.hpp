#pragma once

// Langevin optimizers: i.i.d. SGLD, mean-field interacting SGLD, homogenized
// two-timescale SGLD and the combined mean-field homogenized scheme, plus
// Gaussian-smoothed gradient descent. Every stepper is a deterministic
// function of (state, objective, hyper-parameters, noise stream).

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mfl/linalg.hpp"
#include "mfl/objectives.hpp"
#include "mfl/random.hpp"
#include "mfl/smoothing.hpp"

namespace mfl {

/// Non-finite state encountered; carries the failing iteration and agent.
class NumericalAbort : public std::runtime_error {
 public:
  NumericalAbort(std::size_t iteration, std::size_t agent, const std::string& what)
      : std::runtime_error(format(iteration, agent, what)), iteration_(iteration), agent_(agent) {}

  std::size_t iteration() const noexcept { return iteration_; }
  std::size_t agent() const noexcept { return agent_; }

 private:
  static std::string format(std::size_t iteration, std::size_t agent, const std::string& what) {
    std::ostringstream os;
    os << "numerical abort at iteration " << iteration << ", agent " << agent << ": " << what;
    return os.str();
  }
  std::size_t iteration_;
  std::size_t agent_;
};

enum class Method { sgld, mf_sgld, hom_sgld, mf_hom_sgld, smoothed_gd };

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::sgld: return "sgld";
    case Method::mf_sgld: return "mf-sgld";
    case Method::hom_sgld: return "hom-sgld";
    case Method::mf_hom_sgld: return "mf-hom-sgld";
    case Method::smoothed_gd: return "smoothed-gd";
  }
  return "?";
}

inline Method parse_method(std::string_view s) {
  for (Method m : {Method::sgld, Method::mf_sgld, Method::hom_sgld, Method::mf_hom_sgld,
                   Method::smoothed_gd})
    if (to_string(m) == s) return m;
  throw std::invalid_argument("unknown method id: " + std::string(s));
}

inline bool is_homogenized(Method m) { return m == Method::hom_sgld || m == Method::mf_hom_sgld; }
inline bool is_mean_field(Method m) { return m == Method::mf_sgld || m == Method::mf_hom_sgld; }

struct HyperParams {
  double beta = 1.0;      ///< inverse temperature
  double lambda = 0.0;    ///< Curie-Weiss interaction strength
  double gamma = 0.1;     ///< homogenization regularizer
  double epsilon = 1.0;   ///< scale separation
  double outer_dt = 0.01; ///< slow step
  std::optional<double> inner_dt;  ///< fast step; derived as outer_dt / M when unset
  std::size_t inner_steps = 20;    ///< M
  std::size_t burn_in = 1;         ///< m'
  std::size_t agents = 1;          ///< N
  std::size_t iterations = 100;    ///< n_max
  double smoothing_h = 0.1;        ///< kernel variance for smoothed-gd
  std::size_t smoothing_samples = 1;

  /// Checks ranges and fills inner_dt = outer_dt / M. An explicit inner_dt
  /// must satisfy inner_dt * M = outer_dt to 1e-12 relative.
  HyperParams validated() const {
    HyperParams hp = *this;
    auto require = [](bool ok, const char* msg) {
      if (!ok) throw std::invalid_argument(std::string("hyper-parameters: ") + msg);
    };
    require(beta > 0.0, "beta must be positive");
    require(lambda >= 0.0, "lambda must be non-negative");
    require(gamma > 0.0, "gamma must be positive");
    require(epsilon > 0.0, "epsilon must be positive");
    require(outer_dt > 0.0, "outer_dt must be positive");
    require(inner_steps >= 1, "M must be positive");
    require(burn_in >= 1, "m_prime must be positive");
    require(burn_in <= inner_steps, "m_prime must not exceed M");
    require(agents >= 1, "N must be positive");
    require(iterations >= 1, "iterations must be positive");
    require(smoothing_h >= 0.0, "smoothing_h must be non-negative");
    require(smoothing_samples >= 1, "smoothing_samples must be positive");
    const double derived = outer_dt / static_cast<double>(inner_steps);
    if (inner_dt) {
      require(*inner_dt > 0.0, "inner_dt must be positive");
      require(std::abs(*inner_dt - derived) <= 1e-12 * derived,
              "inner_dt * M must equal outer_dt");
    }
    hp.inner_dt = derived;
    return hp;
  }

  double fast_dt() const { return inner_dt.value_or(outer_dt / static_cast<double>(inner_steps)); }
};

/// Slow positions X, fast positions Y (homogenized methods only), the
/// iteration counter and each agent's noise substream.
struct ParticleSystem {
  AgentMatrix X;
  AgentMatrix Y;
  std::size_t iter = 0;
  std::uint32_t run = 0;
  std::vector<std::uint32_t> stream_ids;

  ParticleSystem() = default;
  ParticleSystem(AgentMatrix positions, std::uint32_t run_index = 0)
      : X(std::move(positions)), run(run_index), stream_ids(X.rows()) {
    for (std::size_t i = 0; i < stream_ids.size(); ++i)
      stream_ids[i] = static_cast<std::uint32_t>(i);
  }

  std::size_t agents() const noexcept { return X.rows(); }
  std::size_t dimension() const noexcept { return X.cols(); }
  bool has_fast() const noexcept { return !Y.empty(); }
  /// Y := X, the fast variable starts on its slow partner.
  void init_fast() { Y = X; }

  StreamId stream(std::size_t i) const { return {run, stream_ids.at(i)}; }

  friend bool operator==(const ParticleSystem&, const ParticleSystem&) = default;
};

namespace detail {

inline void check_finite(std::span<const double> v, std::size_t iter, std::size_t agent,
                         const char* what) {
  if (!all_finite(v)) throw NumericalAbort(iter, agent, what);
}

inline std::uint32_t step_index(std::size_t iter) {
  if (iter > 0xFFFFFFFFu) throw std::out_of_range("iteration index exceeds 2^32-1");
  return static_cast<std::uint32_t>(iter);
}

}  // namespace detail

/// x' = x - dt grad Phi(x) + sqrt(2 dt / beta) z
inline Vector sgld_step(std::span<const double> x, const Objective& f, double beta, double dt,
                        std::span<const double> z) {
  Vector g = f.gradient(x);
  const double s = std::sqrt(2.0 * dt / beta);
  Vector out(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) out[k] = x[k] - dt * g[k] + s * z[k];
  return out;
}

/// lambda (X_i - mean), with the mean given.
inline Vector interaction_force(std::span<const double> xi, std::span<const double> mean,
                                double lambda) {
  Vector out(xi.size());
  for (std::size_t k = 0; k < xi.size(); ++k) out[k] = lambda * (xi[k] - mean[k]);
  return out;
}

inline Vector interaction_force(const AgentMatrix& X, std::size_t i, double lambda) {
  return interaction_force(X.row(i), empirical_mean(X), lambda);
}

/// Independent SGLD step for every agent.
inline void sgld_system_step(ParticleSystem& sys, const Objective& f, const HyperParams& hp,
                             const NoiseStream& noise) {
  const std::uint32_t step = detail::step_index(sys.iter + 1);
  Vector z(sys.dimension());
  AgentMatrix next(sys.agents(), sys.dimension());
  for (std::size_t i = 0; i < sys.agents(); ++i) {
    AgentNoise(noise, sys.stream(i), step).outer(z);
    const Vector xi = sgld_step(sys.X.row(i), f, hp.beta, hp.outer_dt, z);
    detail::check_finite(xi, sys.iter + 1, i, "non-finite SGLD state");
    std::copy(xi.begin(), xi.end(), next.row(i).begin());
  }
  sys.X = std::move(next);
  ++sys.iter;
}

/// Euler-Maruyama step of the interacting system; the empirical mean is
/// taken from the pre-update positions.
inline void mf_sgld_step(ParticleSystem& sys, const Objective& f, const HyperParams& hp,
                         const NoiseStream& noise) {
  if (hp.lambda < 0.0) throw std::invalid_argument("mf_sgld_step: lambda must be >= 0");
  const std::uint32_t step = detail::step_index(sys.iter + 1);
  const std::size_t d = sys.dimension();
  const Vector mean = empirical_mean(sys.X);
  const double dt = hp.outer_dt;
  const double s = std::sqrt(2.0 * dt / hp.beta);
  Vector z(d), g(d);
  AgentMatrix next(sys.agents(), d);
  for (std::size_t i = 0; i < sys.agents(); ++i) {
    const auto xi = sys.X.row(i);
    AgentNoise(noise, sys.stream(i), step).outer(z);
    f.gradient(xi, g);
    auto out = next.row(i);
    for (std::size_t k = 0; k < d; ++k) {
      double v = xi[k] - dt * g[k];
      if (hp.lambda != 0.0) v -= dt * (hp.lambda * (xi[k] - mean[k]));
      out[k] = v + s * z[k];
    }
    detail::check_finite(out, sys.iter + 1, i, "non-finite MF-SGLD state");
  }
  sys.X = std::move(next);
  ++sys.iter;
}

struct InnerResult {
  Vector y_final;
  Vector y_avg;
};

/// Fast recursion of the homogenized scheme for one agent:
///   Y_m = Y_{m-1} - (dt/eps)(grad Phi(Y_{m-1}) - (x - Y_{m-1})/gamma) + sqrt(2 dt/(beta eps)) Z_m
/// Runs m'+M-1 steps and averages the M iterates Y_{m'-1} .. Y_{m'+M-2}.
inline InnerResult hom_inner_loop(std::span<const double> x, std::span<const double> y0,
                                  const Objective& f, const HyperParams& hp,
                                  const AgentNoise& noise) {
  const std::size_t d = x.size();
  const std::size_t M = hp.inner_steps;
  const std::size_t first = hp.burn_in;
  const std::size_t total = first + M - 1;
  if (first < 1 || first > M) throw std::invalid_argument("hom_inner_loop: need 1 <= m' <= M");
  const double dt = hp.fast_dt();
  const double rate = dt / hp.epsilon;
  const double inv_gamma = 1.0 / hp.gamma;
  const double s = std::sqrt(2.0 * dt / (hp.beta * hp.epsilon));
  Vector y(y0.begin(), y0.end());
  Vector acc(d, 0.0), g(d), z(d);
  for (std::size_t m = 1; m <= total; ++m) {
    // Y_{m-1} belongs to the window when m' <= m <= m'+M-1.
    if (m >= first)
      for (std::size_t k = 0; k < d; ++k) acc[k] += y[k];
    f.gradient(y, g);
    noise.inner(static_cast<std::uint32_t>(m), z);
    for (std::size_t k = 0; k < d; ++k)
      y[k] = y[k] - rate * (g[k] - inv_gamma * (x[k] - y[k])) + s * z[k];
    detail::check_finite(y, noise.step(), noise.id().agent, "non-finite fast variable");
  }
  for (double& v : acc) v /= static_cast<double>(M);
  return {std::move(y), std::move(acc)};
}

namespace detail {

inline void homogenized_step(ParticleSystem& sys, const Objective& f, const HyperParams& hp,
                             const NoiseStream& noise, bool interacting) {
  if (!sys.has_fast()) throw std::logic_error("homogenized step: particle system has no Y state");
  const std::uint32_t step = step_index(sys.iter + 1);
  const std::size_t d = sys.dimension();
  const double dt = hp.outer_dt;
  const double relax = dt / hp.gamma;
  Vector mean;
  if (interacting && hp.lambda != 0.0) mean = empirical_mean(sys.X);
  AgentMatrix next_x(sys.agents(), d), next_y(sys.agents(), d);
  for (std::size_t i = 0; i < sys.agents(); ++i) {
    const auto xi = sys.X.row(i);
    const InnerResult inner =
        hom_inner_loop(xi, sys.Y.row(i), f, hp, AgentNoise(noise, sys.stream(i), step));
    auto out = next_x.row(i);
    for (std::size_t k = 0; k < d; ++k) {
      double v = xi[k] - relax * (xi[k] - inner.y_avg[k]);
      if (interacting && hp.lambda != 0.0) v -= dt * (hp.lambda * (xi[k] - mean[k]));
      out[k] = v;
    }
    check_finite(out, sys.iter + 1, i, "non-finite homogenized state");
    std::copy(inner.y_final.begin(), inner.y_final.end(), next_y.row(i).begin());
  }
  sys.X = std::move(next_x);
  sys.Y = std::move(next_y);
  ++sys.iter;
}

}  // namespace detail

/// Homogenized SGLD without interaction: N independent copies.
inline void hom_sgld_step(ParticleSystem& sys, const Objective& f, const HyperParams& hp,
                          const NoiseStream& noise) {
  detail::homogenized_step(sys, f, hp, noise, false);
}

/// Mean-field homogenized SGLD: per agent, continue the fast chain from its
/// previous final state, average it, relax X toward the average and toward
/// the empirical mean of the pre-update slow positions.
inline void mf_hom_sgld_step(ParticleSystem& sys, const Objective& f, const HyperParams& hp,
                             const NoiseStream& noise) {
  detail::homogenized_step(sys, f, hp, noise, true);
}

/// x' = x - dt * mean_k grad Phi(x + xi_k), xi_k ~ N(0, h I).
inline Vector smoothed_gd_step(std::span<const double> x, const Objective& f, double h,
                               std::size_t n_samples, double dt, const AgentNoise& noise) {
  if (n_samples == 0) throw std::invalid_argument("smoothed_gd_step: n_samples must be >= 1");
  const Vector g = mc_smoothed_gradient(f, x, h, n_samples, noise);
  Vector out(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) out[k] = x[k] - dt * g[k];
  return out;
}

inline void smoothed_gd_system_step(ParticleSystem& sys, const Objective& f,
                                    const HyperParams& hp, const NoiseStream& noise) {
  const std::uint32_t step = detail::step_index(sys.iter + 1);
  AgentMatrix next(sys.agents(), sys.dimension());
  for (std::size_t i = 0; i < sys.agents(); ++i) {
    const Vector xi = smoothed_gd_step(sys.X.row(i), f, hp.smoothing_h, hp.smoothing_samples,
                                       hp.outer_dt, AgentNoise(noise, sys.stream(i), step));
    detail::check_finite(xi, sys.iter + 1, i, "non-finite smoothed-GD state");
    std::copy(xi.begin(), xi.end(), next.row(i).begin());
  }
  sys.X = std::move(next);
  ++sys.iter;
}

inline void step(Method method, ParticleSystem& sys, const Objective& f, const HyperParams& hp,
                 const NoiseStream& noise) {
  switch (method) {
    case Method::sgld: sgld_system_step(sys, f, hp, noise); return;
    case Method::mf_sgld: mf_sgld_step(sys, f, hp, noise); return;
    case Method::hom_sgld: hom_sgld_step(sys, f, hp, noise); return;
    case Method::mf_hom_sgld: mf_hom_sgld_step(sys, f, hp, noise); return;
    case Method::smoothed_gd: smoothed_gd_system_step(sys, f, hp, noise); return;
  }
}

/// Called with the initial state and after every step.
using TraceSink = std::function<void(const ParticleSystem&)>;

/// Runs hp.iterations steps of the selected method from `initial`.
/// NumericalAbort propagates with the failing iteration.
inline ParticleSystem run_method(Method method, const Objective& f, const HyperParams& params,
                                 const NoiseStream& noise, ParticleSystem initial,
                                 const TraceSink& sink = {}) {
  const HyperParams hp = params.validated();
  if (initial.dimension() != f.dimension())
    throw std::invalid_argument("run_method: particle dimension does not match objective");
  if (is_homogenized(method) && !initial.has_fast()) initial.init_fast();
  if (sink) sink(initial);
  for (std::size_t n = 0; n < hp.iterations; ++n) {
    step(method, initial, f, hp, noise);
    if (sink) sink(initial);
  }
  return initial;
}

}  // namespace mfl
