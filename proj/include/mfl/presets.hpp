#pragma once

// Bundled experiment configurations for the camel traces, the oscillatory
// convergence study and the ellipse classifier.

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mfl::harness {

struct Preset {
  std::string name;
  std::string text;
};

namespace detail {

inline std::string camel_preset(const std::string& method, double lambda) {
  return "experiment = langevin\n"
         "method = " + method + "\n"
         "objective = camel6\n"
         "beta = 10\n"
         "lambda = " + std::to_string(static_cast<int>(lambda)) + "\n"
         "gamma = 0.1\n"
         "epsilon = 1\n"
         "outer_dt = 0.01\n"
         "M = 20\n"
         "m_prime = 1\n"
         "N = 25\n"
         "iters = 150\n"
         "runs = 1\n"
         "seed = 1\n"
         "init_lo = -2\n"
         "init_hi = 2\n"
         "record_traces = true\n";
}

inline std::string oscillatory_preset(const std::string& method, std::size_t dim) {
  const bool hom = method == "hom-sgld" || method == "mf-hom-sgld";
  const bool mf = method == "mf-sgld" || method == "mf-hom-sgld";
  return "experiment = langevin\n"
         "method = " + method + "\n"
         "objective = oscillatory\n"
         "dim = " + std::to_string(dim) + "\n"
         "osc_delta = 0.01\n"
         "beta = 1\n"
         "lambda = " + std::string(mf ? "3" : "0") + "\n"
         "gamma = 0.1\n"
         "epsilon = 0.01\n"
         "outer_dt = " + std::string(hom ? "0.005" : "0.01") + "\n"
         "M = 20\n"
         "m_prime = 1\n"
         "N = 50\n"
         "iters = 2000\n"
         "runs = 50\n"
         "seed = 1\n"
         "init_lo = -10\n"
         "init_hi = 10\n"
         "record_traces = false\n";
}

inline std::string ellipse_preset(const std::string& method, const std::string& scheme) {
  return "experiment = ellipse\n"
         "method = " + method + "\n"
         "scheme = " + scheme + "\n"
         "beta = 10\n"
         "outer_dt = 0.01\n"
         "gamma = 0.1\n"
         "epsilon = 1\n"
         "M = 20\n"
         "m_prime = 1\n"
         "N = 1\n"
         "seed = 1\n"
         "layers = 128\n"
         "net_step = 0.05\n"
         "n_per_class = 500\n"
         "noise_sigma = 0.05\n"
         "train_fraction = 0.8\n"
         "epochs = 100\n"
         "steps_per_epoch = 1\n"
         "init_scale = 0.1\n"
         "grid_x_lo = -2\n"
         "grid_x_hi = 2\n"
         "grid_y_lo = -4\n"
         "grid_y_hi = 4\n"
         "grid_resolution = 101\n";
}

}  // namespace detail

inline const std::vector<Preset>& presets() {
  static const std::vector<Preset> all = [] {
    std::vector<Preset> p;
    p.push_back({"fig1_a", detail::camel_preset("sgld", 0)});
    p.push_back({"fig1_b", detail::camel_preset("mf-sgld", 2)});
    p.push_back({"fig1_c", detail::camel_preset("mf-hom-sgld", 2)});
    p.push_back({"fig1_d", detail::camel_preset("hom-sgld", 0)});
    p.push_back({"fig1_e", detail::camel_preset("mf-sgld", 10)});
    p.push_back({"fig1_f", detail::camel_preset("mf-hom-sgld", 10)});
    for (const char* m : {"sgld", "mf-sgld", "hom-sgld", "mf-hom-sgld"})
      for (std::size_t d : {10u, 50u})
        p.push_back({std::string("fig2_") + m + "_d" + std::to_string(d),
                     detail::oscillatory_preset(m, d)});
    for (const char* m : {"sgld", "hom"})
      for (const char* s : {"verlet", "euler"})
        p.push_back({std::string("ellipse_") + m + "_" + s,
                     detail::ellipse_preset(std::string(m) == "hom" ? "hom-sgld" : "sgld", s)});
    return p;
  }();
  return all;
}

inline const Preset* find_preset(const std::string& name) {
  for (const auto& p : presets())
    if (p.name == name) return &p;
  return nullptr;
}

}  // namespace mfl::harness
