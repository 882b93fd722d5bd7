// Runs mean-field homogenized SGLD on the six-hump camel function and prints
// where the agents end up.

#include <iostream>

#include "mfl/dynamics.hpp"
#include "mfl/harness.hpp"
#include "mfl/objectives.hpp"

int main() {
  const mfl::SixHumpCamel camel;

  mfl::HyperParams hp;
  hp.beta = 10.0;
  hp.lambda = 10.0;
  hp.gamma = 0.1;
  hp.epsilon = 1.0;
  hp.outer_dt = 0.01;
  hp.inner_steps = 20;
  hp.agents = 25;
  hp.iterations = 150;

  mfl::harness::ExperimentConfig cfg;
  cfg.method = mfl::Method::mf_hom_sgld;
  cfg.hp = hp;
  cfg.seed = 7;
  cfg.init_lo = {-2.0};
  cfg.init_hi = {2.0};

  const mfl::NoiseStream noise(cfg.seed);
  const auto final_state = mfl::run_method(cfg.method, camel, hp, noise,
                                           mfl::harness::init_particles(cfg, 0, 2));
  const auto dist = mfl::harness::distance_metrics(final_state.X, camel.known_minimizers());
  const auto mean = mfl::empirical_mean(final_state.X);
  std::cout << "consensus point (" << mean[0] << ", " << mean[1] << ")\n"
            << "best agent distance " << dist.best << ", worst " << dist.worst << "\n";
}
