// Command-line front end: experiment runs, smoothing diagnostics, the ellipse
// classifier and preset listing.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mfl/csv.hpp"
#include "mfl/harness.hpp"
#include "mfl/objectives.hpp"
#include "mfl/presets.hpp"
#include "mfl/resnet.hpp"
#include "mfl/smoothing.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

using mfl::harness::ConfigError;
using mfl::harness::ExperimentConfig;

ExperimentConfig load_config(const std::string& source, const std::vector<std::string>& sets,
                             std::optional<std::uint64_t> seed, const std::string& out) {
  std::string text;
  if (std::filesystem::exists(source)) {
    text = mfl::read_file(source);
  } else if (const auto* p = mfl::harness::find_preset(source)) {
    text = p->text;
  } else {
    throw ConfigError("no config file or preset named '" + source + "'");
  }
  ExperimentConfig cfg = mfl::harness::parse_config(text);
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    mfl::harness::set_key(cfg, mfl::harness::detail::trim(kv.substr(0, eq)),
                          mfl::harness::detail::trim(kv.substr(eq + 1)));
  }
  if (seed) cfg.seed = *seed;
  if (!out.empty()) cfg.out_dir = out;
  mfl::harness::validate(cfg);
  return cfg;
}

nlohmann::json report_json(const mfl::SmoothingReport& r) {
  nlohmann::json j;
  j["objective"] = r.objective;
  j["beta"] = r.beta;
  j["lambda"] = r.lambda;
  j["gamma"] = r.gamma;
  j["h"] = r.h;
  j["cole_hopf_sign"] = r.sign == mfl::ColeHopfSign::effective ? "effective" : "literal";
  j["critical_lambda"] = r.critical_lambda;
  j["fixed_points"] = nlohmann::json::array();
  for (const auto& fp : r.fixed_points)
    j["fixed_points"].push_back({{"m0", fp.m0},
                                 {"m", fp.result.m},
                                 {"iterations", fp.result.iterations},
                                 {"converged", fp.result.converged},
                                 {"damped", fp.result.damped}});
  j["kernel_minima"] = r.kernel_minima;
  j["cole_hopf_minima"] = r.cole_hopf_minima;
  auto& samples = j["effective_potential"] = nlohmann::json::array();
  for (const auto& s : r.samples) samples.push_back({s.x, s.phi_cole_hopf});
  return j;
}

std::string report_csv(const mfl::SmoothingReport& r) {
  std::string out = "x,phi,phi_kernel_h,phi_colehopf_gamma\n";
  for (const auto& s : r.samples) mfl::CsvRow(out) << s.x << s.phi << s.phi_kernel << s.phi_cole_hopf;
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mean-field and homogenized Langevin optimizers"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "Run an experiment from a config file or preset name");
  std::string run_config;
  std::optional<std::uint64_t> run_seed;
  std::string run_out;
  std::size_t run_workers = 1;
  std::vector<std::string> run_sets;
  run->add_option("config", run_config, "Config file path or preset name")->required();
  run->add_option("--seed", run_seed, "Override the master seed");
  run->add_option("--out", run_out, "Output directory");
  run->add_option("--workers", run_workers, "Worker threads")->check(CLI::PositiveNumber);
  run->add_option("--set", run_sets, "Override a config key (key=value)");

  // smooth-diagnose
  auto* smooth = app.add_subcommand("smooth-diagnose", "Smoothing diagnostics for a 1D objective");
  std::string sm_objective = "doublewell1d";
  double sm_osc_delta = 0.01, sm_curvature = 1.0;
  mfl::DiagnoseOptions sm;
  double sm_lo = -2.0, sm_hi = 2.0;
  std::size_t sm_points = 401;
  std::string sm_json, sm_csv;
  bool sm_literal = false;
  smooth->add_option("--objective", sm_objective, "Objective id");
  smooth->add_option("--osc-delta", sm_osc_delta, "Oscillation scale for 'oscillatory'");
  smooth->add_option("--curvature", sm_curvature, "Curvature for 'quadratic'");
  smooth->add_option("--beta", sm.beta, "Inverse temperature");
  smooth->add_option("--lambda", sm.lambda, "Interaction strength");
  smooth->add_option("--gamma", sm.gamma, "Cole-Hopf regularizer");
  smooth->add_option("--kernel-h", sm.h, "Kernel smoothing variance");
  smooth->add_option("--lo", sm_lo, "Sample range lower bound");
  smooth->add_option("--hi", sm_hi, "Sample range upper bound");
  smooth->add_option("--points", sm_points, "Sample count");
  smooth->add_option("--json", sm_json, "Write the JSON report here instead of stdout");
  smooth->add_option("--csv", sm_csv, "Write sampled potentials as CSV");
  smooth->add_flag("--literal-cole-hopf", sm_literal, "Use the +1/beta sign variant");

  // ellipse-gen
  auto* egen = app.add_subcommand("ellipse-gen", "Generate the co-centric ellipse dataset");
  mfl::resnet::EllipseOptions eg;
  std::uint64_t eg_seed = 1;
  std::string eg_out = "dataset.csv";
  egen->add_option("--n-per-class", eg.n_per_class, "Points per class");
  egen->add_option("--noise", eg.noise_sigma, "Radial jitter");
  egen->add_option("--train-fraction", eg.train_fraction, "Training share per class");
  egen->add_option("--seed", eg_seed, "Seed");
  egen->add_option("--out", eg_out, "Output CSV");

  // ellipse-train
  auto* etrain = app.add_subcommand("ellipse-train", "Train the residual network on the ellipses");
  std::string et_config = "ellipse_sgld_verlet";
  std::string et_data, et_out = "ellipse_out";
  std::optional<std::uint64_t> et_seed;
  std::vector<std::string> et_sets;
  etrain->add_option("config", et_config, "Ellipse config file or preset name");
  etrain->add_option("--data", et_data, "Dataset CSV (generated from the config when omitted)");
  etrain->add_option("--out", et_out, "Output directory");
  etrain->add_option("--seed", et_seed, "Override the master seed");
  etrain->add_option("--set", et_sets, "Override a config key (key=value)");

  // grid-export
  auto* gexp = app.add_subcommand("grid-export", "Export class probabilities of a trained network");
  std::string gx_params, gx_out = "grid.csv", gx_scheme = "verlet";
  mfl::resnet::Architecture gx_arch;
  double gx_xlo = -2, gx_xhi = 2, gx_ylo = -4, gx_yhi = 4;
  std::size_t gx_res = 101;
  gexp->add_option("--params", gx_params, "Parameter file written by ellipse-train")->required();
  gexp->add_option("--scheme", gx_scheme, "verlet or euler");
  gexp->add_option("--layers", gx_arch.layers, "Layer count");
  gexp->add_option("--net-step", gx_arch.step, "Discretization step");
  gexp->add_option("--x-lo", gx_xlo);
  gexp->add_option("--x-hi", gx_xhi);
  gexp->add_option("--y-lo", gx_ylo);
  gexp->add_option("--y-hi", gx_yhi);
  gexp->add_option("--resolution", gx_res, "Points per axis");
  gexp->add_option("--out", gx_out, "Output CSV");

  // presets
  auto* pre = app.add_subcommand("presets", "Bundled experiment configurations");
  pre->require_subcommand(1);
  auto* pre_list = pre->add_subcommand("list", "List preset names");
  auto* pre_show = pre->add_subcommand("show", "Print a preset");
  std::string pre_name;
  pre_show->add_option("name", pre_name)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*run) {
      const auto cfg = load_config(run_config, run_sets, run_seed, run_out);
      if (cfg.kind == mfl::harness::ExperimentKind::ellipse) {
        const auto art = mfl::harness::run_ellipse(cfg);
        mfl::harness::write_artifacts(art, cfg.out_dir);
        if (art.failure) {
          std::cerr << art.failure->message << "\n";
          return kExitNumerical;
        }
        const auto& last = art.result.curve.back();
        std::cout << "epoch " << last.epoch << " train_loss " << last.train_loss << " test_acc "
                  << last.test_acc << "\n";
        return kExitOk;
      }
      const auto art = mfl::harness::run_experiment(cfg, run_workers);
      mfl::harness::write_artifacts(art, cfg.out_dir);
      for (const auto& f : art.failures) std::cerr << "run " << f.run << ": " << f.message << "\n";
      if (!art.summary.empty()) {
        const auto& s = art.summary.back();
        std::cout << "iter " << s.iter << " median_best " << s.median_best << " median_worst "
                  << s.median_worst << "\n";
      }
      return art.ok() ? kExitOk : kExitNumerical;
    }
    if (*smooth) {
      const auto f = mfl::make_objective(sm_objective, 1,
                                         {{"osc_delta", sm_osc_delta}, {"curvature", sm_curvature}});
      sm.sample_grid = mfl::UniformGrid(sm_lo, sm_hi, sm_points);
      sm.sign = sm_literal ? mfl::ColeHopfSign::literal : mfl::ColeHopfSign::effective;
      const auto report = mfl::diagnose(*f, sm);
      const std::string json = report_json(report).dump(2) + "\n";
      if (sm_json.empty()) std::cout << json;
      else mfl::write_file(sm_json, json);
      if (!sm_csv.empty()) mfl::write_file(sm_csv, report_csv(report));
      return kExitOk;
    }
    if (*egen) {
      mfl::write_file(eg_out, mfl::harness::dataset_csv(mfl::resnet::generate_ellipses(eg, eg_seed)));
      return kExitOk;
    }
    if (*etrain) {
      auto cfg = load_config(et_config, et_sets, et_seed, et_out);
      if (cfg.kind != mfl::harness::ExperimentKind::ellipse)
        throw ConfigError("ellipse-train needs an ellipse config");
      if (et_data.empty()) {
        const auto art = mfl::harness::run_ellipse(cfg);
        mfl::harness::write_artifacts(art, cfg.out_dir);
        if (art.failure) {
          std::cerr << art.failure->message << "\n";
          return kExitNumerical;
        }
        return kExitOk;
      }
      const auto ds = mfl::harness::parse_dataset_csv(mfl::read_file(et_data));
      mfl::resnet::TrainOptions opt;
      opt.epochs = cfg.ellipse.epochs;
      opt.steps_per_epoch = cfg.ellipse.steps_per_epoch;
      opt.init_scale = cfg.ellipse.init_scale;
      const auto result = mfl::resnet::train(ds, mfl::harness::architecture(cfg), cfg.method,
                                             cfg.hp, cfg.seed, opt);
      std::filesystem::create_directories(cfg.out_dir);
      const std::filesystem::path dir(cfg.out_dir);
      mfl::write_file((dir / "loss.csv").string(), mfl::harness::loss_csv(result.curve));
      mfl::write_file((dir / "params.txt").string(), mfl::harness::params_txt(result.net));
      mfl::write_file((dir / "config.txt").string(), mfl::harness::serialize(cfg));
      return kExitOk;
    }
    if (*gexp) {
      gx_arch.scheme = mfl::resnet::parse_scheme(gx_scheme);
      const auto net = mfl::harness::parse_params_txt(mfl::read_file(gx_params), gx_arch);
      mfl::write_file(gx_out, mfl::harness::grid_csv(mfl::resnet::probability_grid(
                                  net, {gx_xlo, gx_xhi}, {gx_ylo, gx_yhi}, gx_res)));
      return kExitOk;
    }
    if (*pre_list) {
      for (const auto& p : mfl::harness::presets()) std::cout << p.name << "\n";
      return kExitOk;
    }
    if (*pre_show) {
      const auto* p = mfl::harness::find_preset(pre_name);
      if (!p) throw ConfigError("unknown preset: " + pre_name);
      std::cout << p->text;
      return kExitOk;
    }
  } catch (const mfl::NumericalAbort& e) {
    std::cerr << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitOk;
}
