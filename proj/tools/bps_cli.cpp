#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "bps/harness.hpp"
#include "bps/parallel.hpp"

namespace {

enum ExitCode { kOk = 0, kConfig = 2, kNumerical = 3, kIo = 4 };

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::size_t threads = 1;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config, "JSON experiment config")->required();
  cmd->add_option("--seed", o.seed, "Override the config seed");
  cmd->add_option("--out", o.out, "Output CSV path (stdout when omitted)");
  cmd->add_option("--threads", o.threads, "Worker threads")->check(CLI::PositiveNumber);
}

bps::ExperimentConfig load(const CommonOptions& o) {
  bps::ExperimentConfig c = bps::load_config(o.config);
  if (o.seed) c.seed = *o.seed;
  bps::set_num_threads(o.threads);
  return c;
}

void emit(const CommonOptions& o, const std::string& content) {
  if (o.out.empty()) std::cout << content;
  else bps::write_file(o.out, content);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Blocked and standard particle smoothing for lattice state-space models"};
  app.require_subcommand(1);

  CommonOptions sim_o, smooth_o, est_o, oracle_o, sweep_o;
  auto* sim = app.add_subcommand("simulate", "Simulate one data set (t,v,x,y)");
  add_common(sim, sim_o);
  std::size_t sim_replicate = 0;
  sim->add_option("--replicate", sim_replicate, "Replicate index whose data to write");

  auto* smooth = app.add_subcommand("smooth", "Smoothing-error experiment at dimension V");
  add_common(smooth, smooth_o);

  auto* sweep = app.add_subcommand("sweep", "Smoothing-error experiment over V_values");
  add_common(sweep, sweep_o);

  auto* est = app.add_subcommand("estimate", "Parameter-estimation experiment");
  add_common(est, est_o);

  auto* oracle = app.add_subcommand("oracle", "Exact Kalman/RTS quantities");
  add_common(oracle, oracle_o);
  std::string query = "loglik";
  std::string data_path;
  oracle->add_option("--query", query, "loglik | means | suffstats | score | tilde | filter");
  oracle->add_option("--data", data_path, "Data CSV (t,v,x,y); simulated from the config otherwise");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    if (*sim) {
      const auto c = load(sim_o);
      const bps::LatticeModel model(bps::build_lattice(c.V, c.radius), c.theta_true);
      emit(sim_o, bps::data_csv(bps::simulate_data(model, c.T, bps::replicate_seed(c.seed, c.V, sim_replicate))));
    } else if (*smooth) {
      const auto c = load(smooth_o);
      emit(smooth_o, bps::results_csv(bps::run_smoothing_experiment(c, {c.V})));
    } else if (*sweep) {
      const auto c = load(sweep_o);
      const auto dims = c.V_values.empty() ? std::vector<std::size_t>{c.V} : c.V_values;
      emit(sweep_o, bps::results_csv(bps::run_smoothing_experiment(c, dims)));
    } else if (*est) {
      const auto c = load(est_o);
      emit(est_o, bps::traces_csv(bps::run_estimation_experiment(c), c.radius));
    } else if (*oracle) {
      const auto c = load(oracle_o);
      std::optional<bps::SimulatedData> data;
      if (!data_path.empty()) data = bps::parse_data_csv(bps::read_file(data_path));
      emit(oracle_o, bps::oracle_query(c, query, data));
    }
  } catch (const bps::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const bps::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kNumerical;
  } catch (const bps::IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kIo;
  }
  return kOk;
}
