#include <optional>
#include <string>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "bps/estimation.hpp"
#include "bps/exact_oracle.hpp"
#include "bps/harness.hpp"
#include "bps/parallel.hpp"
#include "bps/particle_smoother.hpp"

namespace py = pybind11;
using namespace bps;

namespace {

LatticeModel model_from(const Eigen::VectorXd& theta, std::size_t V) {
  if (theta.size() < 3) throw ConfigError("theta needs at least 3 entries (a_0, log sigma_x, log sigma_y)");
  const ModelParams p = ModelParams::from_vector(theta);
  return LatticeModel(build_lattice(V, p.radius()), p);
}

ExperimentConfig config_from(const std::string& json_text, std::optional<std::uint64_t> seed) {
  ExperimentConfig c = parse_config(json_text);
  if (seed) c.seed = *seed;
  return c;
}

}  // namespace

PYBIND11_MODULE(_bps, m) {
  m.doc() = "Blocked and standard particle smoothing for lattice state-space models";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  m.def("set_num_threads", &set_num_threads, py::arg("n"));

  m.def(
      "simulate",
      [](const Eigen::VectorXd& theta, std::size_t V, std::size_t T, std::uint64_t seed) {
        const SimulatedData d = simulate_data(model_from(theta, V), T, seed);
        return py::make_tuple(Eigen::MatrixXd(d.x), Eigen::MatrixXd(d.y));
      },
      py::arg("theta"), py::arg("V"), py::arg("T"), py::arg("seed"), "Returns (x, y), each T x V.");

  m.def(
      "kalman_loglik",
      [](const Eigen::VectorXd& theta, const Eigen::MatrixXd& y) {
        return kalman_filter(model_from(theta, y.cols()), ParticleMatrix(y)).loglik;
      },
      py::arg("theta"), py::arg("y"));

  m.def(
      "smoothed_means",
      [](const Eigen::VectorXd& theta, const Eigen::MatrixXd& y) {
        const SmoothingMoments s = rts_smoother(model_from(theta, y.cols()), ParticleMatrix(y));
        Eigen::MatrixXd out(y.rows(), y.cols());
        for (Eigen::Index t = 0; t < y.rows(); ++t) out.row(t) = s.means[t].transpose();
        return out;
      },
      py::arg("theta"), py::arg("y"));

  m.def(
      "exact_score",
      [](const Eigen::VectorXd& theta, const Eigen::MatrixXd& y) {
        return Eigen::VectorXd(exact_score(model_from(theta, y.cols()), ParticleMatrix(y)));
      },
      py::arg("theta"), py::arg("y"));

  m.def(
      "exact_suff_stats",
      [](const Eigen::VectorXd& theta, const Eigen::MatrixXd& y) {
        return Eigen::VectorXd(exact_suff_stats(model_from(theta, y.cols()), ParticleMatrix(y)).to_flat());
      },
      py::arg("theta"), py::arg("y"));

  m.def(
      "smooth",
      [](const Eigen::VectorXd& theta, const Eigen::MatrixXd& y, const std::string& smoother,
         const std::string& filter, const std::string& functional, std::size_t N, std::size_t M,
         std::size_t block_size, std::size_t enlargement, const std::string& proposal, std::uint64_t seed) {
        const LatticeModel model = model_from(theta, y.cols());
        const ParticleMatrix obs(y);
        EstimatorConfig cfg;
        cfg.smoother = parse_smoother(smoother);
        cfg.filter = parse_filter_family(filter);
        cfg.proposal = parse_proposal(proposal);
        cfg.N = N;
        cfg.M = M;
        cfg.block_size = block_size;
        cfg.enlargement = enlargement;
        FunctionalPtr f;
        if (functional == "suffstats") f = std::make_shared<SuffStatFunctional>(model.graph(), obs);
        else if (functional == "score") f = std::make_shared<ScoreFunctional>(model, obs);
        else if (functional.rfind("cross_lag_", 0) == 0)
          f = std::make_shared<CrossLagFunctional>(model.graph(), std::stoul(functional.substr(10)));
        else throw ConfigError("functional must be suffstats, score or cross_lag_<r>");
        py::gil_scoped_release release;
        return Eigen::VectorXd(particle_estimate(model, obs, cfg, *f, seed));
      },
      py::arg("theta"), py::arg("y"), py::arg("smoother") = "blk_bs", py::arg("filter") = "bpf",
      py::arg("functional") = "cross_lag_1", py::arg("N") = 200, py::arg("M") = 50, py::arg("block_size") = 3,
      py::arg("enlargement") = 1, py::arg("proposal") = "locally_optimal", py::arg("seed") = 1,
      "Particle estimate of the smoothed additive functional.");

  m.def(
      "config_hash", [](const std::string& json_text) { return parse_config(json_text).hash(); },
      py::arg("config_json"));

  m.def(
      "smoothing_experiment",
      [](const std::string& json_text, std::optional<std::uint64_t> seed) {
        const ExperimentConfig c = config_from(json_text, seed);
        const auto dims = c.V_values.empty() ? std::vector<std::size_t>{c.V} : c.V_values;
        py::gil_scoped_release release;
        return results_csv(run_smoothing_experiment(c, dims));
      },
      py::arg("config_json"), py::arg("seed") = py::none(), "Results CSV text.");

  m.def(
      "estimation_experiment",
      [](const std::string& json_text, std::optional<std::uint64_t> seed) {
        const ExperimentConfig c = config_from(json_text, seed);
        py::gil_scoped_release release;
        return traces_csv(run_estimation_experiment(c), c.radius);
      },
      py::arg("config_json"), py::arg("seed") = py::none(), "Traces CSV text.");

  m.def(
      "oracle",
      [](const std::string& json_text, const std::string& query, std::optional<std::uint64_t> seed) {
        return oracle_query(config_from(json_text, seed), query, std::nullopt);
      },
      py::arg("config_json"), py::arg("query") = "loglik", py::arg("seed") = py::none());
}
