#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bps/estimation.hpp"
#include "bps/spatial_model.hpp"

namespace bps {

enum class FunctionalKind { CrossLag, SuffStats, Score, ComponentMean };

std::string to_string(FunctionalKind kind);
FunctionalKind parse_functional(const std::string& name);

struct MethodSpec {
  SmootherKind smoother;
  FilterFamily filter;
};

enum class Algorithm { Gradient, EM };
std::string to_string(Algorithm algorithm);
Algorithm parse_algorithm(const std::string& name);

/// JSON experiment configuration; see README for the schema.
struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::size_t V = 10;
  std::vector<std::size_t> V_values;  ///< sweep dimensions; empty means {V}
  std::size_t T = 20;
  std::size_t N = 500;
  std::size_t M = 100;
  std::size_t radius = 1;
  std::size_t block_size = 3;
  std::size_t enlargement = 1;
  ProposalKind proposal = ProposalKind::LocallyOptimal;
  ModelParams theta_true;
  std::optional<ModelParams> theta_init;  ///< nullopt: random per run
  std::size_t replicates = 10;
  std::size_t iterations = 200;
  std::optional<double> stop_threshold;
  std::vector<MethodSpec> methods;
  std::vector<Algorithm> algorithms;
  FunctionalKind functional = FunctionalKind::CrossLag;
  std::size_t functional_ring = 1;
  std::optional<std::size_t> component_vertex;  ///< default: all vertices
  std::optional<std::size_t> component_time;
  bool normalize = true;  ///< report S_T / V
  bool record_runtime = false;

  ExperimentConfig();

  /// Throws ConfigError on unknown keys, bad types or invalid values.
  static ExperimentConfig from_json(const nlohmann::json& j);
  /// Canonical form with every field populated.
  nlohmann::json to_json() const;
  /// FNV-1a of the canonical JSON, 16 hex digits.
  std::string hash() const;

  EstimatorConfig estimator(const MethodSpec& method) const;
};

ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config(const std::string& text);

/// Shortest round-trip decimal.
std::string format_double(double x);

struct SimulatedData {
  ParticleMatrix x;  ///< T x V
  ParticleMatrix y;
};

/// Exact forward simulation; serial and keyed by `seed` only.
SimulatedData simulate_data(const LatticeModel& model, std::size_t T, std::uint64_t seed);
/// Seed of replicate r at dimension V.
std::uint64_t replicate_seed(std::uint64_t seed, std::size_t V, std::size_t r);

std::string data_csv(const SimulatedData& data);
/// Reads t,v,x,y rows; x may be empty.
SimulatedData parse_data_csv(const std::string& text);

struct ResultRow {
  std::size_t replicate = 0;
  std::size_t V = 0;
  std::string method;
  std::string filter;
  std::size_t block_size = 0;
  std::size_t i = 0;
  std::size_t N = 0;
  std::size_t M = 0;
  std::string functional_id;
  std::optional<double> estimate;
  std::optional<double> exact_value;
  std::optional<double> squared_error;
  std::optional<double> runtime_ms;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::string error;
};

/// Smoothing-error experiment over `dims` (config V_values or V when empty).
std::vector<ResultRow> run_smoothing_experiment(const ExperimentConfig& config,
                                                const std::vector<std::size_t>& dims);
std::string results_csv(const std::vector<ResultRow>& rows);

struct TraceRow {
  std::size_t p = 0;
  ModelParams theta;
  Eigen::VectorXd err;
  std::string method;
  std::size_t run = 0;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::string error;
};

std::vector<TraceRow> run_estimation_experiment(const ExperimentConfig& config);
std::string traces_csv(const std::vector<TraceRow>& rows, std::size_t radius);

/// Functional object and exact value for the configured functional.
FunctionalPtr make_functional(const ExperimentConfig& config, const LatticeModel& model,
                              const ParticleMatrix& y);
Eigen::VectorXd exact_functional_value(const ExperimentConfig& config, const LatticeModel& model,
                                       const ParticleMatrix& y);
std::vector<std::string> functional_component_ids(const ExperimentConfig& config, std::size_t V);

/// Oracle queries: loglik, means, suffstats, score, tilde. Returns CSV text.
std::string oracle_query(const ExperimentConfig& config, const std::string& query,
                         const std::optional<SimulatedData>& data);

void write_file(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

}  // namespace bps
