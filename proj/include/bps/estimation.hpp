#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bps/functionals.hpp"
#include "bps/particle_filter.hpp"
#include "bps/spatial_model.hpp"
#include "bps/suff_stats.hpp"

namespace bps {

enum class SmootherKind { Exact, StandardFS, StandardBS, BlockedFS, BlockedBS };

/// Filter approximation family; resolved to a full or marginal provider per smoother.
enum class FilterFamily { PF, BPF, IID, IIDTilde };

std::string to_string(SmootherKind kind);
std::string to_string(FilterFamily family);
SmootherKind parse_smoother(const std::string& name);
FilterFamily parse_filter_family(const std::string& name);

bool is_blocked(SmootherKind kind);
/// Standard smoothers get full-distribution providers, blocked ones marginal providers.
FilterProviderKind provider_for(SmootherKind smoother, FilterFamily family);

struct EstimatorConfig {
  SmootherKind smoother = SmootherKind::BlockedBS;
  FilterFamily filter = FilterFamily::BPF;
  ProposalKind proposal = ProposalKind::LocallyOptimal;
  std::size_t N = 200;
  std::size_t M = 50;
  std::size_t block_size = 3;
  std::size_t enlargement = 2;
};

/// Partition implied by the config (the whole lattice for standard smoothers' filters
/// still uses contiguous blocks for BPF and tilde providers).
BlockPartition make_partition(const SpatialGraph& graph, const EstimatorConfig& config);

/**
 * Particle estimate of sum_{t,K} E[s_{t,K}] under `model` given y: builds the
 * provider, runs the configured smoother, returns the total. Not valid for Exact.
 */
Eigen::VectorXd particle_estimate(const LatticeModel& model, const ParticleMatrix& y,
                                  const EstimatorConfig& config, const AdditiveFunctional& functional,
                                  std::uint64_t seed);

/// Score at theta for iteration p (1-based).
using ScoreEstimator = std::function<Eigen::VectorXd(const ModelParams& theta, std::size_t p)>;
/// Smoothed sufficient statistics at theta for iteration p.
using StatsEstimator = std::function<SuffStats(const ModelParams& theta, std::size_t p)>;

/// Exact (Kalman/RTS) score, or the particle score under `config` with iteration-keyed seeds.
ScoreEstimator make_score_estimator(const SpatialGraph& graph, const ParticleMatrix& y,
                                    const EstimatorConfig& config, std::uint64_t seed);
StatsEstimator make_stats_estimator(const SpatialGraph& graph, const ParticleMatrix& y,
                                    const EstimatorConfig& config, std::uint64_t seed);

struct EstimationTrace {
  std::vector<ModelParams> iterates;       ///< theta[1..P+1]
  std::vector<Eigen::VectorXd> estimates;  ///< score or flattened statistics used at each step
  std::vector<double> gradient_norms;      ///< gradient ascent only
  std::vector<double> runtime_ms;
};

struct AscentOptions {
  std::size_t iterations = 200;
  double step_exponent = 0.8;
  /// Stop once the estimated gradient norm falls below this.
  std::optional<double> stop_threshold;
};

/// theta[p+1] = theta[p] + p^{-0.8} g / ||g||_2; a zero gradient leaves theta unchanged.
EstimationTrace gradient_ascent(const ModelParams& theta_init, const ScoreEstimator& score,
                                const AscentOptions& options);

/// theta[p+1] = Lambda(stats at theta[p]).
EstimationTrace em_loop(const ModelParams& theta_init, const StatsEstimator& stats, std::size_t iterations,
                        double y_sq, std::size_t V, std::size_t T);

/// Uniform draw from a in [0, 0.8]^(b+1), log sigma in [-0.7, 0.7]^2.
ModelParams random_theta(std::size_t radius, std::uint64_t seed);

}  // namespace bps
