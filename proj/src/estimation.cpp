#include "bps/estimation.hpp"

#include <chrono>
#include <cmath>

#include "bps/exact_oracle.hpp"
#include "bps/particle_smoother.hpp"

namespace bps {

std::string to_string(SmootherKind kind) {
  switch (kind) {
    case SmootherKind::Exact: return "exact";
    case SmootherKind::StandardFS: return "std_fs";
    case SmootherKind::StandardBS: return "std_bs";
    case SmootherKind::BlockedFS: return "blk_fs";
    case SmootherKind::BlockedBS: return "blk_bs";
  }
  return "?";
}

std::string to_string(FilterFamily family) {
  switch (family) {
    case FilterFamily::PF: return "pf";
    case FilterFamily::BPF: return "bpf";
    case FilterFamily::IID: return "iid";
    case FilterFamily::IIDTilde: return "iid_tilde";
  }
  return "?";
}

SmootherKind parse_smoother(const std::string& name) {
  for (auto k : {SmootherKind::Exact, SmootherKind::StandardFS, SmootherKind::StandardBS,
                 SmootherKind::BlockedFS, SmootherKind::BlockedBS})
    if (to_string(k) == name) return k;
  throw ConfigError("unknown smoother '" + name + "' (expected exact, std_fs, std_bs, blk_fs or blk_bs)");
}

FilterFamily parse_filter_family(const std::string& name) {
  for (auto f : {FilterFamily::PF, FilterFamily::BPF, FilterFamily::IID, FilterFamily::IIDTilde})
    if (to_string(f) == name) return f;
  throw ConfigError("unknown filter '" + name + "' (expected pf, bpf, iid or iid_tilde)");
}

bool is_blocked(SmootherKind kind) {
  return kind == SmootherKind::BlockedFS || kind == SmootherKind::BlockedBS;
}

FilterProviderKind provider_for(SmootherKind smoother, FilterFamily family) {
  const bool marginal = is_blocked(smoother);
  switch (family) {
    case FilterFamily::PF: return marginal ? FilterProviderKind::LocalWeightPF : FilterProviderKind::StandardPF;
    case FilterFamily::BPF: return marginal ? FilterProviderKind::BpfMarginal : FilterProviderKind::BpfSubsampled;
    case FilterFamily::IID: return marginal ? FilterProviderKind::IidExactMarginal : FilterProviderKind::IidExactFilter;
    case FilterFamily::IIDTilde:
      return marginal ? FilterProviderKind::IidTildeMarginal : FilterProviderKind::IidTildeFilter;
  }
  throw ConfigError("unknown filter family");
}

BlockPartition make_partition(const SpatialGraph& graph, const EstimatorConfig& config) {
  if (config.block_size == 0) throw ConfigError("block_size must be positive");
  return BlockPartition::contiguous(graph, config.block_size, config.enlargement);
}

Eigen::VectorXd particle_estimate(const LatticeModel& model, const ParticleMatrix& y,
                                  const EstimatorConfig& config, const AdditiveFunctional& functional,
                                  std::uint64_t seed) {
  if (config.smoother == SmootherKind::Exact) throw ConfigError("exact smoother has no particle estimate");
  if (config.N == 0) throw ConfigError("N must be positive");
  const BlockPartition partition = make_partition(model.graph(), config);
  const FilterApproximation filter =
      make_filter_provider(provider_for(config.smoother, config.filter), model, partition, y, config.N,
                           config.proposal, seed);
  const std::uint64_t bs_seed = derive_seed(seed, StreamTag::BackwardSample, {0});
  switch (config.smoother) {
    case SmootherKind::StandardFS: return forward_smoothing(model, filter, functional).total;
    case SmootherKind::StandardBS: return backward_sampling(model, filter, functional, config.M, bs_seed).total;
    case SmootherKind::BlockedFS: return blocked_forward_smoothing(model, partition, filter, functional).total;
    case SmootherKind::BlockedBS:
      return blocked_backward_sampling(model, partition, filter, functional, config.M, bs_seed).total;
    case SmootherKind::Exact: break;
  }
  throw ConfigError("unsupported smoother");
}

ScoreEstimator make_score_estimator(const SpatialGraph& graph, const ParticleMatrix& y,
                                    const EstimatorConfig& config, std::uint64_t seed) {
  return [graph, y, config, seed](const ModelParams& theta, std::size_t p) -> Eigen::VectorXd {
    const LatticeModel model(graph, theta);
    if (config.smoother == SmootherKind::Exact) return exact_score(model, y);
    const ScoreFunctional f(model, y);
    return particle_estimate(model, y, config, f, derive_seed(seed, StreamTag::Iteration, {p}));
  };
}

StatsEstimator make_stats_estimator(const SpatialGraph& graph, const ParticleMatrix& y,
                                    const EstimatorConfig& config, std::uint64_t seed) {
  return [graph, y, config, seed](const ModelParams& theta, std::size_t p) -> SuffStats {
    const LatticeModel model(graph, theta);
    if (config.smoother == SmootherKind::Exact) return exact_suff_stats(model, y);
    const SuffStatFunctional f(graph, y);
    return SuffStats::from_flat(particle_estimate(model, y, config, f, derive_seed(seed, StreamTag::Iteration, {p})),
                                graph.radius());
  };
}

namespace {

double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

EstimationTrace gradient_ascent(const ModelParams& theta_init, const ScoreEstimator& score,
                                const AscentOptions& options) {
  EstimationTrace trace;
  trace.iterates.push_back(theta_init);
  Eigen::VectorXd theta = theta_init.to_vector();
  for (std::size_t p = 1; p <= options.iterations; ++p) {
    const auto start = std::chrono::steady_clock::now();
    Eigen::VectorXd g;
    try {
      g = score(ModelParams::from_vector(theta), p);
    } catch (const NumericalError& e) {
      throw NumericalError("iteration " + std::to_string(p) + ": " + e.what());
    }
    if (!g.allFinite()) throw NumericalError("iteration " + std::to_string(p) + ": non-finite gradient estimate");
    const double norm = g.norm();
    if (norm > 0.0) theta += std::pow(static_cast<double>(p), -options.step_exponent) * g / norm;
    trace.estimates.push_back(g);
    trace.gradient_norms.push_back(norm);
    trace.iterates.push_back(ModelParams::from_vector(theta));
    trace.runtime_ms.push_back(elapsed_ms(start));
    if (options.stop_threshold && norm < *options.stop_threshold) break;
  }
  return trace;
}

EstimationTrace em_loop(const ModelParams& theta_init, const StatsEstimator& stats, std::size_t iterations,
                        double y_sq, std::size_t V, std::size_t T) {
  EstimationTrace trace;
  trace.iterates.push_back(theta_init);
  for (std::size_t p = 1; p <= iterations; ++p) {
    const auto start = std::chrono::steady_clock::now();
    try {
      const SuffStats s = stats(trace.iterates.back(), p);
      trace.estimates.push_back(s.to_flat());
      trace.iterates.push_back(lambda_map(s, y_sq, V, T));
    } catch (const NumericalError& e) {
      throw NumericalError("iteration " + std::to_string(p) + ": " + e.what());
    }
    trace.runtime_ms.push_back(elapsed_ms(start));
  }
  return trace;
}

ModelParams random_theta(std::size_t radius, std::uint64_t seed) {
  Rng rng(seed, StreamTag::ThetaInit, {});
  ModelParams p;
  p.a.resize(static_cast<Eigen::Index>(radius + 1));
  for (Eigen::Index r = 0; r < p.a.size(); ++r) p.a[r] = 0.8 * rng.uniform();
  p.log_sigma_x = -0.7 + 1.4 * rng.uniform();
  p.log_sigma_y = -0.7 + 1.4 * rng.uniform();
  return p;
}

}  // namespace bps
