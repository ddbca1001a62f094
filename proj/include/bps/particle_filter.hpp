#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bps/rng.hpp"
#include "bps/spatial_model.hpp"

namespace bps {

enum class ProposalKind { Bootstrap, LocallyOptimal };

/// Filter approximations: the first four are full-distribution variants, the
/// last four their marginal counterparts used by the blocked smoothers.
enum class FilterProviderKind {
  StandardPF,
  BpfSubsampled,
  IidExactFilter,
  IidTildeFilter,
  LocalWeightPF,
  BpfMarginal,
  IidExactMarginal,
  IidTildeMarginal,
};

std::string to_string(ProposalKind kind);
std::string to_string(FilterProviderKind kind);
ProposalKind parse_proposal(const std::string& name);
FilterProviderKind parse_filter_provider(const std::string& name);

/// Output of the standard or blocked particle filter.
struct ParticleCloud {
  std::vector<ParticleMatrix> states;       ///< per time, N x V
  std::vector<ParticleMatrix> log_weights;  ///< per time, N x V: log w_{t,v}^n
  /// ancestors[t - 1][n * num_blocks + k] = A_{t-1,K_k}^n, for t >= 1.
  std::vector<std::vector<std::size_t>> ancestors;
  std::vector<VertexSet> blocks;  ///< resampling blocks; {V} for the standard PF

  std::size_t num_times() const { return states.size(); }
  std::size_t num_particles() const { return states.empty() ? 0 : static_cast<std::size_t>(states[0].rows()); }
  std::size_t ancestor(std::size_t t, std::size_t n, std::size_t k) const {
    return ancestors[t - 1][n * blocks.size() + k];
  }

  /// log w_{t,K'}^n = sum_{v in K'} log w_{t,v}^n, summed in ascending vertex order.
  Eigen::VectorXd scope_log_weights(std::size_t t, std::span<const Vertex> scope) const;
  /// Global log-weights (scope = all vertices).
  Eigen::VectorXd global_log_weights(std::size_t t) const;

  /// sum_n W_{t,K'}^n f(X_t^n) for f given per particle; weights normalised on `scope`.
  double estimate(std::size_t t, std::span<const Vertex> scope, std::span<const double> f_values) const;

  /// sum_t log(N^{-1} sum_n w_t^n) with global weights.
  double log_normalizer() const;
};

/// Normalise log-weights into probabilities (log-sum-exp); throws on degeneracy.
Eigen::VectorXd normalize_log_weights(const Eigen::VectorXd& log_w, const std::string& context);
/// log-sum-exp normalised log-probabilities.
Eigen::VectorXd normalized_log_weights(const Eigen::VectorXd& log_w, const std::string& context);

/// Inverse CDF: first index whose cumulative sum exceeds u * total.
std::size_t sample_from_cumulative(std::span<const double> cumulative, double u);
/// Same, accumulating `probs` in index order first.
std::size_t sample_index(std::span<const double> probs, double u);
/// Running sums of `probs` in index order.
std::vector<double> cumulative_sum(std::span<const double> probs);

/// `count` IID categorical draws from normalised `weights` (multinomial resampling).
std::vector<std::size_t> resample_categorical(std::span<const double> weights, std::size_t count, Rng& rng);

/// Mean and variance of the prior for X_{t,v}: N(0, 1) at t = 0, else N(mu_v(z), sigma_X^2).
struct LocalPrior {
  double mean;
  double var;
};
LocalPrior local_prior(const LatticeModel& model, const double* z_prev, Vertex v, std::size_t t);

/**
 * log G_{t,v}(z_{N(v)}, x_v) = log p_v g_v / q_{t,v}. For the bootstrap proposal
 * this is log g_v(x_v, y); for the locally optimal proposal the predictive
 * density log N(y; prior mean, prior var + sigma_Y^2). z_prev may be null at t = 0.
 */
double local_weight(const LatticeModel& model, ProposalKind proposal, const double* z_prev, double x_v,
                    double y_tv, Vertex v, std::size_t t);

/// Draw from q_{t,v} proportional to p_v g_v.
double propose_locally_optimal(const LatticeModel& model, const double* z_prev, double y_tv, Vertex v,
                               std::size_t t, Rng& rng);

/// Standard particle filter with multinomial resampling at every step.
ParticleCloud run_pf(const LatticeModel& model, const ParticleMatrix& y, std::size_t N,
                     ProposalKind proposal, std::uint64_t seed);

/// Blocked particle filter: each block resampled independently with its own weights.
ParticleCloud run_bpf(const LatticeModel& model, const BlockPartition& partition,
                      const ParticleMatrix& y, std::size_t N, ProposalKind proposal,
                      std::uint64_t seed);

/**
 * Weighted samples approximating the filter (or its marginals) at each time.
 */
class FilterApproximation {
public:
  enum class WeightMode { Uniform, Global, Local };

  FilterApproximation(FilterProviderKind kind, WeightMode mode, std::vector<ParticleMatrix> states,
                      std::vector<ParticleMatrix> log_weights);

  FilterProviderKind kind() const { return kind_; }
  WeightMode weight_mode() const { return mode_; }
  std::size_t num_times() const { return states_.size(); }
  std::size_t num_particles() const { return static_cast<std::size_t>(states_.at(0).rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(states_.at(0).cols()); }
  const ParticleMatrix& states(std::size_t t) const { return states_[t]; }
  const std::vector<ParticleMatrix>& all_states() const { return states_; }
  const std::vector<ParticleMatrix>& all_log_weights() const { return log_weights_; }

  /// Normalised log-weights log W_{t,K'}^n for the marginal on `scope`.
  /// Global mode ignores the scope; uniform mode returns -log N.
  Eigen::VectorXd log_weights(std::size_t t, std::span<const Vertex> scope) const;
  Eigen::VectorXd weights(std::size_t t, std::span<const Vertex> scope) const;

  /// Copy with states[t](n, v) replaced; for locality tests.
  FilterApproximation with_states(std::vector<ParticleMatrix> states) const;

private:
  FilterProviderKind kind_;
  WeightMode mode_;
  std::vector<ParticleMatrix> states_;
  std::vector<ParticleMatrix> log_weights_;
};

/// Subsample N points from the blocking approximation: block coordinates drawn
/// independently from each block's categorical distribution.
std::vector<ParticleMatrix> subsample_blocked(const ParticleCloud& cloud, std::uint64_t seed);

FilterApproximation make_filter_provider(FilterProviderKind kind, const LatticeModel& model,
                                         const BlockPartition& partition, const ParticleMatrix& y,
                                         std::size_t N, ProposalKind proposal, std::uint64_t seed);

/// Wrap an existing cloud. StandardPF uses global weights, LocalWeightPF and
/// BpfMarginal local ones; BpfSubsampled draws its subsample with `seed`.
FilterApproximation provider_from_cloud(FilterProviderKind kind, const ParticleCloud& cloud,
                                        std::uint64_t seed = 0);

bool is_marginal_kind(FilterProviderKind kind);

}  // namespace bps
