#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "bps/functionals.hpp"
#include "bps/particle_filter.hpp"
#include "bps/spatial_model.hpp"

namespace bps {

/**
 * Backward kernel row: probs[m] proportional to W^m p(X^m, x), computed in the
 * log domain. `log_weights` are normalised log-weights of the time-t particles.
 */
Eigen::VectorXd backward_kernel_row(const LatticeModel& model, const ParticleMatrix& particles,
                                    const Eigen::VectorXd& log_weights, std::span<const double> x);

/**
 * Blocked backward kernel row: probs[m] proportional to
 * W^m exp(sum_{v in target} log p_v(X^m_{N(v)}, x_v)). `x` is a full-length
 * state; only coordinates in `target` are read.
 */
Eigen::VectorXd blocked_backward_kernel_row(const LatticeModel& model, const ParticleMatrix& particles,
                                            const Eigen::VectorXd& log_weights,
                                            std::span<const double> x, std::span<const Vertex> target);

struct SmoothingEstimate {
  Eigen::VectorXd total;                 ///< sum over blocks
  std::vector<Eigen::VectorXd> per_block;  ///< one entry for standard smoothers
};

struct BackwardSamplingEstimate {
  Eigen::VectorXd total;
  std::vector<Eigen::VectorXd> per_block;
  /// paths[k][m][t]: index of the time-t particle on path m of block k.
  std::vector<std::vector<std::vector<std::size_t>>> paths;
};

/// Forward smoothing with full backward kernels; returns sum_n W_T^n alpha_T^n.
SmoothingEstimate forward_smoothing(const LatticeModel& model, const FilterApproximation& filter,
                                    const AdditiveFunctional& functional);

/// Backward sampling of M paths; paths drawn with streams keyed by (block 0, m).
BackwardSamplingEstimate backward_sampling(const LatticeModel& model, const FilterApproximation& filter,
                                           const AdditiveFunctional& functional, std::size_t M,
                                           std::uint64_t seed);

/// Blocked forward smoothing: one recursion per block on its enlarged block.
SmoothingEstimate blocked_forward_smoothing(const LatticeModel& model, const BlockPartition& partition,
                                            const FilterApproximation& filter,
                                            const AdditiveFunctional& functional);

/// Blocked backward sampling; block k's paths use streams keyed by (k, m).
BackwardSamplingEstimate blocked_backward_sampling(const LatticeModel& model,
                                                   const BlockPartition& partition,
                                                   const FilterApproximation& filter,
                                                   const AdditiveFunctional& functional, std::size_t M,
                                                   std::uint64_t seed);

}  // namespace bps
