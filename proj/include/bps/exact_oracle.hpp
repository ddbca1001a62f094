#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "bps/rng.hpp"
#include "bps/spatial_model.hpp"
#include "bps/suff_stats.hpp"

namespace bps {

struct GaussianBelief {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

struct KalmanResult {
  std::vector<GaussianBelief> filtered;   ///< pi_t, t = 1..T
  std::vector<GaussianBelief> predicted;  ///< p(x_t | y_{1:t-1}); predicted[0] is the prior
  double loglik = 0.0;
};

struct SmoothingMoments {
  std::vector<Eigen::VectorXd> means;
  std::vector<Eigen::MatrixXd> covs;
  /// lag1[t] = Cov(X_{t+1}, X_t | y_{1:T}), t = 0..T-2 (0-based).
  std::vector<Eigen::MatrixXd> lag1;
  double loglik = 0.0;
};

/**
 * Cholesky factor of a symmetrised copy of `cov`. On failure adds
 * 1e-10 * trace / V to the diagonal (growing tenfold per retry, three retries).
 */
Eigen::MatrixXd robust_cholesky(const Eigen::MatrixXd& cov);

/// Kalman filter for the lattice model; observations are T x V.
KalmanResult kalman_filter(const LatticeModel& model, const ParticleMatrix& y);

/// RTS smoother with lag-one cross-covariances from the smoother gains.
SmoothingMoments rts_smoother(const LatticeModel& model, const ParticleMatrix& y);

SuffStats exact_suff_stats(const LatticeModel& model, const ParticleMatrix& y);
SuffStats suff_stats_from_moments(const LatticeModel& model, const SmoothingMoments& moments,
                                  const ParticleMatrix& y);

/// Gradient of the exact log-likelihood w.r.t. theta (length b + 3).
Eigen::VectorXd exact_score(const LatticeModel& model, const ParticleMatrix& y);

/// n IID draws (n x V) from N(belief.mean, belief.cov).
ParticleMatrix sample_gaussian(const GaussianBelief& belief, std::size_t n, Rng& rng);

/// n IID draws from the exact filter pi_t (t is 0-based, uses y_{1:t+1}).
ParticleMatrix sample_exact_filter(const LatticeModel& model, const ParticleMatrix& y,
                                   std::size_t t, std::size_t n, Rng& rng);

/**
 * Gaussian filter of the blocked ("tilde") model: each block K evolves as
 *   z_K | x_K ~ N(A_KK x_K + A_KD mu_D, sigma_X^2 I + A_KD Sigma_DD A_KD')
 * with D = N(K) \ K integrated against the previous tilde-filter marginal.
 * The first belief equals the exact filter at time 1.
 */
std::vector<GaussianBelief> tilde_filter(const LatticeModel& model, const BlockPartition& partition,
                                         const ParticleMatrix& y);

}  // namespace bps
