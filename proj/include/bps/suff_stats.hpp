#pragma once

#include <cstddef>

#include <Eigen/Dense>

#include "bps/spatial_model.hpp"

namespace bps {

/**
 * Smoothed sufficient statistics of the linear-Gaussian lattice model.
 *
 *   t1(r, q)  = sum_{t<T} sum_v E[ (sum_{u in B_q(v)} X_{t,u}) (sum_{w in B_r(v)} X_{t,w}) ]
 *   t2(r)     = sum_{t<T} sum_v E[ X_{t+1,v} sum_{u in B_r(v)} X_{t,u} ]
 *   t3        = sum_{t,v} E[X_{t,v}^2]
 *   t3_first  = sum_v E[X_{1,v}^2]
 *   t4        = sum_{t,v} E[X_{t,v}] y_{t,v}
 */
struct SuffStats {
  Eigen::MatrixXd t1;
  Eigen::VectorXd t2;
  double t3 = 0.0;
  double t3_first = 0.0;
  double t4 = 0.0;

  static SuffStats zeros(std::size_t radius);
  std::size_t radius() const { return static_cast<std::size_t>(t2.size()) - 1; }

  /// Flat layout: t1 row-major, t2, t3, t3_first, t4.
  static std::size_t flat_size(std::size_t radius);
  Eigen::VectorXd to_flat() const;
  /// Inverse of to_flat; t1 is symmetrised.
  static SuffStats from_flat(const Eigen::VectorXd& flat, std::size_t radius);
};

/// sum_{t,v} y_{t,v}^2 over a T x V observation matrix.
double sum_of_squares(const ParticleMatrix& y);

/**
 * Score as a function of the sufficient statistics:
 *   Psi_{0:b}  = e^{-2 theta_{b+1}} (t2 - t1 a)
 *   Psi_{b+1}  = e^{-2 theta_{b+1}} (t3 - t3_first - 2 a't2 + a't1 a) - V (T - 1)
 *   Psi_{b+2}  = e^{-2 theta_{b+2}} (t3 - 2 t4 + y^2) - V T
 */
Eigen::VectorXd psi_map(const ModelParams& theta, const SuffStats& stats, double y_sq,
                        std::size_t V, std::size_t T);

/**
 * Closed-form EM update (M-step) from the sufficient statistics.
 * Throws NumericalError if t1 is not invertible or a log argument is not positive.
 */
ModelParams lambda_map(const SuffStats& stats, double y_sq, std::size_t V, std::size_t T);

}  // namespace bps
