#include "bps/suff_stats.hpp"

#include <cmath>
#include <sstream>

namespace bps {

SuffStats SuffStats::zeros(std::size_t radius) {
  SuffStats s;
  const auto n = static_cast<Eigen::Index>(radius + 1);
  s.t1 = Eigen::MatrixXd::Zero(n, n);
  s.t2 = Eigen::VectorXd::Zero(n);
  return s;
}

std::size_t SuffStats::flat_size(std::size_t radius) {
  const std::size_t n = radius + 1;
  return n * n + n + 3;
}

Eigen::VectorXd SuffStats::to_flat() const {
  const auto n = t2.size();
  Eigen::VectorXd flat(n * n + n + 3);
  Eigen::Index k = 0;
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index q = 0; q < n; ++q) flat[k++] = t1(r, q);
  for (Eigen::Index r = 0; r < n; ++r) flat[k++] = t2[r];
  flat[k++] = t3;
  flat[k++] = t3_first;
  flat[k++] = t4;
  return flat;
}

SuffStats SuffStats::from_flat(const Eigen::VectorXd& flat, std::size_t radius) {
  if (static_cast<std::size_t>(flat.size()) != flat_size(radius))
    throw ConfigError("flat sufficient-statistic vector has the wrong length");
  SuffStats s = zeros(radius);
  const auto n = static_cast<Eigen::Index>(radius + 1);
  Eigen::Index k = 0;
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index q = 0; q < n; ++q) s.t1(r, q) = flat[k++];
  s.t1 = 0.5 * (s.t1 + s.t1.transpose()).eval();
  for (Eigen::Index r = 0; r < n; ++r) s.t2[r] = flat[k++];
  s.t3 = flat[k++];
  s.t3_first = flat[k++];
  s.t4 = flat[k++];
  return s;
}

double sum_of_squares(const ParticleMatrix& y) { return y.squaredNorm(); }

Eigen::VectorXd psi_map(const ModelParams& theta, const SuffStats& stats, double y_sq,
                        std::size_t V, std::size_t T) {
  const Eigen::VectorXd& a = theta.a;
  const auto nb = a.size();
  if (stats.t2.size() != nb) throw ConfigError("statistics and parameters disagree on radius");
  const double inv_var_x = std::exp(-2.0 * theta.log_sigma_x);
  const double inv_var_y = std::exp(-2.0 * theta.log_sigma_y);
  const double dV = static_cast<double>(V);
  const double dT = static_cast<double>(T);

  Eigen::VectorXd psi(nb + 2);
  psi.head(nb) = inv_var_x * (stats.t2 - stats.t1 * a);
  psi[nb] = inv_var_x * (stats.t3 - stats.t3_first - 2.0 * a.dot(stats.t2) + a.dot(stats.t1 * a)) -
            dV * (dT - 1.0);
  psi[nb + 1] = inv_var_y * (stats.t3 - 2.0 * stats.t4 + y_sq) - dV * dT;
  return psi;
}

ModelParams lambda_map(const SuffStats& stats, double y_sq, std::size_t V, std::size_t T) {
  if (T < 2) throw NumericalError("EM update needs T >= 2");
  const Eigen::MatrixXd t1 = 0.5 * (stats.t1 + stats.t1.transpose());
  Eigen::LLT<Eigen::MatrixXd> llt(t1);
  if (llt.info() != Eigen::Success) {
    const double jitter0 = 1e-10 * std::abs(t1.trace()) / static_cast<double>(t1.rows());
    bool ok = false;
    double jitter = jitter0;
    for (int attempt = 0; attempt < 3 && !ok; ++attempt, jitter *= 10.0) {
      llt.compute(t1 + jitter * Eigen::MatrixXd::Identity(t1.rows(), t1.cols()));
      ok = llt.info() == Eigen::Success;
    }
    if (!ok) {
      std::ostringstream msg;
      msg << "EM update: T^(1) is not positive definite:\n" << t1;
      throw NumericalError(msg.str());
    }
  }
  ModelParams out;
  out.a = llt.solve(stats.t2);
  const double quad = stats.t2.dot(out.a);
  const double arg_x = (stats.t3 - stats.t3_first - quad) / (static_cast<double>(V) * (T - 1.0));
  const double arg_y = (stats.t3 - 2.0 * stats.t4 + y_sq) / (static_cast<double>(V) * T);
  if (!(arg_x > 0.0) || !std::isfinite(arg_x))
    throw NumericalError("EM update: sigma_X^2 estimate not positive (" + std::to_string(arg_x) + ")");
  if (!(arg_y > 0.0) || !std::isfinite(arg_y))
    throw NumericalError("EM update: sigma_Y^2 estimate not positive (" + std::to_string(arg_y) + ")");
  out.log_sigma_x = 0.5 * std::log(arg_x);
  out.log_sigma_y = 0.5 * std::log(arg_y);
  return out;
}

}  // namespace bps
