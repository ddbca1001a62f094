#include "bps/exact_oracle.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace bps {

namespace {

Eigen::MatrixXd symmetrized(const Eigen::MatrixXd& c) { return 0.5 * (c + c.transpose()); }

void check_observations(const LatticeModel& model, const ParticleMatrix& y) {
  if (y.rows() == 0) throw ConfigError("need at least one observation");
  if (y.cols() != static_cast<Eigen::Index>(model.dim()))
    throw ConfigError("observation width " + std::to_string(y.cols()) + " does not match V = " +
                      std::to_string(model.dim()));
  if (!y.allFinite()) throw NumericalError("non-finite observation values");
}

/// Measurement update with H = I, R = var_y I; returns log N(y; m, P + R).
double update(GaussianBelief& belief, const Eigen::VectorXd& y, double var_y) {
  const auto V = belief.mean.size();
  Eigen::MatrixXd S = symmetrized(belief.cov);
  S.diagonal().array() += var_y;
  const Eigen::MatrixXd L = robust_cholesky(S);
  const Eigen::VectorXd innov = y - belief.mean;
  const Eigen::VectorXd w = L.triangularView<Eigen::Lower>().solve(innov);
  const double logdet = 2.0 * L.diagonal().array().log().sum();
  const double ll = -0.5 * (static_cast<double>(V) * std::log(2.0 * std::numbers::pi) + logdet +
                            w.squaredNorm());
  // gain = P S^{-1}
  const Eigen::MatrixXd PSinv =
      L.transpose().triangularView<Eigen::Upper>().solve(
          L.triangularView<Eigen::Lower>().solve(belief.cov.transpose()))
          .transpose();
  belief.mean += PSinv * innov;
  belief.cov = symmetrized(belief.cov - PSinv * belief.cov);
  return ll;
}

}  // namespace

Eigen::MatrixXd robust_cholesky(const Eigen::MatrixXd& cov) {
  const Eigen::MatrixXd c = symmetrized(cov);
  Eigen::LLT<Eigen::MatrixXd> llt(c);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  const double n = static_cast<double>(c.rows());
  double jitter = 1e-10 * std::abs(c.trace()) / n;
  if (jitter == 0.0) jitter = 1e-10;
  for (int attempt = 0; attempt < 3; ++attempt, jitter *= 10.0) {
    Eigen::MatrixXd cj = c;
    cj.diagonal().array() += jitter;
    llt.compute(cj);
    if (llt.info() == Eigen::Success) return llt.matrixL();
  }
  throw NumericalError("Cholesky factorisation failed after jitter");
}

KalmanResult kalman_filter(const LatticeModel& model, const ParticleMatrix& y) {
  check_observations(model, y);
  const auto V = static_cast<Eigen::Index>(model.dim());
  const Eigen::Index T = y.rows();
  const Eigen::MatrixXd A = model.transition_matrix();
  const double var_x = model.sigma_x() * model.sigma_x();
  const double var_y = model.sigma_y() * model.sigma_y();

  KalmanResult out;
  out.filtered.reserve(T);
  out.predicted.reserve(T);
  GaussianBelief belief{Eigen::VectorXd::Zero(V), Eigen::MatrixXd::Identity(V, V)};
  for (Eigen::Index t = 0; t < T; ++t) {
    if (t > 0) {
      belief.mean = A * belief.mean;
      belief.cov = symmetrized(A * belief.cov * A.transpose());
      belief.cov.diagonal().array() += var_x;
    }
    out.predicted.push_back(belief);
    out.loglik += update(belief, y.row(t).transpose(), var_y);
    out.filtered.push_back(belief);
  }
  return out;
}

SmoothingMoments rts_smoother(const LatticeModel& model, const ParticleMatrix& y) {
  const KalmanResult kf = kalman_filter(model, y);
  const std::size_t T = kf.filtered.size();
  const Eigen::MatrixXd A = model.transition_matrix();

  SmoothingMoments out;
  out.loglik = kf.loglik;
  out.means.resize(T);
  out.covs.resize(T);
  out.lag1.resize(T > 0 ? T - 1 : 0);
  out.means[T - 1] = kf.filtered[T - 1].mean;
  out.covs[T - 1] = kf.filtered[T - 1].cov;
  for (std::size_t k = T - 1; k-- > 0;) {
    const auto& f = kf.filtered[k];
    const auto& p = kf.predicted[k + 1];
    // G = P_f A' P_pred^{-1}
    const Eigen::MatrixXd L = robust_cholesky(p.cov);
    const Eigen::MatrixXd AP = A * f.cov;  // = (P_f A')'
    const Eigen::MatrixXd G =
        L.transpose().triangularView<Eigen::Upper>().solve(L.triangularView<Eigen::Lower>().solve(AP))
            .transpose();
    out.means[k] = f.mean + G * (out.means[k + 1] - p.mean);
    out.covs[k] = symmetrized(f.cov + G * (out.covs[k + 1] - p.cov) * G.transpose());
    out.lag1[k] = out.covs[k + 1] * G.transpose();
  }
  return out;
}

SuffStats suff_stats_from_moments(const LatticeModel& model, const SmoothingMoments& m,
                                  const ParticleMatrix& y) {
  const auto& graph = model.graph();
  const std::size_t V = model.dim();
  const std::size_t b = model.radius();
  const std::size_t T = m.means.size();
  SuffStats s = SuffStats::zeros(b);

  std::vector<std::vector<VertexSet>> rings(V, std::vector<VertexSet>(b + 1));
  for (Vertex v = 0; v < V; ++v)
    for (std::size_t r = 0; r <= b; ++r) rings[v][r] = graph.ring(v, r);

  for (std::size_t t = 0; t < T; ++t) {
    const Eigen::VectorXd& mu = m.means[t];
    const Eigen::MatrixXd& C = m.covs[t];
    for (Vertex v = 0; v < V; ++v) {
      const auto vi = static_cast<Eigen::Index>(v);
      const double second = C(vi, vi) + mu[vi] * mu[vi];
      s.t3 += second;
      if (t == 0) s.t3_first += second;
      s.t4 += mu[vi] * y(static_cast<Eigen::Index>(t), vi);
    }
    if (t + 1 == T) continue;
    const Eigen::VectorXd& mu_next = m.means[t + 1];
    const Eigen::MatrixXd& L = m.lag1[t];
    for (Vertex v = 0; v < V; ++v) {
      for (std::size_t r = 0; r <= b; ++r) {
        for (std::size_t q = 0; q <= b; ++q) {
          double acc = 0.0;
          for (Vertex u : rings[v][q])
            for (Vertex w : rings[v][r]) {
              const auto ui = static_cast<Eigen::Index>(u), wi = static_cast<Eigen::Index>(w);
              acc += C(ui, wi) + mu[ui] * mu[wi];
            }
          s.t1(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(q)) += acc;
        }
        double acc = 0.0;
        const auto vi = static_cast<Eigen::Index>(v);
        for (Vertex u : rings[v][r]) {
          const auto ui = static_cast<Eigen::Index>(u);
          acc += L(vi, ui) + mu_next[vi] * mu[ui];
        }
        s.t2[static_cast<Eigen::Index>(r)] += acc;
      }
    }
  }
  return s;
}

SuffStats exact_suff_stats(const LatticeModel& model, const ParticleMatrix& y) {
  return suff_stats_from_moments(model, rts_smoother(model, y), y);
}

Eigen::VectorXd exact_score(const LatticeModel& model, const ParticleMatrix& y) {
  const SuffStats s = exact_suff_stats(model, y);
  return psi_map(model.params(), s, sum_of_squares(y), model.dim(),
                 static_cast<std::size_t>(y.rows()));
}

ParticleMatrix sample_gaussian(const GaussianBelief& belief, std::size_t n, Rng& rng) {
  const auto V = belief.mean.size();
  ParticleMatrix out(static_cast<Eigen::Index>(n), V);
  if (n == 0) return out;
  const Eigen::MatrixXd L = robust_cholesky(belief.cov);
  Eigen::VectorXd z(V);
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i) {
    for (Eigen::Index v = 0; v < V; ++v) z[v] = rng.normal();
    out.row(i) = (belief.mean + L.triangularView<Eigen::Lower>() * z).transpose();
  }
  return out;
}

ParticleMatrix sample_exact_filter(const LatticeModel& model, const ParticleMatrix& y,
                                   std::size_t t, std::size_t n, Rng& rng) {
  if (t >= static_cast<std::size_t>(y.rows())) throw ConfigError("filter time out of range");
  const KalmanResult kf = kalman_filter(model, y.topRows(static_cast<Eigen::Index>(t + 1)));
  return sample_gaussian(kf.filtered[t], n, rng);
}

std::vector<GaussianBelief> tilde_filter(const LatticeModel& model, const BlockPartition& partition,
                                         const ParticleMatrix& y) {
  check_observations(model, y);
  if (partition.num_vertices() != model.dim()) throw ConfigError("partition does not match model");
  const auto V = static_cast<Eigen::Index>(model.dim());
  const Eigen::Index T = y.rows();
  const Eigen::MatrixXd A = model.transition_matrix();
  const double var_x = model.sigma_x() * model.sigma_x();
  const double var_y = model.sigma_y() * model.sigma_y();

  // Block-diagonal part of A: z_K depends on x_K only.
  Eigen::MatrixXd A_block = Eigen::MatrixXd::Zero(V, V);
  for (const auto& block : partition.blocks())
    for (Vertex i : block)
      for (Vertex j : block) {
        const auto ii = static_cast<Eigen::Index>(i), jj = static_cast<Eigen::Index>(j);
        A_block(ii, jj) = A(ii, jj);
      }

  std::vector<GaussianBelief> out;
  out.reserve(T);
  GaussianBelief belief{Eigen::VectorXd::Zero(V), Eigen::MatrixXd::Identity(V, V)};
  for (Eigen::Index t = 0; t < T; ++t) {
    if (t > 0) {
      const GaussianBelief prev = belief;
      belief.mean = A * prev.mean;  // A_KK mu_K + A_KD mu_D for every block
      belief.cov = A_block * prev.cov * A_block.transpose();
      for (std::size_t k = 0; k < partition.size(); ++k) {
        const auto& scope = partition.scope(k);
        VertexSet outside;
        for (Vertex u : scope.block_nbhd)
          if (partition.block_of(u) != k) outside.push_back(u);
        const auto nk = static_cast<Eigen::Index>(scope.block.size());
        const auto nd = static_cast<Eigen::Index>(outside.size());
        Eigen::MatrixXd noise = var_x * Eigen::MatrixXd::Identity(nk, nk);
        if (nd > 0) {
          Eigen::MatrixXd A_kd(nk, nd);
          Eigen::MatrixXd S_dd(nd, nd);
          for (Eigen::Index i = 0; i < nk; ++i)
            for (Eigen::Index j = 0; j < nd; ++j)
              A_kd(i, j) = A(static_cast<Eigen::Index>(scope.block[i]),
                             static_cast<Eigen::Index>(outside[j]));
          for (Eigen::Index i = 0; i < nd; ++i)
            for (Eigen::Index j = 0; j < nd; ++j)
              S_dd(i, j) = prev.cov(static_cast<Eigen::Index>(outside[i]),
                                    static_cast<Eigen::Index>(outside[j]));
          noise += A_kd * S_dd * A_kd.transpose();
        }
        for (Eigen::Index i = 0; i < nk; ++i)
          for (Eigen::Index j = 0; j < nk; ++j)
            belief.cov(static_cast<Eigen::Index>(scope.block[i]),
                       static_cast<Eigen::Index>(scope.block[j])) += noise(i, j);
      }
      belief.cov = symmetrized(belief.cov);
    }
    update(belief, y.row(t).transpose(), var_y);
    out.push_back(belief);
  }
  return out;
}

}  // namespace bps
