#include "bps/particle_smoother.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "bps/parallel.hpp"

namespace bps {

namespace {

/// Index sets one smoothing recursion runs on.
struct Scope {
  std::size_t index = 0;        // block number (RNG key)
  VertexSet block;              // K: vertices whose increments are summed
  VertexSet target;             // K^: coordinates the kernel conditions on
  VertexSet weight_scope;       // N(K^): scope of the kernel weights
};

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// mu(m, j) = transition mean of target[j] given particle m.
RowMajor transition_means(const LatticeModel& model, const ParticleMatrix& particles,
                          std::span<const Vertex> target) {
  RowMajor mu(particles.rows(), static_cast<Eigen::Index>(target.size()));
  for (Eigen::Index m = 0; m < particles.rows(); ++m) {
    const double* z = particles.row(m).data();
    for (std::size_t j = 0; j < target.size(); ++j)
      mu(m, static_cast<Eigen::Index>(j)) = model.local_transition_mean(z, target[j]);
  }
  return mu;
}

/// Normalised kernel row into `probs` (length N).
void kernel_row(const RowMajor& mu, const Eigen::VectorXd& log_w, const double* x,
                std::span<const Vertex> target, double half_inv_var, double* probs) {
  const Eigen::Index N = mu.rows();
  const auto nt = static_cast<Eigen::Index>(target.size());
  double mx = -std::numeric_limits<double>::infinity();
  for (Eigen::Index m = 0; m < N; ++m) {
    const double* mm = mu.row(m).data();
    double q = 0.0;
    for (Eigen::Index j = 0; j < nt; ++j) {
      const double d = x[target[static_cast<std::size_t>(j)]] - mm[j];
      q += d * d;
    }
    const double lr = log_w[m] - half_inv_var * q;
    probs[m] = lr;
    if (lr > mx) mx = lr;
  }
  if (!std::isfinite(mx)) throw NumericalError("backward kernel row has no mass");
  double sum = 0.0;
  for (Eigen::Index m = 0; m < N; ++m) {
    probs[m] = std::exp(probs[m] - mx);
    sum += probs[m];
  }
  const double inv = 1.0 / sum;
  for (Eigen::Index m = 0; m < N; ++m) probs[m] *= inv;
}

struct Prepared {
  std::vector<Eigen::VectorXd> log_w;  // kernel weights per time
  std::vector<RowMajor> mu;            // transition means per time
  Eigen::VectorXd terminal_w;          // normalised weights on K^ at the final time
};

Prepared prepare(const LatticeModel& model, const FilterApproximation& filter, const Scope& s) {
  const std::size_t T = filter.num_times();
  Prepared p;
  p.log_w.resize(T);
  p.mu.resize(T);
  for (std::size_t t = 0; t + 1 < T; ++t) {
    p.log_w[t] = filter.log_weights(t, s.weight_scope);
    p.mu[t] = transition_means(model, filter.states(t), s.target);
  }
  p.terminal_w = filter.weights(T - 1, s.target);
  return p;
}

void check_filter(const LatticeModel& model, const FilterApproximation& filter) {
  if (filter.dim() != model.dim()) throw ConfigError("filter approximation does not match the model dimension");
}

/// Full-dimensional vector from values on `components`.
Eigen::VectorXd expand(const std::vector<std::size_t>& components, const Eigen::VectorXd& compact,
                       std::size_t dim) {
  Eigen::VectorXd full = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
  for (std::size_t j = 0; j < components.size(); ++j)
    full[static_cast<Eigen::Index>(components[j])] = compact[static_cast<Eigen::Index>(j)];
  return full;
}

Eigen::VectorXd forward_scope(const LatticeModel& model, const FilterApproximation& filter,
                              const AdditiveFunctional& f, const Scope& s) {
  const std::size_t T = filter.num_times();
  const std::size_t N = filter.num_particles();
  const std::size_t D = f.dim();
  const auto comps = f.active_components(s.block);
  const std::size_t Da = comps.size();
  const double half_inv_var = 0.5 / (model.sigma_x() * model.sigma_x());
  const Prepared prep = prepare(model, filter, s);

  RowMajor alpha = RowMajor::Zero(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(Da));
  if (Da == 0) return Eigen::VectorXd::Zero(static_cast<Eigen::Index>(D));

  auto increment = [&](std::size_t t, const double* prev, const double* cur, double* scratch, double* dst) {
    for (std::size_t j = 0; j < Da; ++j) scratch[comps[j]] = 0.0;
    f.accumulate(t, s.block, prev, cur, scratch);
    for (std::size_t j = 0; j < Da; ++j) dst[j] = scratch[comps[j]];
  };

  {
    const ParticleMatrix& X0 = filter.states(0);
    parallel_for(0, N, [&](std::size_t n) {
      std::vector<double> scratch(D, 0.0);
      increment(0, nullptr, X0.row(static_cast<Eigen::Index>(n)).data(), scratch.data(),
                alpha.row(static_cast<Eigen::Index>(n)).data());
    });
  }

  RowMajor next(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(Da));
  for (std::size_t t = 0; t + 1 < T; ++t) {
    const ParticleMatrix& Xt = filter.states(t);
    const ParticleMatrix& Xn = filter.states(t + 1);
    parallel_for(0, N, [&](std::size_t n) {
      std::vector<double> probs(N);
      std::vector<double> scratch(D, 0.0);
      std::vector<double> inc(Da);
      const double* cur = Xn.row(static_cast<Eigen::Index>(n)).data();
      kernel_row(prep.mu[t], prep.log_w[t], cur, s.target, half_inv_var, probs.data());
      double* out = next.row(static_cast<Eigen::Index>(n)).data();
      for (std::size_t j = 0; j < Da; ++j) out[j] = 0.0;
      if (f.uses_previous()) {
        for (std::size_t m = 0; m < N; ++m) {
          const double b = probs[m];
          if (b == 0.0) continue;
          increment(t + 1, Xt.row(static_cast<Eigen::Index>(m)).data(), cur, scratch.data(), inc.data());
          const double* am = alpha.row(static_cast<Eigen::Index>(m)).data();
          for (std::size_t j = 0; j < Da; ++j) out[j] += b * (am[j] + inc[j]);
        }
      } else {
        for (std::size_t m = 0; m < N; ++m) {
          const double b = probs[m];
          if (b == 0.0) continue;
          const double* am = alpha.row(static_cast<Eigen::Index>(m)).data();
          for (std::size_t j = 0; j < Da; ++j) out[j] += b * am[j];
        }
        increment(t + 1, nullptr, cur, scratch.data(), inc.data());
        for (std::size_t j = 0; j < Da; ++j) out[j] += inc[j];
      }
    });
    std::swap(alpha, next);
  }

  Eigen::VectorXd compact = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(Da));
  for (std::size_t n = 0; n < N; ++n) {
    const double w = prep.terminal_w[static_cast<Eigen::Index>(n)];
    for (std::size_t j = 0; j < Da; ++j)
      compact[static_cast<Eigen::Index>(j)] += w * alpha(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(j));
  }
  return expand(comps, compact, D);
}

struct ScopeSamples {
  Eigen::VectorXd estimate;
  std::vector<std::vector<std::size_t>> paths;
};

ScopeSamples backward_scope(const LatticeModel& model, const FilterApproximation& filter,
                            const AdditiveFunctional& f, const Scope& s, std::size_t M,
                            std::uint64_t seed) {
  if (M == 0) throw ConfigError("backward sampling needs M >= 1");
  const std::size_t T = filter.num_times();
  const std::size_t N = filter.num_particles();
  const std::size_t D = f.dim();
  const double half_inv_var = 0.5 / (model.sigma_x() * model.sigma_x());
  const Prepared prep = prepare(model, filter, s);
  const std::vector<double> terminal_cum = cumulative_sum(
      std::span<const double>(prep.terminal_w.data(), static_cast<std::size_t>(prep.terminal_w.size())));

  ScopeSamples out;
  out.paths.assign(M, std::vector<std::size_t>(T));
  RowMajor per_path = RowMajor::Zero(static_cast<Eigen::Index>(M), static_cast<Eigen::Index>(D));
  parallel_for(0, M, [&](std::size_t m) {
    Rng rng(seed, StreamTag::BackwardSample, {s.index, m});
    auto& path = out.paths[m];
    std::vector<double> probs(N);
    path[T - 1] = sample_from_cumulative(terminal_cum, rng.uniform());
    for (std::size_t t = T - 1; t-- > 0;) {
      const double* x = filter.states(t + 1).row(static_cast<Eigen::Index>(path[t + 1])).data();
      kernel_row(prep.mu[t], prep.log_w[t], x, s.target, half_inv_var, probs.data());
      path[t] = sample_index(probs, rng.uniform());
    }
    double* acc = per_path.row(static_cast<Eigen::Index>(m)).data();
    for (std::size_t t = 0; t < T; ++t) {
      const double* prev = t > 0 ? filter.states(t - 1).row(static_cast<Eigen::Index>(path[t - 1])).data() : nullptr;
      f.accumulate(t, s.block, prev, filter.states(t).row(static_cast<Eigen::Index>(path[t])).data(), acc);
    }
  });
  out.estimate = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(D));
  for (std::size_t m = 0; m < M; ++m) out.estimate += per_path.row(static_cast<Eigen::Index>(m)).transpose();
  out.estimate /= static_cast<double>(M);
  return out;
}

Scope whole_lattice(std::size_t V) {
  Scope s;
  s.block.resize(V);
  for (std::size_t v = 0; v < V; ++v) s.block[v] = v;
  s.target = s.block;
  s.weight_scope = s.block;
  return s;
}

std::vector<Scope> block_scopes(const BlockPartition& partition) {
  std::vector<Scope> scopes(partition.size());
  for (std::size_t k = 0; k < partition.size(); ++k) {
    const BlockScope& bs = partition.scope(k);
    scopes[k].index = k;
    scopes[k].block = bs.block;
    scopes[k].target = bs.enlarged;
    scopes[k].weight_scope = bs.enlarged_nbhd;
  }
  return scopes;
}

void check_partition(const LatticeModel& model, const BlockPartition& partition) {
  if (partition.num_vertices() != model.dim()) throw ConfigError("partition does not match the model dimension");
}

}  // namespace

Eigen::VectorXd backward_kernel_row(const LatticeModel& model, const ParticleMatrix& particles,
                                    const Eigen::VectorXd& log_weights, std::span<const double> x) {
  const Scope s = whole_lattice(model.dim());
  return blocked_backward_kernel_row(model, particles, log_weights, x, s.target);
}

Eigen::VectorXd blocked_backward_kernel_row(const LatticeModel& model, const ParticleMatrix& particles,
                                            const Eigen::VectorXd& log_weights,
                                            std::span<const double> x, std::span<const Vertex> target) {
  if (x.size() != model.dim()) throw ConfigError("kernel query point has the wrong length");
  if (log_weights.size() != particles.rows()) throw ConfigError("weights and particles disagree on N");
  const RowMajor mu = transition_means(model, particles, target);
  Eigen::VectorXd probs(particles.rows());
  kernel_row(mu, log_weights, x.data(), target, 0.5 / (model.sigma_x() * model.sigma_x()), probs.data());
  return probs;
}

SmoothingEstimate forward_smoothing(const LatticeModel& model, const FilterApproximation& filter,
                                    const AdditiveFunctional& functional) {
  check_filter(model, filter);
  SmoothingEstimate out;
  out.per_block.push_back(forward_scope(model, filter, functional, whole_lattice(model.dim())));
  out.total = out.per_block[0];
  return out;
}

BackwardSamplingEstimate backward_sampling(const LatticeModel& model, const FilterApproximation& filter,
                                           const AdditiveFunctional& functional, std::size_t M,
                                           std::uint64_t seed) {
  check_filter(model, filter);
  ScopeSamples r = backward_scope(model, filter, functional, whole_lattice(model.dim()), M, seed);
  BackwardSamplingEstimate out;
  out.total = r.estimate;
  out.per_block.push_back(std::move(r.estimate));
  out.paths.push_back(std::move(r.paths));
  return out;
}

SmoothingEstimate blocked_forward_smoothing(const LatticeModel& model, const BlockPartition& partition,
                                            const FilterApproximation& filter,
                                            const AdditiveFunctional& functional) {
  check_filter(model, filter);
  check_partition(model, partition);
  const auto scopes = block_scopes(partition);
  SmoothingEstimate out;
  out.per_block.resize(scopes.size());
  parallel_for(0, scopes.size(), [&](std::size_t k) {
    out.per_block[k] = forward_scope(model, filter, functional, scopes[k]);
  });
  out.total = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(functional.dim()));
  for (const auto& e : out.per_block) out.total += e;
  return out;
}

BackwardSamplingEstimate blocked_backward_sampling(const LatticeModel& model,
                                                   const BlockPartition& partition,
                                                   const FilterApproximation& filter,
                                                   const AdditiveFunctional& functional, std::size_t M,
                                                   std::uint64_t seed) {
  check_filter(model, filter);
  check_partition(model, partition);
  const auto scopes = block_scopes(partition);
  std::vector<ScopeSamples> results(scopes.size());
  parallel_for(0, scopes.size(), [&](std::size_t k) {
    results[k] = backward_scope(model, filter, functional, scopes[k], M, seed);
  });
  BackwardSamplingEstimate out;
  out.total = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(functional.dim()));
  for (auto& r : results) {
    out.total += r.estimate;
    out.per_block.push_back(std::move(r.estimate));
    out.paths.push_back(std::move(r.paths));
  }
  return out;
}

}  // namespace bps
