#include "bps/particle_filter.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bps/exact_oracle.hpp"
#include "bps/parallel.hpp"

namespace bps {

std::string to_string(ProposalKind kind) {
  switch (kind) {
    case ProposalKind::Bootstrap: return "bootstrap";
    case ProposalKind::LocallyOptimal: return "locally_optimal";
  }
  return "?";
}

std::string to_string(FilterProviderKind kind) {
  switch (kind) {
    case FilterProviderKind::StandardPF: return "standard_pf";
    case FilterProviderKind::BpfSubsampled: return "bpf_subsampled";
    case FilterProviderKind::IidExactFilter: return "iid_exact";
    case FilterProviderKind::IidTildeFilter: return "iid_tilde";
    case FilterProviderKind::LocalWeightPF: return "local_weight_pf";
    case FilterProviderKind::BpfMarginal: return "bpf_marginal";
    case FilterProviderKind::IidExactMarginal: return "iid_exact_marginal";
    case FilterProviderKind::IidTildeMarginal: return "iid_tilde_marginal";
  }
  return "?";
}

ProposalKind parse_proposal(const std::string& name) {
  if (name == "bootstrap") return ProposalKind::Bootstrap;
  if (name == "locally_optimal") return ProposalKind::LocallyOptimal;
  throw ConfigError("unknown proposal '" + name + "'");
}

FilterProviderKind parse_filter_provider(const std::string& name) {
  for (auto k : {FilterProviderKind::StandardPF, FilterProviderKind::BpfSubsampled,
                 FilterProviderKind::IidExactFilter, FilterProviderKind::IidTildeFilter,
                 FilterProviderKind::LocalWeightPF, FilterProviderKind::BpfMarginal,
                 FilterProviderKind::IidExactMarginal, FilterProviderKind::IidTildeMarginal})
    if (to_string(k) == name) return k;
  throw ConfigError("unknown filter provider '" + name + "'");
}

bool is_marginal_kind(FilterProviderKind kind) {
  switch (kind) {
    case FilterProviderKind::LocalWeightPF:
    case FilterProviderKind::BpfMarginal:
    case FilterProviderKind::IidExactMarginal:
    case FilterProviderKind::IidTildeMarginal: return true;
    default: return false;
  }
}

Eigen::VectorXd ParticleCloud::scope_log_weights(std::size_t t, std::span<const Vertex> scope) const {
  const ParticleMatrix& lw = log_weights[t];
  Eigen::VectorXd out = Eigen::VectorXd::Zero(lw.rows());
  for (Eigen::Index n = 0; n < lw.rows(); ++n) {
    double s = 0.0;
    for (Vertex v : scope) s += lw(n, static_cast<Eigen::Index>(v));
    out[n] = s;
  }
  return out;
}

Eigen::VectorXd ParticleCloud::global_log_weights(std::size_t t) const {
  const ParticleMatrix& lw = log_weights[t];
  Eigen::VectorXd out(lw.rows());
  for (Eigen::Index n = 0; n < lw.rows(); ++n) {
    double s = 0.0;
    for (Eigen::Index v = 0; v < lw.cols(); ++v) s += lw(n, v);
    out[n] = s;
  }
  return out;
}

double ParticleCloud::estimate(std::size_t t, std::span<const Vertex> scope,
                               std::span<const double> f_values) const {
  const Eigen::VectorXd W = normalize_log_weights(scope_log_weights(t, scope), "estimate");
  double s = 0.0;
  for (Eigen::Index n = 0; n < W.size(); ++n) s += W[n] * f_values[static_cast<std::size_t>(n)];
  return s;
}

double ParticleCloud::log_normalizer() const {
  double total = 0.0;
  for (std::size_t t = 0; t < states.size(); ++t) {
    const Eigen::VectorXd lw = global_log_weights(t);
    const double mx = lw.maxCoeff();
    total += mx + std::log((lw.array() - mx).exp().mean());
  }
  return total;
}

Eigen::VectorXd normalized_log_weights(const Eigen::VectorXd& log_w, const std::string& context) {
  const double mx = log_w.size() ? log_w.maxCoeff() : -std::numeric_limits<double>::infinity();
  if (!std::isfinite(mx))
    throw NumericalError("weight degeneracy (" + context + "): no particle has finite positive weight");
  double sum = 0.0;
  for (Eigen::Index n = 0; n < log_w.size(); ++n) sum += std::exp(log_w[n] - mx);
  return (log_w.array() - (mx + std::log(sum))).matrix();
}

Eigen::VectorXd normalize_log_weights(const Eigen::VectorXd& log_w, const std::string& context) {
  const double mx = log_w.size() ? log_w.maxCoeff() : -std::numeric_limits<double>::infinity();
  if (!std::isfinite(mx))
    throw NumericalError("weight degeneracy (" + context + "): no particle has finite positive weight");
  Eigen::VectorXd w(log_w.size());
  double sum = 0.0;
  for (Eigen::Index n = 0; n < log_w.size(); ++n) {
    w[n] = std::exp(log_w[n] - mx);
    sum += w[n];
  }
  return w / sum;
}

std::vector<double> cumulative_sum(std::span<const double> probs) {
  std::vector<double> cum(probs.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    cum[i] = acc;
  }
  return cum;
}

std::size_t sample_from_cumulative(std::span<const double> cumulative, double u) {
  const double target = u * cumulative.back();
  auto it = std::upper_bound(cumulative.begin(), cumulative.end(), target);
  if (it == cumulative.end()) {
    // u * total rounded up to total: take the last index with positive mass.
    std::size_t i = cumulative.size() - 1;
    while (i > 0 && cumulative[i] == cumulative[i - 1]) --i;
    return i;
  }
  return static_cast<std::size_t>(it - cumulative.begin());
}

std::size_t sample_index(std::span<const double> probs, double u) {
  const auto cum = cumulative_sum(probs);
  return sample_from_cumulative(cum, u);
}

std::vector<std::size_t> resample_categorical(std::span<const double> weights, std::size_t count, Rng& rng) {
  if (weights.empty()) throw NumericalError("resampling from an empty weight vector");
  double total = 0.0;
  for (double w : weights) {
    if (!std::isfinite(w) || w < 0.0) throw NumericalError("resampling weights must be finite and nonnegative");
    total += w;
  }
  if (!(total > 0.0)) throw NumericalError("resampling weights are all zero");
  const auto cum = cumulative_sum(weights);
  std::vector<std::size_t> out(count);
  for (auto& i : out) i = sample_from_cumulative(cum, rng.uniform());
  return out;
}

LocalPrior local_prior(const LatticeModel& model, const double* z_prev, Vertex v, std::size_t t) {
  if (t == 0) return {0.0, 1.0};
  return {model.local_transition_mean(z_prev, v), model.sigma_x() * model.sigma_x()};
}

double local_weight(const LatticeModel& model, ProposalKind proposal, const double* z_prev, double x_v,
                    double y_tv, Vertex v, std::size_t t) {
  if (!std::isfinite(x_v) || !std::isfinite(y_tv)) throw NumericalError("non-finite input to local weight");
  const double var_y = model.sigma_y() * model.sigma_y();
  if (proposal == ProposalKind::Bootstrap) return log_normal_pdf(y_tv, x_v, var_y);
  const LocalPrior prior = local_prior(model, z_prev, v, t);
  return log_normal_pdf(y_tv, prior.mean, prior.var + var_y);
}

double propose_locally_optimal(const LatticeModel& model, const double* z_prev, double y_tv, Vertex v,
                               std::size_t t, Rng& rng) {
  const LocalPrior prior = local_prior(model, z_prev, v, t);
  const double var_y = model.sigma_y() * model.sigma_y();
  const double post_var = 1.0 / (1.0 / prior.var + 1.0 / var_y);
  const double post_mean = post_var * (prior.mean / prior.var + y_tv / var_y);
  return rng.normal(post_mean, std::sqrt(post_var));
}

namespace {

double propose(const LatticeModel& model, ProposalKind proposal, const double* z_prev, double y_tv,
               Vertex v, std::size_t t, Rng& rng) {
  if (proposal == ProposalKind::LocallyOptimal)
    return propose_locally_optimal(model, z_prev, y_tv, v, t, rng);
  const LocalPrior prior = local_prior(model, z_prev, v, t);
  return rng.normal(prior.mean, std::sqrt(prior.var));
}

void check_inputs(const LatticeModel& model, const ParticleMatrix& y, std::size_t N) {
  if (N == 0) throw ConfigError("particle filter needs N >= 1");
  if (y.rows() == 0) throw ConfigError("need at least one observation");
  if (y.cols() != static_cast<Eigen::Index>(model.dim()))
    throw ConfigError("observation width does not match the model dimension");
  if (!y.allFinite()) throw NumericalError("non-finite observation values");
}

/// Shared Alg. 1 / Alg. 4 loop; `blocks` = {V} gives the standard filter.
ParticleCloud run_blocked(const LatticeModel& model, std::vector<VertexSet> blocks,
                          const ParticleMatrix& y, std::size_t N, ProposalKind proposal,
                          std::uint64_t seed, bool global_scope) {
  check_inputs(model, y, N);
  const std::size_t T = static_cast<std::size_t>(y.rows());
  const std::size_t V = model.dim();
  const std::size_t K = blocks.size();
  const auto Ni = static_cast<Eigen::Index>(N);
  const auto Vi = static_cast<Eigen::Index>(V);

  ParticleCloud cloud;
  cloud.blocks = std::move(blocks);
  cloud.states.assign(T, ParticleMatrix(Ni, Vi));
  cloud.log_weights.assign(T, ParticleMatrix(Ni, Vi));
  cloud.ancestors.assign(T > 0 ? T - 1 : 0, std::vector<std::size_t>(N * K));

  ParticleMatrix resampled(Ni, Vi);
  for (std::size_t t = 0; t < T; ++t) {
    if (t > 0) {
      // Per-block multinomial resampling and concatenation.
      std::vector<std::vector<double>> cums(K);
      for (std::size_t k = 0; k < K; ++k) {
        const Eigen::VectorXd lw = global_scope ? cloud.global_log_weights(t - 1)
                                                : cloud.scope_log_weights(t - 1, cloud.blocks[k]);
        const std::string ctx = "t=" + std::to_string(t - 1) +
                                (global_scope ? std::string() : ", block=" + std::to_string(k));
        const Eigen::VectorXd W = normalize_log_weights(lw, ctx);
        cums[k] = cumulative_sum(std::span<const double>(W.data(), static_cast<std::size_t>(W.size())));
      }
      auto& anc = cloud.ancestors[t - 1];
      const ParticleMatrix& prev = cloud.states[t - 1];
      parallel_for(0, N, [&](std::size_t n) {
        for (std::size_t k = 0; k < K; ++k) {
          Rng rng(seed, StreamTag::Resample, {t, k, n});
          const std::size_t a = sample_from_cumulative(cums[k], rng.uniform());
          anc[n * K + k] = a;
          for (Vertex v : cloud.blocks[k])
            resampled(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(v)) =
                prev(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(v));
        }
      });
    }
    ParticleMatrix& X = cloud.states[t];
    ParticleMatrix& LW = cloud.log_weights[t];
    parallel_for(0, N, [&](std::size_t n) {
      const auto ni = static_cast<Eigen::Index>(n);
      const double* z = t > 0 ? resampled.row(ni).data() : nullptr;
      for (Vertex v = 0; v < V; ++v) {
        const auto vi = static_cast<Eigen::Index>(v);
        const double ytv = y(static_cast<Eigen::Index>(t), vi);
        Rng rng(seed, StreamTag::Propose, {t, v, n});
        const double x = propose(model, proposal, z, ytv, v, t, rng);
        X(ni, vi) = x;
        LW(ni, vi) = local_weight(model, proposal, z, x, ytv, v, t);
      }
    });
  }
  // Degeneracy at the final time is reported too.
  for (std::size_t k = 0; k < K; ++k) {
    const Eigen::VectorXd lw = global_scope ? cloud.global_log_weights(T - 1)
                                            : cloud.scope_log_weights(T - 1, cloud.blocks[k]);
    normalize_log_weights(lw, "t=" + std::to_string(T - 1) +
                                  (global_scope ? std::string() : ", block=" + std::to_string(k)));
  }
  return cloud;
}

VertexSet all_vertices(std::size_t V) {
  VertexSet out(V);
  for (std::size_t v = 0; v < V; ++v) out[v] = v;
  return out;
}

}  // namespace

ParticleCloud run_pf(const LatticeModel& model, const ParticleMatrix& y, std::size_t N,
                     ProposalKind proposal, std::uint64_t seed) {
  return run_blocked(model, {all_vertices(model.dim())}, y, N, proposal, seed, true);
}

ParticleCloud run_bpf(const LatticeModel& model, const BlockPartition& partition,
                      const ParticleMatrix& y, std::size_t N, ProposalKind proposal,
                      std::uint64_t seed) {
  if (partition.num_vertices() != model.dim()) throw ConfigError("partition does not match model");
  return run_blocked(model, partition.blocks(), y, N, proposal, seed, false);
}

FilterApproximation::FilterApproximation(FilterProviderKind kind, WeightMode mode,
                                         std::vector<ParticleMatrix> states,
                                         std::vector<ParticleMatrix> log_weights)
    : kind_(kind), mode_(mode), states_(std::move(states)), log_weights_(std::move(log_weights)) {
  if (states_.empty()) throw ConfigError("filter approximation needs at least one time step");
  if (mode_ != WeightMode::Uniform && log_weights_.size() != states_.size())
    throw ConfigError("weighted filter approximation needs log-weights at every time");
}

Eigen::VectorXd FilterApproximation::log_weights(std::size_t t, std::span<const Vertex> scope) const {
  const auto N = states_[t].rows();
  if (mode_ == WeightMode::Uniform)
    return Eigen::VectorXd::Constant(N, -std::log(static_cast<double>(N)));
  const ParticleMatrix& lw = log_weights_[t];
  Eigen::VectorXd raw(N);
  for (Eigen::Index n = 0; n < N; ++n) {
    double s = 0.0;
    if (mode_ == WeightMode::Global) {
      for (Eigen::Index v = 0; v < lw.cols(); ++v) s += lw(n, v);
    } else {
      for (Vertex v : scope) s += lw(n, static_cast<Eigen::Index>(v));
    }
    raw[n] = s;
  }
  return normalized_log_weights(raw, "t=" + std::to_string(t));
}

Eigen::VectorXd FilterApproximation::weights(std::size_t t, std::span<const Vertex> scope) const {
  const auto N = states_[t].rows();
  if (mode_ == WeightMode::Uniform) return Eigen::VectorXd::Constant(N, 1.0 / static_cast<double>(N));
  return log_weights(t, scope).array().exp().matrix();
}

FilterApproximation FilterApproximation::with_states(std::vector<ParticleMatrix> states) const {
  return FilterApproximation(kind_, mode_, std::move(states), log_weights_);
}

std::vector<ParticleMatrix> subsample_blocked(const ParticleCloud& cloud, std::uint64_t seed) {
  const std::size_t T = cloud.num_times();
  const std::size_t N = cloud.num_particles();
  const std::size_t K = cloud.blocks.size();
  std::vector<ParticleMatrix> out(T, ParticleMatrix(cloud.states[0].rows(), cloud.states[0].cols()));
  for (std::size_t t = 0; t < T; ++t) {
    std::vector<std::vector<double>> cums(K);
    for (std::size_t k = 0; k < K; ++k) {
      const Eigen::VectorXd W =
          normalize_log_weights(cloud.scope_log_weights(t, cloud.blocks[k]), "subsample t=" + std::to_string(t));
      cums[k] = cumulative_sum(std::span<const double>(W.data(), static_cast<std::size_t>(W.size())));
    }
    parallel_for(0, N, [&](std::size_t n) {
      for (std::size_t k = 0; k < K; ++k) {
        Rng rng(seed, StreamTag::Subsample, {t, k, n});
        const auto a = static_cast<Eigen::Index>(sample_from_cumulative(cums[k], rng.uniform()));
        for (Vertex v : cloud.blocks[k])
          out[t](static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(v)) =
              cloud.states[t](a, static_cast<Eigen::Index>(v));
      }
    });
  }
  return out;
}

FilterApproximation provider_from_cloud(FilterProviderKind kind, const ParticleCloud& cloud,
                                        std::uint64_t seed) {
  using Mode = FilterApproximation::WeightMode;
  switch (kind) {
    case FilterProviderKind::StandardPF:
      return FilterApproximation(kind, Mode::Global, cloud.states, cloud.log_weights);
    case FilterProviderKind::LocalWeightPF:
    case FilterProviderKind::BpfMarginal:
      return FilterApproximation(kind, Mode::Local, cloud.states, cloud.log_weights);
    case FilterProviderKind::BpfSubsampled:
      return FilterApproximation(kind, Mode::Uniform, subsample_blocked(cloud, seed), {});
    default: throw ConfigError("provider kind " + to_string(kind) + " is not built from a particle cloud");
  }
}

namespace {

FilterApproximation iid_provider(FilterProviderKind kind, const std::vector<GaussianBelief>& beliefs,
                                 std::size_t N, std::uint64_t seed) {
  const std::size_t T = beliefs.size();
  std::vector<ParticleMatrix> states(T);
  for (std::size_t t = 0; t < T; ++t) {
    const auto& b = beliefs[t];
    const auto V = b.mean.size();
    const Eigen::MatrixXd L = robust_cholesky(b.cov);
    ParticleMatrix X(static_cast<Eigen::Index>(N), V);
    parallel_for(0, N, [&](std::size_t n) {
      Rng rng(seed, StreamTag::IidFilter, {t, n});
      Eigen::VectorXd z(V);
      for (Eigen::Index v = 0; v < V; ++v) z[v] = rng.normal();
      X.row(static_cast<Eigen::Index>(n)) = (b.mean + L.triangularView<Eigen::Lower>() * z).transpose();
    });
    states[t] = std::move(X);
  }
  return FilterApproximation(kind, FilterApproximation::WeightMode::Uniform, std::move(states), {});
}

}  // namespace

FilterApproximation make_filter_provider(FilterProviderKind kind, const LatticeModel& model,
                                         const BlockPartition& partition, const ParticleMatrix& y,
                                         std::size_t N, ProposalKind proposal, std::uint64_t seed) {
  if (N == 0) throw ConfigError("filter approximation needs N >= 1");
  const std::uint64_t filter_seed = derive_seed(seed, StreamTag::Propose, {0});
  const std::uint64_t sub_seed = derive_seed(seed, StreamTag::Subsample, {0});
  switch (kind) {
    case FilterProviderKind::StandardPF:
    case FilterProviderKind::LocalWeightPF:
      return provider_from_cloud(kind, run_pf(model, y, N, proposal, filter_seed));
    case FilterProviderKind::BpfSubsampled:
    case FilterProviderKind::BpfMarginal:
      return provider_from_cloud(kind, run_bpf(model, partition, y, N, proposal, filter_seed), sub_seed);
    case FilterProviderKind::IidExactFilter:
    case FilterProviderKind::IidExactMarginal:
      return iid_provider(kind, kalman_filter(model, y).filtered, N, seed);
    case FilterProviderKind::IidTildeFilter:
    case FilterProviderKind::IidTildeMarginal:
      return iid_provider(kind, tilde_filter(model, partition, y), N, seed);
  }
  throw ConfigError("unknown filter provider");
}

}  // namespace bps
