#include <doctest.h>

#include <cmath>
#include <numbers>

#include "bps/exact_oracle.hpp"
#include "bps/parallel.hpp"
#include "bps/particle_filter.hpp"
#include "../oracles.hpp"

using namespace bps;

namespace {

ModelParams params(double a0, double a1, double lsx = 0.0, double lsy = 0.0) {
  ModelParams p;
  p.a = Eigen::Vector2d(a0, a1);
  p.log_sigma_x = lsx;
  p.log_sigma_y = lsy;
  return p;
}

bool same(const std::vector<ParticleMatrix>& a, const std::vector<ParticleMatrix>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t t = 0; t < a.size(); ++t)
    if (a[t].rows() != b[t].rows() || a[t].cols() != b[t].cols() || (a[t].array() != b[t].array()).any())
      return false;
  return true;
}

/// Kolmogorov-Smirnov statistic of draws against N(mean, sd^2).
double ks_statistic(std::vector<double> xs, double mean, double sd) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double F = oracle::standard_normal_cdf((xs[i] - mean) / sd);
    d = std::max({d, std::abs(F - i / n), std::abs((i + 1) / n - F)});
  }
  return d;
}

}  // namespace

TEST_SUITE("particle_filtering") {

TEST_CASE("multinomial resampling") {
  Rng rng(1, StreamTag::Test, {20});
  const std::vector<double> point{1.0, 0.0, 0.0};
  for (auto i : resample_categorical(point, 50, rng)) CHECK(i == 0);

  const std::size_t K = 10, n = 100000;
  const std::vector<double> uniform(K, 0.1);
  std::vector<double> counts(K, 0.0);
  for (auto i : resample_categorical(uniform, n, rng)) counts[i] += 1.0;
  double chi2 = 0.0;
  for (double c : counts) chi2 += (c - n / 10.0) * (c - n / 10.0) / (n / 10.0);
  CHECK(chi2 < 27.877);  // chi-square, 9 df, alpha = 0.001

  const std::vector<double> half{0.5, 0.5};
  const int reps = 20000;
  int zeros = 0;
  for (int r = 0; r < reps; ++r) zeros += resample_categorical(half, 1, rng)[0] == 0;
  CHECK(std::abs(zeros / double(reps) - 0.5) < 4 * 0.5 / std::sqrt(double(reps)));

  const std::vector<double> none{0.0, 0.0};
  const std::vector<double> bad{0.5, std::nan("")};
  CHECK_THROWS_AS(resample_categorical(none, 1, rng), NumericalError);
  CHECK_THROWS_AS(resample_categorical(bad, 1, rng), NumericalError);
}

TEST_CASE("inverse-CDF sampling") {
  const std::vector<double> p{0.2, 0.0, 0.5, 0.3};
  CHECK(sample_index(p, 0.0) == 0);
  CHECK(sample_index(p, 0.19) == 0);
  CHECK(sample_index(p, 0.2) == 2);
  CHECK(sample_index(p, 0.69) == 2);
  CHECK(sample_index(p, 0.71) == 3);
  CHECK(sample_index(p, 0.9999999999999999) == 3);
  const std::vector<double> tail{0.5, 0.5, 0.0};
  CHECK(sample_index(tail, 1.0) == 1);
}

TEST_CASE("log-weight normalisation") {
  Eigen::VectorXd lw(4);
  lw << -1000.0, -1001.0, -999.5, -1e308;
  const Eigen::VectorXd W = normalize_log_weights(lw, "test");
  CHECK(std::abs(W.sum() - 1.0) < 1e-12);
  CHECK(std::abs(normalized_log_weights(lw, "test").array().exp().sum() - 1.0) < 1e-12);
  const Eigen::VectorXd dead = Eigen::VectorXd::Constant(3, -std::numeric_limits<double>::infinity());
  CHECK_THROWS_WITH_AS(normalize_log_weights(dead, "t=4"), doctest::Contains("t=4"), NumericalError);
}

TEST_CASE("local weights") {
  const LatticeModel m(build_lattice(3, 1), params(0.5, 0.2, 0.1, -0.2));
  const std::vector<double> z{0.3, -0.4, 1.1};
  SUBCASE("bootstrap at the mode") {
    const LatticeModel unit(build_lattice(3, 1), params(0.5, 0.2));
    CHECK(local_weight(unit, ProposalKind::Bootstrap, z.data(), 0.8, 0.8, 1, 2) ==
          doctest::Approx(-0.5 * std::log(2 * std::numbers::pi)));
  }
  SUBCASE("locally optimal weight is the predictive density") {
    for (std::size_t t : {0u, 3u}) {
      const double y = 0.9;
      const LocalPrior pr = local_prior(m, z.data(), 1, t);
      // Simpson's rule for the integral of p_v g_v over x
      const double sd = std::sqrt(pr.var);
      const double lo = pr.mean - 12 * sd, hi = pr.mean + 12 * sd;
      const int n = 20000;
      const double h = (hi - lo) / n;
      double acc = 0.0;
      for (int i = 0; i <= n; ++i) {
        const double x = lo + i * h;
        const double f = std::exp(log_normal_pdf(x, pr.mean, pr.var) + m.log_observation(x, y));
        acc += f * (i == 0 || i == n ? 1 : (i % 2 ? 4 : 2));
      }
      const double integral = acc * h / 3;
      const double lw = local_weight(m, ProposalKind::LocallyOptimal, z.data(), 123.0, y, 1, t);
      CHECK(std::exp(lw) == doctest::Approx(integral).epsilon(1e-6));
    }
  }
  SUBCASE("flat observations give near-uniform bootstrap weights") {
    const LatticeModel flat(build_lattice(1, 1), params(0.5, 0.0, 0.0, std::log(1e3)));
    Eigen::VectorXd lw(100);
    Rng rng(3, StreamTag::Test, {21});
    for (int n = 0; n < 100; ++n) lw[n] = local_weight(flat, ProposalKind::Bootstrap, nullptr, rng.normal(), 0.5, 0, 0);
    const Eigen::VectorXd W = normalize_log_weights(lw, "flat");
    CHECK((W.array() * 100.0 - 1.0).abs().maxCoeff() < 1e-3);
  }
  CHECK_THROWS_AS(local_weight(m, ProposalKind::Bootstrap, z.data(), std::nan(""), 0.0, 0, 1), NumericalError);
}

TEST_CASE("locally optimal proposal") {
  const std::vector<double> z{0.3, -0.4, 1.1};
  Rng rng(4, StreamTag::Test, {22});
  const int n = 100000;
  SUBCASE("equal noise levels") {
    const LatticeModel m(build_lattice(3, 1), params(0.5, 0.2, 0.2, 0.2));
    const double mu = m.local_transition_mean(z.data(), 1), y = 1.4;
    std::vector<double> xs(n);
    for (auto& x : xs) x = propose_locally_optimal(m, z.data(), y, 1, 2, rng);
    const double s2 = std::exp(0.4) / 2;
    CHECK(ks_statistic(xs, (mu + y) / 2, std::sqrt(s2)) < 1.949 / std::sqrt(double(n)));
  }
  SUBCASE("matches normalised p_v g_v in general") {
    const double sx = 0.7, sy = 1.6, y = -0.3;
    const LatticeModel m(build_lattice(3, 1), params(0.5, 0.2, std::log(sx), std::log(sy)));
    const double mu = m.local_transition_mean(z.data(), 1);
    const double s2 = 1 / (1 / (sx * sx) + 1 / (sy * sy));
    std::vector<double> xs(n);
    for (auto& x : xs) x = propose_locally_optimal(m, z.data(), y, 1, 2, rng);
    CHECK(ks_statistic(xs, s2 * (mu / (sx * sx) + y / (sy * sy)), std::sqrt(s2)) < 1.949 / std::sqrt(double(n)));
  }
  SUBCASE("uninformative observations leave the prior") {
    const LatticeModel m(build_lattice(3, 1), params(0.5, 0.2, 0.0, std::log(1e6)));
    const double mu = m.local_transition_mean(z.data(), 1);
    std::vector<double> xs(n);
    for (auto& x : xs) x = propose_locally_optimal(m, z.data(), 50.0, 1, 2, rng);
    CHECK(ks_statistic(xs, mu, 1.0) < 1.949 / std::sqrt(double(n)));
  }
}

TEST_CASE("particle filter basics") {
  const LatticeModel m(build_lattice(4, 1), params(0.5, 0.2));
  Rng rng(5, StreamTag::Test, {23});
  const ParticleMatrix y = oracle::random_obs(rng, 5, 4);
  SUBCASE("a single particle") {
    const ParticleCloud c = run_pf(m, y, 1, ProposalKind::Bootstrap, 7);
    for (std::size_t t = 0; t < 5; ++t) {
      CHECK(normalize_log_weights(c.global_log_weights(t), "")[0] == 1.0);
      if (t > 0) CHECK(c.ancestor(t, 0, 0) == 0);
    }
  }
  SUBCASE("weights normalise on every scope") {
    const ParticleCloud c = run_bpf(m, BlockPartition::contiguous(m.graph(), 2, 0), y, 300,
                                    ProposalKind::LocallyOptimal, 3);
    for (std::size_t t = 0; t < 5; ++t) {
      CHECK(std::abs(normalize_log_weights(c.global_log_weights(t), "").sum() - 1.0) < 1e-12);
      const VertexSet scope{1, 2};
      CHECK(std::abs(normalize_log_weights(c.scope_log_weights(t, scope), "").sum() - 1.0) < 1e-12);
      for (std::size_t n = 0; n < 300; ++n) {
        const double manual = c.log_weights[t](n, 1) + c.log_weights[t](n, 2);
        CHECK(c.scope_log_weights(t, scope)[n] == manual);
      }
      if (t > 0)
        for (auto a : c.ancestors[t - 1]) CHECK(a < 300);
    }
  }
  SUBCASE("uninformative data keeps weights flat") {
    const LatticeModel flat(build_lattice(2, 1), params(0.5, 0.2, 0.0, std::log(1e3)));
    const ParticleCloud c = run_pf(flat, y.leftCols(2), 200, ProposalKind::Bootstrap, 1);
    for (std::size_t t = 0; t < 5; ++t)
      CHECK((normalize_log_weights(c.global_log_weights(t), "").array() * 200.0 - 1.0).abs().maxCoeff() < 1e-2);
  }
  SUBCASE("degeneracy names the time") {
    ParticleMatrix huge = y;
    huge(2, 1) = 1e300;
    CHECK_THROWS_WITH_AS(run_pf(m, huge, 10, ProposalKind::Bootstrap, 1), doctest::Contains("t=2"), NumericalError);
    CHECK_THROWS_WITH_AS(run_bpf(m, BlockPartition::contiguous(m.graph(), 2, 0), huge, 10, ProposalKind::Bootstrap, 1),
                         doctest::Contains("block=0"), NumericalError);
  }
  CHECK_THROWS_AS(run_pf(m, y, 0, ProposalKind::Bootstrap, 1), ConfigError);
}

TEST_CASE("bootstrap filter tracks the Kalman mean") {
  const LatticeModel m(build_lattice(1, 1), params(0.8, 0.0));
  Rng rng(6, StreamTag::Test, {24});
  const ParticleMatrix y = oracle::random_obs(rng, 5, 1);
  const auto kf = kalman_filter(m, y);
  const std::size_t R = 10;
  std::vector<std::vector<double>> est(5);
  for (std::size_t r = 0; r < R; ++r) {
    const ParticleCloud c = run_pf(m, y, 20000, ProposalKind::Bootstrap, 100 + r);
    for (std::size_t t = 0; t < 5; ++t) {
      std::vector<double> f(c.states[t].data(), c.states[t].data() + 20000);
      const VertexSet all{0};
      est[t].push_back(c.estimate(t, all, f));
    }
  }
  for (std::size_t t = 0; t < 5; ++t) {
    const auto ms = oracle::mean_sd(est[t]);
    CHECK(std::abs(ms.mean - kf.filtered[t].mean[0]) < 4 * ms.sd / std::sqrt(double(R)));
  }
}

TEST_CASE("blocked filter") {
  Rng rng(7, StreamTag::Test, {25});
  SUBCASE("one block is the standard filter") {
    for (auto prop : {ProposalKind::Bootstrap, ProposalKind::LocallyOptimal}) {
      const LatticeModel m(build_lattice(6, 1), params(0.5, 0.2));
      const ParticleMatrix y = oracle::random_obs(rng, 4, 6);
      const ParticleCloud a = run_pf(m, y, 64, prop, 9);
      const ParticleCloud b = run_bpf(m, BlockPartition::single(m.graph()), y, 64, prop, 9);
      CHECK(same(a.states, b.states));
      CHECK(same(a.log_weights, b.log_weights));
      CHECK(a.ancestors == b.ancestors);
    }
  }
  SUBCASE("decoupled vertices have no blocking bias") {
    const LatticeModel m(build_lattice(2, 1), params(0.7, 0.0));
    const ParticleMatrix y = oracle::random_obs(rng, 4, 2);
    const auto kf = kalman_filter(m, y);
    const auto part = BlockPartition::contiguous(m.graph(), 1, 0);
    const std::size_t R = 10, N = 5000;
    std::vector<std::vector<double>> est(8);
    for (std::size_t r = 0; r < R; ++r) {
      const ParticleCloud c = run_bpf(m, part, y, N, ProposalKind::Bootstrap, 50 + r);
      for (std::size_t t = 0; t < 4; ++t)
        for (std::size_t v = 0; v < 2; ++v) {
          std::vector<double> f(N);
          for (std::size_t n = 0; n < N; ++n) f[n] = c.states[t](n, v);
          const VertexSet K{v};
          est[t * 2 + v].push_back(c.estimate(t, K, f));
        }
    }
    for (std::size_t t = 0; t < 4; ++t)
      for (std::size_t v = 0; v < 2; ++v) {
        const auto ms = oracle::mean_sd(est[t * 2 + v]);
        CHECK(std::abs(ms.mean - kf.filtered[t].mean[v]) < 4 * ms.sd / std::sqrt(double(R)));
      }
  }
  SUBCASE("distant observations do not touch a block's weights") {
    const LatticeModel m(build_lattice(9, 1), params(0.5, 0.2));
    const auto part = BlockPartition::contiguous(m.graph(), 3, 0);
    const ParticleMatrix y = oracle::random_obs(rng, 4, 9);
    ParticleMatrix y2 = y;
    y2(3, 7) += 2.5;  // outside N({0,1,2}) = {0,1,2,3}
    const ParticleCloud a = run_bpf(m, part, y, 40, ProposalKind::LocallyOptimal, 4);
    const ParticleCloud b = run_bpf(m, part, y2, 40, ProposalKind::LocallyOptimal, 4);
    const VertexSet K = part.block(0);
    CHECK((a.scope_log_weights(3, K).array() == b.scope_log_weights(3, K).array()).all());
    CHECK((a.scope_log_weights(3, part.block(2)).array() != b.scope_log_weights(3, part.block(2)).array()).any());
  }
  SUBCASE("thread count does not change the output") {
    const LatticeModel m(build_lattice(12, 1), params(0.5, 0.2));
    const ParticleMatrix y = oracle::random_obs(rng, 4, 12);
    const auto part = BlockPartition::contiguous(m.graph(), 3, 1);
    set_num_threads(1);
    const ParticleCloud a = run_bpf(m, part, y, 100, ProposalKind::LocallyOptimal, 8);
    set_num_threads(4);
    const ParticleCloud b = run_bpf(m, part, y, 100, ProposalKind::LocallyOptimal, 8);
    set_num_threads(1);
    CHECK(same(a.states, b.states));
    CHECK(same(a.log_weights, b.log_weights));
    CHECK(a.ancestors == b.ancestors);
  }
}

TEST_CASE("normalising constant is unbiased") {
  const LatticeModel m(build_lattice(1, 1), params(0.8, 0.0));
  Rng rng(8, StreamTag::Test, {26});
  const ParticleMatrix y = oracle::random_obs(rng, 3, 1);
  const double Z = std::exp(kalman_filter(m, y).loglik);
  std::vector<double> zs;
  for (std::size_t r = 0; r < 200; ++r)
    zs.push_back(std::exp(run_pf(m, y, 128, ProposalKind::Bootstrap, 500 + r).log_normalizer()));
  const auto ms = oracle::mean_sd(zs);
  CHECK(std::abs(ms.mean - Z) < 3 * ms.sd / std::sqrt(200.0));
}

TEST_CASE("filter providers") {
  Rng rng(9, StreamTag::Test, {27});
  SUBCASE("IID exact draws match the Kalman mean") {
    const LatticeModel m(build_lattice(1, 1), params(0.6, 0.0));
    const ParticleMatrix y = oracle::random_obs(rng, 3, 1);
    const auto kf = kalman_filter(m, y);
    const std::size_t N = 50000;
    const auto f = make_filter_provider(FilterProviderKind::IidExactFilter, m, BlockPartition::single(m.graph()), y, N,
                                        ProposalKind::LocallyOptimal, 3);
    for (std::size_t t = 0; t < 3; ++t) {
      const double mean = f.states(t).mean();
      CHECK(std::abs(mean - kf.filtered[t].mean[0]) < 4 * std::sqrt(kf.filtered[t].cov(0, 0) / N));
      const VertexSet all{0};
      CHECK(f.weights(t, all).sum() == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
  SUBCASE("subsampling one block is multinomial resampling of the standard cloud") {
    const LatticeModel m(build_lattice(4, 1), params(0.5, 0.2));
    const ParticleMatrix y = oracle::random_obs(rng, 3, 4);
    const ParticleCloud c = run_pf(m, y, 50, ProposalKind::LocallyOptimal, 2);
    const auto sub = subsample_blocked(c, 77);
    for (std::size_t t = 0; t < 3; ++t) {
      const Eigen::VectorXd W = normalize_log_weights(c.global_log_weights(t), "");
      const auto cum = cumulative_sum(std::span<const double>(W.data(), 50));
      for (std::size_t n = 0; n < 50; ++n) {
        Rng r(77, StreamTag::Subsample, {t, 0, n});
        const auto idx = sample_from_cumulative(cum, r.uniform());
        CHECK((sub[t].row(n).array() == c.states[t].row(idx).array()).all());
      }
    }
  }
  SUBCASE("tilde draws with one block equal exact draws") {
    const LatticeModel m(build_lattice(5, 1), params(0.5, 0.2));
    const ParticleMatrix y = oracle::random_obs(rng, 3, 5);
    const auto single = BlockPartition::single(m.graph());
    const auto a = make_filter_provider(FilterProviderKind::IidExactFilter, m, single, y, 30, ProposalKind::Bootstrap, 5);
    const auto b = make_filter_provider(FilterProviderKind::IidTildeFilter, m, single, y, 30, ProposalKind::Bootstrap, 5);
    for (std::size_t t = 0; t < 3; ++t) CHECK((a.states(t) - b.states(t)).cwiseAbs().maxCoeff() < 1e-8);
  }
  SUBCASE("weight modes") {
    const LatticeModel m(build_lattice(6, 1), params(0.5, 0.2));
    const ParticleMatrix y = oracle::random_obs(rng, 3, 6);
    const auto part = BlockPartition::contiguous(m.graph(), 2, 1);
    const ParticleCloud c = run_bpf(m, part, y, 40, ProposalKind::LocallyOptimal, 1);
    const auto local = provider_from_cloud(FilterProviderKind::BpfMarginal, c);
    const auto global = provider_from_cloud(FilterProviderKind::StandardPF, c);
    const VertexSet scope{2, 3};
    CHECK((local.log_weights(1, scope) - normalized_log_weights(c.scope_log_weights(1, scope), "")).cwiseAbs().maxCoeff() == 0.0);
    CHECK((global.log_weights(1, scope) - normalized_log_weights(c.global_log_weights(1), "")).cwiseAbs().maxCoeff() == 0.0);
    const auto uni = provider_from_cloud(FilterProviderKind::BpfSubsampled, c, 3);
    CHECK(uni.weights(2, scope).isApproxToConstant(1.0 / 40));
    CHECK(is_marginal_kind(FilterProviderKind::BpfMarginal));
    CHECK_FALSE(is_marginal_kind(FilterProviderKind::BpfSubsampled));
  }
  SUBCASE("names round trip") {
    for (auto k : {FilterProviderKind::StandardPF, FilterProviderKind::BpfSubsampled, FilterProviderKind::IidExactFilter,
                   FilterProviderKind::IidTildeFilter, FilterProviderKind::LocalWeightPF, FilterProviderKind::BpfMarginal,
                   FilterProviderKind::IidExactMarginal, FilterProviderKind::IidTildeMarginal})
      CHECK(parse_filter_provider(to_string(k)) == k);
    CHECK(parse_proposal("bootstrap") == ProposalKind::Bootstrap);
    CHECK_THROWS_AS(parse_proposal("auxiliary"), ConfigError);
  }
}

}
