#include <doctest.h>

#include <cmath>
#include <limits>

#include "bps/exact_oracle.hpp"
#include "bps/parallel.hpp"
#include "bps/particle_smoother.hpp"
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

/// E[sum_{t>=1} sum_v x_{t,v} sum_{|u-v|=r} x_{t-1,u}] from the dense posterior.
double exact_cross_lag(const ModelParams& p, const ParticleMatrix& y, std::size_t r) {
  const auto post = oracle::dense_posterior(p, y);
  const std::size_t V = y.cols(), T = y.rows();
  double s = 0.0;
  for (std::size_t t = 1; t < T; ++t)
    for (std::size_t v = 0; v < V; ++v)
      for (std::size_t u = 0; u < V; ++u) {
        if ((u > v ? u - v : v - u) != r) continue;
        const auto a = static_cast<Eigen::Index>(t * V + v), b = static_cast<Eigen::Index>((t - 1) * V + u);
        s += post.cov(a, b) + post.mean[a] * post.mean[b];
      }
  return s;
}

/// Smoothed mean of x_{t,v} summed over t, per vertex.
Eigen::VectorXd exact_component_sums(const ModelParams& p, const ParticleMatrix& y) {
  const auto post = oracle::dense_posterior(p, y);
  const std::size_t V = y.cols(), T = y.rows();
  Eigen::VectorXd s = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(V));
  for (std::size_t t = 0; t < T; ++t) s += post.mean.segment(static_cast<Eigen::Index>(t * V), static_cast<Eigen::Index>(V));
  return s;
}

VertexSet all_vertices(std::size_t V) {
  VertexSet out(V);
  for (std::size_t v = 0; v < V; ++v) out[v] = v;
  return out;
}

bool identical(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return a.size() == b.size() && (a.array() == b.array()).all();
}

}  // namespace

TEST_SUITE("particle_smoothing") {

TEST_CASE("backward kernel rows") {
  Rng rng(1, StreamTag::Test, {30});
  const LatticeModel m(build_lattice(5, 1), params(0.5, 0.2, 0.1, 0.0));
  const ParticleMatrix X = oracle::random_obs(rng, 6, 5, 1.0);
  Eigen::VectorXd lw(6);
  for (int n = 0; n < 6; ++n) lw[n] = rng.normal();
  lw = normalized_log_weights(lw, "");
  const Eigen::VectorXd x = oracle::random_obs(rng, 1, 5, 1.0).row(0).transpose();
  const std::span<const double> xs(x.data(), 5);

  SUBCASE("direct evaluation of W p(X, x)") {
    const Eigen::VectorXd row = backward_kernel_row(m, X, lw, xs);
    Eigen::VectorXd ref(6);
    for (int n = 0; n < 6; ++n)
      ref[n] = std::exp(lw[n] + m.log_transition(std::span<const double>(X.row(n).data(), 5), xs));
    ref /= ref.sum();
    CHECK((row - ref).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(row.sum() == doctest::Approx(1.0).epsilon(1e-14));
  }
  SUBCASE("full target reproduces the standard row") {
    const auto all = all_vertices(5);
    const Eigen::VectorXd a = backward_kernel_row(m, X, lw, xs);
    const Eigen::VectorXd b = blocked_backward_kernel_row(m, X, lw, xs, all);
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-14);
  }
  SUBCASE("single-vertex target uses one local density") {
    const VertexSet target{2};
    const Eigen::VectorXd row = blocked_backward_kernel_row(m, X, lw, xs, target);
    Eigen::VectorXd ref(6);
    for (int n = 0; n < 6; ++n) ref[n] = std::exp(lw[n] + m.log_transition(X.row(n).data(), 2, x[2]));
    ref /= ref.sum();
    CHECK((row - ref).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("no dynamics mixes perfectly") {
    const LatticeModel flat(build_lattice(5, 1), params(0.0, 0.0));
    const Eigen::VectorXd uniform = Eigen::VectorXd::Constant(6, -std::log(6.0));
    CHECK(backward_kernel_row(flat, X, uniform, xs).isApproxToConstant(1.0 / 6, 1e-14));
  }
  SUBCASE("point-mass weights") {
    Eigen::VectorXd point(2);
    point << 0.0, -std::numeric_limits<double>::infinity();
    const Eigen::VectorXd row = backward_kernel_row(m, X.topRows(2), point, xs);
    CHECK(row[0] == 1.0);
    CHECK(row[1] == 0.0);
    const Eigen::VectorXd dead = Eigen::VectorXd::Constant(2, -std::numeric_limits<double>::infinity());
    CHECK_THROWS_AS(backward_kernel_row(m, X.topRows(2), dead, xs), NumericalError);
  }
  CHECK_THROWS_AS(backward_kernel_row(m, X, lw, xs.first(3)), ConfigError);
}

TEST_CASE("standard smoothers on degenerate inputs") {
  Rng rng(2, StreamTag::Test, {31});
  const LatticeModel m(build_lattice(4, 1), params(0.5, 0.2));
  const ParticleMatrix y = oracle::random_obs(rng, 5, 4);
  const CrossLagFunctional f(m.graph(), 1);
  SUBCASE("one particle follows its own path") {
    const ParticleCloud c = run_pf(m, y, 1, ProposalKind::LocallyOptimal, 3);
    const auto filter = provider_from_cloud(FilterProviderKind::StandardPF, c);
    std::vector<const double*> path;
    for (std::size_t t = 0; t < 5; ++t) path.push_back(c.states[t].row(0).data());
    const auto all = all_vertices(4);
    const double ref = evaluate_path(f, all, path)[0];
    CHECK(forward_smoothing(m, filter, f).total[0] == doctest::Approx(ref).epsilon(1e-13));
    CHECK(backward_sampling(m, filter, f, 3, 1).total[0] == doctest::Approx(ref).epsilon(1e-13));
  }
  SUBCASE("constants integrate to c T") {
    const ParticleCloud c = run_pf(m, y, 60, ProposalKind::LocallyOptimal, 4);
    const auto filter = provider_from_cloud(FilterProviderKind::StandardPF, c);
    const ConstantFunctional k(2.5);
    CHECK(forward_smoothing(m, filter, k).total[0] == doctest::Approx(12.5).epsilon(1e-12));
    CHECK(backward_sampling(m, filter, k, 7, 1).total[0] == doctest::Approx(12.5).epsilon(1e-12));
    const auto part = BlockPartition::contiguous(m.graph(), 2, 1);
    const auto marg = provider_from_cloud(FilterProviderKind::LocalWeightPF, c);
    const auto fs = blocked_forward_smoothing(m, part, marg, k);
    CHECK(fs.per_block.size() == 2);
    for (const auto& b : fs.per_block) CHECK(b[0] == doctest::Approx(12.5).epsilon(1e-12));
    CHECK(fs.total[0] == doctest::Approx(25.0).epsilon(1e-12));
    CHECK(blocked_backward_sampling(m, part, marg, k, 4, 2).total[0] == doctest::Approx(25.0).epsilon(1e-12));
  }
  SUBCASE("backward sampling needs paths") {
    const ParticleCloud c = run_pf(m, y, 10, ProposalKind::Bootstrap, 4);
    CHECK_THROWS_AS(backward_sampling(m, provider_from_cloud(FilterProviderKind::StandardPF, c), f, 0, 1), ConfigError);
  }
}

TEST_CASE("smoothers agree with Kalman smoothing under exact filter draws") {
  Rng rng(3, StreamTag::Test, {32});
  const LatticeModel m(build_lattice(1, 0), [] {
    ModelParams p;
    p.a = Eigen::VectorXd::Constant(1, 0.8);
    return p;
  }());
  const ParticleMatrix y = oracle::random_obs(rng, 4, 1);
  const auto single = BlockPartition::single(m.graph());
  const ComponentMeanFunctional mean_f(VertexSet{0});
  const CrossLagFunctional lag_f(m.graph(), 0);
  const double mean_exact = exact_component_sums(m.params(), y)[0];
  const double lag_exact = exact_cross_lag(m.params(), y, 0);
  const std::size_t R = 10;
  std::vector<double> fs_mean, fs_lag, bs_mean, bs_lag;
  for (std::size_t r = 0; r < R; ++r) {
    const auto filter = make_filter_provider(FilterProviderKind::IidExactFilter, m, single, y, 2000,
                                             ProposalKind::Bootstrap, 40 + r);
    fs_mean.push_back(forward_smoothing(m, filter, mean_f).total[0]);
    fs_lag.push_back(forward_smoothing(m, filter, lag_f).total[0]);
    bs_mean.push_back(backward_sampling(m, filter, mean_f, 500, 90 + r).total[0]);
    bs_lag.push_back(backward_sampling(m, filter, lag_f, 500, 90 + r).total[0]);
  }
  auto within = [&](const std::vector<double>& xs, double exact) {
    const auto ms = oracle::mean_sd(xs);
    return std::abs(ms.mean - exact) < 4 * ms.sd / std::sqrt(double(R));
  };
  CHECK(within(fs_mean, mean_exact));
  CHECK(within(fs_lag, lag_exact));
  CHECK(within(bs_mean, mean_exact));
  CHECK(within(bs_lag, lag_exact));
}

TEST_CASE("blocked smoothing") {
  Rng rng(4, StreamTag::Test, {33});
  SUBCASE("decoupled blocks are unbiased") {
    const LatticeModel m(build_lattice(4, 1), params(0.6, 0.0));
    const ParticleMatrix y = oracle::random_obs(rng, 4, 4);
    const auto part = BlockPartition::contiguous(m.graph(), 2, 0);
    const ComponentMeanFunctional f(all_vertices(4));
    const Eigen::VectorXd exact = exact_component_sums(m.params(), y);
    const std::size_t R = 10;
    std::vector<std::vector<double>> est(4);
    for (std::size_t r = 0; r < R; ++r) {
      const auto filter = make_filter_provider(FilterProviderKind::IidExactMarginal, m, part, y, 4000,
                                               ProposalKind::Bootstrap, 60 + r);
      const Eigen::VectorXd e = blocked_forward_smoothing(m, part, filter, f).total;
      for (int v = 0; v < 4; ++v) est[v].push_back(e[v]);
    }
    for (int v = 0; v < 4; ++v) {
      const auto ms = oracle::mean_sd(est[v]);
      CHECK(std::abs(ms.mean - exact[v]) < 4 * ms.sd / std::sqrt(double(R)));
    }
  }
  SUBCASE("blocks only contribute their own components") {
    const LatticeModel m(build_lattice(6, 1), params(0.5, 0.2));
    const ParticleMatrix y = oracle::random_obs(rng, 3, 6);
    const auto part = BlockPartition::contiguous(m.graph(), 3, 1);
    const auto filter = make_filter_provider(FilterProviderKind::BpfMarginal, m, part, y, 50,
                                             ProposalKind::LocallyOptimal, 5);
    const ComponentMeanFunctional f(all_vertices(6));
    const auto est = blocked_forward_smoothing(m, part, filter, f);
    for (int v = 3; v < 6; ++v) CHECK(est.per_block[0][v] == 0.0);
    for (int v = 0; v < 3; ++v) CHECK(est.per_block[1][v] == 0.0);
  }
  SUBCASE("distant coordinates do not affect a block") {
    const LatticeModel m(build_lattice(12, 1), params(0.5, 0.2));
    const ParticleMatrix y = oracle::random_obs(rng, 4, 12);
    const auto part = BlockPartition::contiguous(m.graph(), 3, 1);
    const auto filter = make_filter_provider(FilterProviderKind::BpfMarginal, m, part, y, 40,
                                             ProposalKind::LocallyOptimal, 6);
    auto states = filter.all_states();
    // N(K^) for block 0 is {0..4}; perturb everything from 6 on
    for (auto& s : states) s.rightCols(6).array() += 3.0;
    const auto moved = filter.with_states(states);
    const CrossLagFunctional f(m.graph(), 1);
    const auto a = blocked_forward_smoothing(m, part, filter, f);
    const auto b = blocked_forward_smoothing(m, part, moved, f);
    CHECK(identical(a.per_block[0], b.per_block[0]));
    CHECK_FALSE(identical(a.per_block[3], b.per_block[3]));
    const auto c = blocked_backward_sampling(m, part, filter, f, 5, 11);
    const auto d = blocked_backward_sampling(m, part, moved, f, 5, 11);
    CHECK(identical(c.per_block[0], d.per_block[0]));
    CHECK(c.paths[0] == d.paths[0]);
  }
  SUBCASE("one block equals the standard smoother") {
    for (int rep = 0; rep < 5; ++rep) {
      const std::size_t V = 3 + static_cast<std::size_t>(rep);
      const LatticeModel m(build_lattice(V, 1), oracle::random_params(rng, 1));
      const ParticleMatrix y = oracle::random_obs(rng, 4, V);
      const auto filter = provider_from_cloud(FilterProviderKind::StandardPF,
                                              run_pf(m, y, 30, ProposalKind::LocallyOptimal, 7 + rep));
      const auto single = BlockPartition::single(m.graph());
      const CrossLagFunctional f(m.graph(), 1);
      CHECK(identical(forward_smoothing(m, filter, f).total, blocked_forward_smoothing(m, single, filter, f).total));
      const auto s = backward_sampling(m, filter, f, 6, 13);
      const auto b = blocked_backward_sampling(m, single, filter, f, 6, 13);
      CHECK(identical(s.total, b.total));
      CHECK(s.paths == b.paths);
    }
  }
  SUBCASE("thread count does not change the output") {
    const LatticeModel m(build_lattice(12, 1), params(0.5, 0.2));
    const ParticleMatrix y = oracle::random_obs(rng, 4, 12);
    const auto part = BlockPartition::contiguous(m.graph(), 3, 1);
    const auto filter = make_filter_provider(FilterProviderKind::BpfMarginal, m, part, y, 40,
                                             ProposalKind::LocallyOptimal, 6);
    const CrossLagFunctional f(m.graph(), 1);
    set_num_threads(1);
    const auto a = blocked_backward_sampling(m, part, filter, f, 8, 3);
    const auto c = blocked_forward_smoothing(m, part, filter, f);
    set_num_threads(4);
    const auto b = blocked_backward_sampling(m, part, filter, f, 8, 3);
    const auto d = blocked_forward_smoothing(m, part, filter, f);
    set_num_threads(1);
    CHECK(identical(a.total, b.total));
    CHECK(identical(c.total, d.total));
  }
}

TEST_CASE("backward sampling averages to forward smoothing") {
  Rng rng(5, StreamTag::Test, {34});
  const LatticeModel m(build_lattice(2, 1), params(0.5, 0.3));
  const ParticleMatrix y = oracle::random_obs(rng, 3, 2);
  const auto filter = provider_from_cloud(FilterProviderKind::StandardPF,
                                          run_pf(m, y, 50, ProposalKind::LocallyOptimal, 2));
  const CrossLagFunctional f(m.graph(), 1);
  const double fs = forward_smoothing(m, filter, f).total[0];
  const std::size_t R = 200;
  std::vector<double> bs;
  for (std::size_t r = 0; r < R; ++r) bs.push_back(backward_sampling(m, filter, f, 5, 1000 + r).total[0]);
  const auto ms = oracle::mean_sd(bs);
  CHECK(std::abs(ms.mean - fs) < 4 * ms.sd / std::sqrt(double(R)));
}

}
