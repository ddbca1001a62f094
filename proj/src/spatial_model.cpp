#include "bps/spatial_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace bps {

SpatialGraph::SpatialGraph(std::size_t num_vertices, std::size_t radius)
    : num_vertices_(num_vertices), radius_(radius) {
  if (num_vertices == 0) throw ConfigError("lattice needs at least one vertex");
}

std::pair<Vertex, Vertex> SpatialGraph::neighborhood_range(Vertex v, std::size_t i) const {
  Vertex lo = v >= i ? v - i : 0;
  Vertex hi = std::min(num_vertices_ - 1, v + i);
  return {lo, hi};
}

VertexSet SpatialGraph::neighborhood(Vertex v, std::size_t i) const {
  auto [lo, hi] = neighborhood_range(v, i);
  VertexSet out;
  out.reserve(hi - lo + 1);
  for (Vertex u = lo; u <= hi; ++u) out.push_back(u);
  return out;
}

VertexSet SpatialGraph::ring(Vertex v, std::size_t r) const {
  if (r == 0) return {v};
  VertexSet out;
  if (v >= r) out.push_back(v - r);
  if (v + r < num_vertices_) out.push_back(v + r);
  return out;
}

SpatialGraph build_lattice(std::size_t num_vertices, std::size_t radius) {
  return SpatialGraph(num_vertices, radius);
}

VertexSet neighborhood_of_set(const SpatialGraph& graph, std::span<const Vertex> vertices,
                              std::size_t i) {
  std::vector<char> mark(graph.num_vertices(), 0);
  for (Vertex v : vertices) {
    if (v >= graph.num_vertices()) throw ConfigError("vertex " + std::to_string(v) + " out of range");
    auto [lo, hi] = graph.neighborhood_range(v, i);
    for (Vertex u = lo; u <= hi; ++u) mark[u] = 1;
  }
  VertexSet out;
  for (Vertex u = 0; u < graph.num_vertices(); ++u)
    if (mark[u]) out.push_back(u);
  return out;
}

VertexSet block_boundary(const SpatialGraph& graph, std::span<const Vertex> block) {
  std::vector<char> in_block(graph.num_vertices(), 0);
  for (Vertex v : block) in_block[v] = 1;
  VertexSet out;
  for (Vertex v : block) {
    auto [lo, hi] = graph.neighborhood_range(v, graph.radius());
    for (Vertex u = lo; u <= hi; ++u) {
      if (!in_block[u]) {
        out.push_back(v);
        break;
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::size_t set_distance(const SpatialGraph& graph, std::span<const Vertex> a,
                         std::span<const Vertex> b) {
  std::size_t best = std::numeric_limits<std::size_t>::max();
  for (Vertex u : a)
    for (Vertex v : b) best = std::min(best, graph.distance(u, v));
  return best;
}

BlockPartition::BlockPartition(const SpatialGraph& graph, std::vector<VertexSet> blocks,
                               std::size_t enlargement_radius)
    : blocks_(std::move(blocks)),
      owner_(graph.num_vertices(), std::numeric_limits<std::size_t>::max()),
      enlargement_radius_(enlargement_radius),
      num_vertices_(graph.num_vertices()) {
  for (std::size_t k = 0; k < blocks_.size(); ++k) {
    auto& block = blocks_[k];
    if (block.empty()) throw ConfigError("empty block in partition");
    std::sort(block.begin(), block.end());
    for (Vertex v : block) {
      if (v >= num_vertices_) throw ConfigError("block vertex out of range");
      if (owner_[v] != std::numeric_limits<std::size_t>::max())
        throw ConfigError("blocks overlap at vertex " + std::to_string(v));
      owner_[v] = k;
    }
  }
  for (Vertex v = 0; v < num_vertices_; ++v)
    if (owner_[v] == std::numeric_limits<std::size_t>::max())
      throw ConfigError("vertex " + std::to_string(v) + " not covered by any block");

  scopes_.reserve(blocks_.size());
  for (const auto& block : blocks_) {
    BlockScope s;
    s.block = block;
    s.block_nbhd = neighborhood_of_set(graph, block, graph.radius());
    s.enlarged = neighborhood_of_set(graph, block, enlargement_radius);
    s.enlarged_nbhd = neighborhood_of_set(graph, s.enlarged, graph.radius());
    scopes_.push_back(std::move(s));
  }
}

BlockPartition BlockPartition::contiguous(const SpatialGraph& graph, std::size_t block_size,
                                          std::size_t enlargement_radius) {
  if (block_size == 0) throw ConfigError("block size must be positive");
  const std::size_t V = graph.num_vertices();
  const std::size_t count = std::max<std::size_t>(1, V / block_size);
  std::vector<VertexSet> blocks(count);
  for (Vertex v = 0; v < V; ++v) blocks[std::min(count - 1, v / block_size)].push_back(v);
  return BlockPartition(graph, std::move(blocks), enlargement_radius);
}

BlockPartition BlockPartition::single(const SpatialGraph& graph, std::size_t enlargement_radius) {
  return contiguous(graph, graph.num_vertices(), enlargement_radius);
}

double ModelParams::sigma_x() const { return std::exp(log_sigma_x); }
double ModelParams::sigma_y() const { return std::exp(log_sigma_y); }

Eigen::VectorXd ModelParams::to_vector() const {
  Eigen::VectorXd theta(a.size() + 2);
  theta.head(a.size()) = a;
  theta[a.size()] = log_sigma_x;
  theta[a.size() + 1] = log_sigma_y;
  return theta;
}

ModelParams ModelParams::from_vector(const Eigen::VectorXd& theta) {
  if (theta.size() < 3) throw ConfigError("parameter vector needs length >= 3 (b + 3)");
  ModelParams p;
  const auto nb = theta.size() - 2;
  p.a = theta.head(nb);
  p.log_sigma_x = theta[nb];
  p.log_sigma_y = theta[nb + 1];
  return p;
}

LatticeModel::LatticeModel(SpatialGraph graph, ModelParams params)
    : graph_(graph), params_(std::move(params)) {
  if (params_.a.size() != static_cast<Eigen::Index>(graph_.radius() + 1))
    throw ConfigError("expected " + std::to_string(graph_.radius() + 1) +
                      " transition coefficients, got " + std::to_string(params_.a.size()));
  if (!params_.a.allFinite() || !std::isfinite(params_.log_sigma_x) ||
      !std::isfinite(params_.log_sigma_y))
    throw ConfigError("non-finite model parameters");
  sigma_x_ = params_.sigma_x();
  sigma_y_ = params_.sigma_y();
}

Eigen::MatrixXd LatticeModel::transition_matrix() const {
  const auto V = static_cast<Eigen::Index>(dim());
  const auto b = static_cast<Eigen::Index>(radius());
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(V, V);
  for (Eigen::Index i = 0; i < V; ++i)
    for (Eigen::Index j = std::max<Eigen::Index>(0, i - b); j <= std::min(V - 1, i + b); ++j)
      A(i, j) = params_.a[std::abs(i - j)];
  return A;
}

double LatticeModel::local_transition_mean(const double* x, Vertex v) const {
  const auto& a = params_.a;
  double mu = a[0] * x[v];
  const std::size_t V = dim();
  for (std::size_t r = 1; r <= radius(); ++r) {
    double s = 0.0;
    if (v >= r) s += x[v - r];
    if (v + r < V) s += x[v + r];
    mu += a[static_cast<Eigen::Index>(r)] * s;
  }
  return mu;
}

double log_normal_pdf(double x, double mean, double var) {
  const double d = x - mean;
  return -0.5 * (std::log(2.0 * std::numbers::pi * var) + d * d / var);
}

double LatticeModel::log_initial(Vertex, double x_v) const { return log_normal_pdf(x_v, 0.0, 1.0); }

double LatticeModel::log_transition(const double* z, Vertex v, double x_v) const {
  return log_normal_pdf(x_v, local_transition_mean(z, v), sigma_x_ * sigma_x_);
}

double LatticeModel::log_observation(double x_v, double y_v) const {
  return log_normal_pdf(y_v, x_v, sigma_y_ * sigma_y_);
}

double LatticeModel::log_initial(std::span<const double> x) const {
  double s = 0.0;
  for (Vertex v = 0; v < dim(); ++v) s += log_initial(v, x[v]);
  return s;
}

double LatticeModel::log_transition(std::span<const double> z, std::span<const double> x) const {
  double s = 0.0;
  for (Vertex v = 0; v < dim(); ++v) s += log_transition(z.data(), v, x[v]);
  return s;
}

double LatticeModel::log_observation(std::span<const double> x, std::span<const double> y) const {
  double s = 0.0;
  for (Vertex v = 0; v < dim(); ++v) s += log_observation(x[v], y[v]);
  return s;
}

Eigen::VectorXd LatticeModel::sample_initial(Rng& rng) const {
  Eigen::VectorXd x(dim());
  for (Eigen::Index v = 0; v < x.size(); ++v) x[v] = rng.normal();
  return x;
}

Eigen::VectorXd LatticeModel::sample_transition(std::span<const double> z, Rng& rng) const {
  Eigen::VectorXd x(dim());
  for (Vertex v = 0; v < dim(); ++v)
    x[static_cast<Eigen::Index>(v)] = rng.normal(local_transition_mean(z.data(), v), sigma_x_);
  return x;
}

Eigen::VectorXd LatticeModel::sample_observation(std::span<const double> x, Rng& rng) const {
  Eigen::VectorXd y(dim());
  for (Vertex v = 0; v < dim(); ++v) y[static_cast<Eigen::Index>(v)] = rng.normal(x[v], sigma_y_);
  return y;
}

}  // namespace bps
