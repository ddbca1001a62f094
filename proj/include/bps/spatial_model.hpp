#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "bps/error.hpp"
#include "bps/rng.hpp"

namespace bps {

using Vertex = std::size_t;
using VertexSet = std::vector<Vertex>;

/// Row-major N x V storage: one particle (or one time slice) per row.
using ParticleMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/**
 * One-dimensional lattice with vertices 0..V-1 and metric d(u, v) = |u - v|.
 *
 * `radius` is the interaction radius of the model: N(v) = N_radius(v).
 * Neighbourhoods are truncated at the lattice edges.
 */
class SpatialGraph {
public:
  SpatialGraph(std::size_t num_vertices, std::size_t radius);

  std::size_t num_vertices() const { return num_vertices_; }
  std::size_t radius() const { return radius_; }

  std::size_t distance(Vertex u, Vertex v) const { return u > v ? u - v : v - u; }

  /// N_i(v): all vertices within distance i, ascending.
  VertexSet neighborhood(Vertex v, std::size_t i) const;
  /// N(v) = N_radius(v).
  VertexSet neighborhood(Vertex v) const { return neighborhood(v, radius_); }

  /// B_r(v): vertices at distance exactly r (0, 1 or 2 elements).
  VertexSet ring(Vertex v, std::size_t r) const;

  /// Inclusive range [lo, hi] of N_i(v).
  std::pair<Vertex, Vertex> neighborhood_range(Vertex v, std::size_t i) const;

private:
  std::size_t num_vertices_;
  std::size_t radius_;
};

SpatialGraph build_lattice(std::size_t num_vertices, std::size_t radius);

/// N_i(J) = union of N_i(v) over v in J; sorted and deduplicated.
VertexSet neighborhood_of_set(const SpatialGraph& graph, std::span<const Vertex> vertices,
                              std::size_t i);

/// dK = {v in K : N(v) not a subset of K}.
VertexSet block_boundary(const SpatialGraph& graph, std::span<const Vertex> block);

/// min over (u in J, v in K) of d(u, v); SIZE_MAX when either set is empty.
std::size_t set_distance(const SpatialGraph& graph, std::span<const Vertex> a,
                         std::span<const Vertex> b);

/// Index sets a blocked smoother needs for one block K.
struct BlockScope {
  VertexSet block;            ///< K
  VertexSet block_nbhd;       ///< N(K)
  VertexSet enlarged;         ///< K^ = N_i(K)
  VertexSet enlarged_nbhd;    ///< N(K^)
};

/**
 * Partition of the lattice into contiguous blocks, plus the enlargement
 * radius i that defines K^ = N_i(K).
 */
class BlockPartition {
public:
  BlockPartition(const SpatialGraph& graph, std::vector<VertexSet> blocks,
                 std::size_t enlargement_radius);

  /// Contiguous blocks of `block_size`; the last block absorbs any remainder.
  static BlockPartition contiguous(const SpatialGraph& graph, std::size_t block_size,
                                   std::size_t enlargement_radius);
  /// The trivial partition {V}.
  static BlockPartition single(const SpatialGraph& graph, std::size_t enlargement_radius = 0);

  std::size_t size() const { return blocks_.size(); }
  const std::vector<VertexSet>& blocks() const { return blocks_; }
  const VertexSet& block(std::size_t k) const { return blocks_[k]; }
  const BlockScope& scope(std::size_t k) const { return scopes_[k]; }
  std::size_t enlargement_radius() const { return enlargement_radius_; }
  std::size_t num_vertices() const { return num_vertices_; }

  /// Index of the block containing v.
  std::size_t block_of(Vertex v) const { return owner_[v]; }

private:
  std::vector<VertexSet> blocks_;
  std::vector<BlockScope> scopes_;
  std::vector<std::size_t> owner_;
  std::size_t enlargement_radius_;
  std::size_t num_vertices_;
};

/**
 * theta = (a_0, ..., a_b, log sigma_X, log sigma_Y).
 */
struct ModelParams {
  Eigen::VectorXd a;
  double log_sigma_x = 0.0;
  double log_sigma_y = 0.0;

  std::size_t radius() const { return static_cast<std::size_t>(a.size()) - 1; }
  double sigma_x() const;
  double sigma_y() const;

  /// Length b + 3 in the order above.
  Eigen::VectorXd to_vector() const;
  static ModelParams from_vector(const Eigen::VectorXd& theta);
};

/**
 * Linear-Gaussian lattice model:
 *   X_1 ~ N(0, I),  X_t | X_{t-1} = z ~ N(A z, sigma_X^2 I),  Y_t | X_t = x ~ N(x, sigma_Y^2 I)
 * with A symmetric banded Toeplitz, A[i][j] = a_{|i-j|} for |i-j| <= b.
 */
class LatticeModel {
public:
  LatticeModel(SpatialGraph graph, ModelParams params);

  const SpatialGraph& graph() const { return graph_; }
  const ModelParams& params() const { return params_; }
  std::size_t dim() const { return graph_.num_vertices(); }
  std::size_t radius() const { return graph_.radius(); }
  double sigma_x() const { return sigma_x_; }
  double sigma_y() const { return sigma_y_; }

  /// Dense V x V transition matrix A.
  Eigen::MatrixXd transition_matrix() const;

  /// mu_v(x) = sum_r a_r sum_{u in B_r(v)} x_u, reading x[0..V).
  double local_transition_mean(const double* x, Vertex v) const;
  double local_transition_mean(std::span<const double> x, Vertex v) const {
    return local_transition_mean(x.data(), v);
  }

  double log_initial(Vertex v, double x_v) const;
  double log_transition(const double* z, Vertex v, double x_v) const;
  double log_observation(double x_v, double y_v) const;

  /// Full-vector densities: sums of the per-vertex terms.
  double log_initial(std::span<const double> x) const;
  double log_transition(std::span<const double> z, std::span<const double> x) const;
  double log_observation(std::span<const double> x, std::span<const double> y) const;

  Eigen::VectorXd sample_initial(Rng& rng) const;
  Eigen::VectorXd sample_transition(std::span<const double> z, Rng& rng) const;
  Eigen::VectorXd sample_observation(std::span<const double> x, Rng& rng) const;

private:
  SpatialGraph graph_;
  ModelParams params_;
  double sigma_x_;
  double sigma_y_;
};

/// Normal log-density log N(x; mean, var).
double log_normal_pdf(double x, double mean, double var);

}  // namespace bps
