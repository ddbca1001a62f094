#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bps/spatial_model.hpp"
#include "bps/suff_stats.hpp"

namespace bps {

/**
 * Functional additive in time and space: the per-block increment at time t is
 * s_{t,K}(x_{t-1}, x_t) = sum_{v in K} psi_{t,v}(x_{t-1,N(v)}, x_{t,v}).
 *
 * States are passed as full-length rows (indexed by vertex); implementations
 * read only the coordinates their increment depends on. `prev` is null at t = 0.
 */
class AdditiveFunctional {
public:
  virtual ~AdditiveFunctional() = default;

  /// Number of tracked components.
  virtual std::size_t dim() const = 0;
  /// False when increments ignore the previous state.
  virtual bool uses_previous() const = 0;
  /// Components a block can contribute to; default all.
  virtual std::vector<std::size_t> active_components(std::span<const Vertex> block) const;
  /// Adds s_{t,K} to out[0..dim()).
  virtual void accumulate(std::size_t t, std::span<const Vertex> block, const double* prev,
                          const double* cur, double* out) const = 0;
  virtual std::string id() const = 0;
};

using FunctionalPtr = std::shared_ptr<const AdditiveFunctional>;

/// Sum of increments along one path of T full-length states.
Eigen::VectorXd evaluate_path(const AdditiveFunctional& f, std::span<const Vertex> block,
                              const std::vector<const double*>& path);

/// psi^(2,r): x_{t,v} * sum_{u in B_r(v)} x_{t-1,u}; one component.
class CrossLagFunctional final : public AdditiveFunctional {
public:
  CrossLagFunctional(SpatialGraph graph, std::size_t ring);
  std::size_t dim() const override { return 1; }
  bool uses_previous() const override { return true; }
  void accumulate(std::size_t t, std::span<const Vertex> block, const double* prev, const double* cur,
                  double* out) const override;
  std::string id() const override;

private:
  SpatialGraph graph_;
  std::size_t ring_;
};

/// One component per listed vertex: x_{t,v}, summed over all times or at one time only.
class ComponentMeanFunctional final : public AdditiveFunctional {
public:
  ComponentMeanFunctional(VertexSet vertices, std::optional<std::size_t> time = std::nullopt);
  std::size_t dim() const override { return vertices_.size(); }
  bool uses_previous() const override { return false; }
  std::vector<std::size_t> active_components(std::span<const Vertex> block) const override;
  void accumulate(std::size_t t, std::span<const Vertex> block, const double* prev, const double* cur,
                  double* out) const override;
  std::string id() const override;

private:
  VertexSet vertices_;
  std::vector<std::size_t> slot_;  // vertex -> component index, or npos
  std::optional<std::size_t> time_;
};

/// Smoothed sufficient statistics in SuffStats::to_flat order.
class SuffStatFunctional final : public AdditiveFunctional {
public:
  SuffStatFunctional(SpatialGraph graph, ParticleMatrix y);
  std::size_t dim() const override { return SuffStats::flat_size(graph_.radius()); }
  bool uses_previous() const override { return true; }
  void accumulate(std::size_t t, std::span<const Vertex> block, const double* prev, const double* cur,
                  double* out) const override;
  std::string id() const override { return "suffstats"; }

private:
  SpatialGraph graph_;
  ParticleMatrix y_;
};

/// Gradient of log p_v g_v (log m_v g_v at t = 0) with respect to theta.
class ScoreFunctional final : public AdditiveFunctional {
public:
  ScoreFunctional(const LatticeModel& model, ParticleMatrix y);
  std::size_t dim() const override { return graph_.radius() + 3; }
  bool uses_previous() const override { return true; }
  void accumulate(std::size_t t, std::span<const Vertex> block, const double* prev, const double* cur,
                  double* out) const override;
  std::string id() const override { return "score"; }

private:
  SpatialGraph graph_;
  ModelParams params_;
  double inv_var_x_;
  double inv_var_y_;
  ParticleMatrix y_;
};

/// c per (t, block) call; for normalisation checks.
class ConstantFunctional final : public AdditiveFunctional {
public:
  explicit ConstantFunctional(double c) : c_(c) {}
  std::size_t dim() const override { return 1; }
  bool uses_previous() const override { return false; }
  void accumulate(std::size_t, std::span<const Vertex>, const double*, const double*,
                  double* out) const override {
    out[0] += c_;
  }
  std::string id() const override { return "constant"; }

private:
  double c_;
};

}  // namespace bps
