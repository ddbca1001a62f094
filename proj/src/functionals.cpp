#include "bps/functionals.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace bps {

std::vector<std::size_t> AdditiveFunctional::active_components(std::span<const Vertex>) const {
  std::vector<std::size_t> all(dim());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return all;
}

Eigen::VectorXd evaluate_path(const AdditiveFunctional& f, std::span<const Vertex> block,
                              const std::vector<const double*>& path) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(f.dim()));
  for (std::size_t t = 0; t < path.size(); ++t)
    f.accumulate(t, block, t > 0 ? path[t - 1] : nullptr, path[t], out.data());
  return out;
}

namespace {

double ring_sum(const SpatialGraph& g, const double* x, Vertex v, std::size_t r) {
  if (r == 0) return x[v];
  double s = 0.0;
  if (v >= r) s += x[v - r];
  if (v + r < g.num_vertices()) s += x[v + r];
  return s;
}

}  // namespace

CrossLagFunctional::CrossLagFunctional(SpatialGraph graph, std::size_t ring)
    : graph_(std::move(graph)), ring_(ring) {}

void CrossLagFunctional::accumulate(std::size_t t, std::span<const Vertex> block, const double* prev,
                                    const double* cur, double* out) const {
  if (t == 0) return;
  double s = 0.0;
  for (Vertex v : block) s += cur[v] * ring_sum(graph_, prev, v, ring_);
  out[0] += s;
}

std::string CrossLagFunctional::id() const { return "cross_lag_" + std::to_string(ring_); }

ComponentMeanFunctional::ComponentMeanFunctional(VertexSet vertices, std::optional<std::size_t> time)
    : vertices_(std::move(vertices)), time_(time) {
  if (vertices_.empty()) throw ConfigError("component functional needs at least one vertex");
  Vertex hi = 0;
  for (Vertex v : vertices_) hi = std::max(hi, v);
  slot_.assign(hi + 1, std::numeric_limits<std::size_t>::max());
  for (std::size_t j = 0; j < vertices_.size(); ++j) slot_[vertices_[j]] = j;
}

std::vector<std::size_t> ComponentMeanFunctional::active_components(std::span<const Vertex> block) const {
  std::vector<std::size_t> out;
  for (Vertex v : block)
    if (v < slot_.size() && slot_[v] != std::numeric_limits<std::size_t>::max()) out.push_back(slot_[v]);
  std::sort(out.begin(), out.end());
  return out;
}

void ComponentMeanFunctional::accumulate(std::size_t t, std::span<const Vertex> block, const double*,
                                         const double* cur, double* out) const {
  if (time_ && *time_ != t) return;
  for (Vertex v : block)
    if (v < slot_.size() && slot_[v] != std::numeric_limits<std::size_t>::max()) out[slot_[v]] += cur[v];
}

std::string ComponentMeanFunctional::id() const {
  if (vertices_.size() == 1)
    return "x_" + (time_ ? std::to_string(*time_) + "_" : std::string()) + std::to_string(vertices_[0]);
  return time_ ? "x_" + std::to_string(*time_) : "x_sum";
}

SuffStatFunctional::SuffStatFunctional(SpatialGraph graph, ParticleMatrix y)
    : graph_(std::move(graph)), y_(std::move(y)) {
  if (y_.cols() != static_cast<Eigen::Index>(graph_.num_vertices()))
    throw ConfigError("observation width does not match the graph");
}

void SuffStatFunctional::accumulate(std::size_t t, std::span<const Vertex> block, const double* prev,
                                    const double* cur, double* out) const {
  const std::size_t nb = graph_.radius() + 1;
  double* t1 = out;
  double* t2 = out + nb * nb;
  double* rest = t2 + nb;  // t3, t3_first, t4
  const auto ti = static_cast<Eigen::Index>(t);
  for (Vertex v : block) {
    const double x = cur[v];
    rest[0] += x * x;
    if (t == 0) rest[1] += x * x;
    rest[2] += x * y_(ti, static_cast<Eigen::Index>(v));
    if (t == 0) continue;
    double rs[16];
    double* sums = nb <= 16 ? rs : nullptr;
    std::vector<double> heap;
    if (!sums) {
      heap.resize(nb);
      sums = heap.data();
    }
    for (std::size_t r = 0; r < nb; ++r) sums[r] = ring_sum(graph_, prev, v, r);
    for (std::size_t r = 0; r < nb; ++r) {
      for (std::size_t q = 0; q < nb; ++q) t1[r * nb + q] += sums[q] * sums[r];
      t2[r] += x * sums[r];
    }
  }
}

ScoreFunctional::ScoreFunctional(const LatticeModel& model, ParticleMatrix y)
    : graph_(model.graph()),
      params_(model.params()),
      inv_var_x_(1.0 / (model.sigma_x() * model.sigma_x())),
      inv_var_y_(1.0 / (model.sigma_y() * model.sigma_y())),
      y_(std::move(y)) {
  if (y_.cols() != static_cast<Eigen::Index>(graph_.num_vertices()))
    throw ConfigError("observation width does not match the model");
}

void ScoreFunctional::accumulate(std::size_t t, std::span<const Vertex> block, const double* prev,
                                 const double* cur, double* out) const {
  const std::size_t nb = graph_.radius() + 1;
  const auto ti = static_cast<Eigen::Index>(t);
  for (Vertex v : block) {
    const double x = cur[v];
    const double ry = y_(ti, static_cast<Eigen::Index>(v)) - x;
    out[nb + 1] += ry * ry * inv_var_y_ - 1.0;
    if (t == 0) continue;
    double mean = 0.0;
    for (std::size_t r = 0; r < nb; ++r) mean += params_.a[static_cast<Eigen::Index>(r)] * ring_sum(graph_, prev, v, r);
    const double rx = x - mean;
    for (std::size_t r = 0; r < nb; ++r) out[r] += rx * inv_var_x_ * ring_sum(graph_, prev, v, r);
    out[nb] += rx * rx * inv_var_x_ - 1.0;
  }
}

}  // namespace bps
