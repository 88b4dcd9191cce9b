#pragma once

// Discrete optimal transport between the empirical distributions of two view
// sets: cost matrices, couplings in the transport polytope, an exact solver,
// and the rank-one product coupling whose cost is a fused dot product.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fta/error.hpp"
#include "fta/linalg.hpp"
#include "fta/view_set.hpp"

namespace fta {

inline constexpr double kSimplexTolerance = 1e-9;

/// A point on the probability simplex.
class SimplexWeights {
 public:
  /// Throws Empty, NegativeEntry or NotNormalized.
  explicit SimplexWeights(std::vector<double> values) : values_(std::move(values)) {
    if (values_.empty()) throw Error(ErrorCode::Empty, "simplex weights are empty");
    double sum = 0.0;
    for (std::size_t i = 0; i < values_.size(); ++i) {
      if (!(values_[i] >= 0.0) || !std::isfinite(values_[i])) {
        throw Error(ErrorCode::NegativeEntry, "entry " + std::to_string(i) + " = " + std::to_string(values_[i]));
      }
      sum += values_[i];
    }
    if (std::abs(sum - 1.0) > kSimplexTolerance) {
      throw Error(ErrorCode::NotNormalized, "weights sum to " + std::to_string(sum));
    }
  }

  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  std::span<const double> values() const noexcept { return values_; }

  double sum() const {
    double s = 0.0;
    for (double x : values_) s += x;
    return s;
  }

  friend bool operator==(const SimplexWeights&, const SimplexWeights&) = default;

 private:
  std::vector<double> values_;
};

inline SimplexWeights validate_simplex(std::vector<double> values) { return SimplexWeights(std::move(values)); }

/// Cost of moving unit mass from image view i to text view j.
struct CostMatrix {
  Matrix entries;

  std::size_t rows() const noexcept { return entries.rows; }
  std::size_t cols() const noexcept { return entries.cols; }
  double operator()(std::size_t i, std::size_t j) const { return entries(i, j); }
};

/// A nonnegative matrix gamma together with the marginals (a, b) it must match.
struct Coupling {
  Matrix gamma;
  SimplexWeights row_marginal;
  SimplexWeights col_marginal;

  /// Largest deviation of a row/column sum from its marginal, or +inf if an
  /// entry is negative.
  double max_marginal_deviation() const {
    double worst = 0.0;
    for (double g : gamma.data) {
      if (g < 0.0) return std::numeric_limits<double>::infinity();
    }
    for (std::size_t i = 0; i < gamma.rows; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < gamma.cols; ++j) s += gamma(i, j);
      worst = std::max(worst, std::abs(s - row_marginal[i]));
    }
    for (std::size_t j = 0; j < gamma.cols; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < gamma.rows; ++i) s += gamma(i, j);
      worst = std::max(worst, std::abs(s - col_marginal[j]));
    }
    return worst;
  }

  bool is_feasible(double tol = kSimplexTolerance) const { return max_marginal_deviation() <= tol; }
};

/// C_ij = -<image_i, text_j>
inline CostMatrix negative_dot_cost(const ViewSet& image_views, const ViewSet& text_views) {
  require_same_dim(image_views.dim(), text_views.dim(), "image/text view dimension");
  CostMatrix cost{Matrix(image_views.size(), text_views.size())};
  for (std::size_t i = 0; i < image_views.size(); ++i) {
    for (std::size_t j = 0; j < text_views.size(); ++j) {
      cost.entries(i, j) = -dot(image_views[i], text_views[j]);
    }
  }
  return cost;
}

/// The product coupling gamma_ij = w_i v_j; always a member of Pi(w, v).
inline Coupling factorized_coupling(const SimplexWeights& w, const SimplexWeights& v) {
  Matrix gamma(w.size(), v.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    for (std::size_t j = 0; j < v.size(); ++j) gamma(i, j) = w[i] * v[j];
  }
  return Coupling{std::move(gamma), w, v};
}

inline double coupling_cost(const Coupling& coupling, const CostMatrix& cost) {
  if (!coupling.gamma.same_shape(cost.entries)) {
    throw Error(ErrorCode::DimensionMismatch, "coupling and cost matrix shapes differ");
  }
  double total = 0.0;
  for (std::size_t k = 0; k < cost.entries.data.size(); ++k) total += coupling.gamma.data[k] * cost.entries.data[k];
  return total;
}

struct OtSolution {
  Coupling coupling;
  double cost;
};

namespace detail {

// Min-cost flow on source -> rows -> cols -> sink, solved by successive
// shortest paths with Dijkstra on reduced costs. Arc costs must be >= 0.
class TransportFlow {
 public:
  TransportFlow(std::span<const double> supply, std::span<const double> demand, const Matrix& cost)
      : n_(supply.size()), m_(demand.size()), graph_(n_ + m_ + 2) {
    const std::size_t s = source(), t = sink();
    for (std::size_t i = 0; i < n_; ++i) add_arc(s, row(i), supply[i], 0.0);
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t j = 0; j < m_; ++j) {
        transport_arc_.push_back(add_arc(row(i), col(j), kInfinity, cost(i, j)));
      }
    }
    for (std::size_t j = 0; j < m_; ++j) add_arc(col(j), t, demand[j], 0.0);
  }

  /// Pushes up to `target` units; returns the amount actually sent.
  double run(double target) {
    const std::size_t nodes = graph_.size();
    std::vector<double> potential(nodes, 0.0);
    std::vector<double> dist(nodes);
    std::vector<std::size_t> prev_node(nodes), prev_arc(nodes);
    std::vector<bool> done(nodes);
    double sent = 0.0;
    const std::size_t max_rounds = 4 * (nodes + arc_count_) * (nodes + arc_count_);

    for (std::size_t round = 0; round < max_rounds && target - sent > kResidualEpsilon; ++round) {
      std::fill(dist.begin(), dist.end(), kInfinity);
      std::fill(done.begin(), done.end(), false);
      dist[source()] = 0.0;
      for (std::size_t iter = 0; iter < nodes; ++iter) {
        std::size_t u = nodes;
        for (std::size_t v = 0; v < nodes; ++v) {
          if (!done[v] && dist[v] < kInfinity && (u == nodes || dist[v] < dist[u])) u = v;
        }
        if (u == nodes) break;
        done[u] = true;
        for (std::size_t a = 0; a < graph_[u].size(); ++a) {
          const Arc& arc = graph_[u][a];
          if (arc.capacity <= kResidualEpsilon) continue;
          // Reduced costs are nonnegative up to rounding.
          const double reduced = std::max(0.0, arc.cost + potential[u] - potential[arc.to]);
          if (dist[u] + reduced < dist[arc.to]) {
            dist[arc.to] = dist[u] + reduced;
            prev_node[arc.to] = u;
            prev_arc[arc.to] = a;
          }
        }
      }
      if (dist[sink()] >= kInfinity) break;
      for (std::size_t v = 0; v < nodes; ++v) {
        if (dist[v] < kInfinity) potential[v] += dist[v];
      }

      double bottleneck = target - sent;
      for (std::size_t v = sink(); v != source(); v = prev_node[v]) {
        bottleneck = std::min(bottleneck, graph_[prev_node[v]][prev_arc[v]].capacity);
      }
      for (std::size_t v = sink(); v != source(); v = prev_node[v]) {
        Arc& arc = graph_[prev_node[v]][prev_arc[v]];
        arc.capacity -= bottleneck;
        graph_[v][arc.reverse].capacity += bottleneck;
      }
      sent += bottleneck;
    }
    return sent;
  }

  Matrix flows() const {
    Matrix gamma(n_, m_);
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t j = 0; j < m_; ++j) {
        const auto [from, index] = transport_arc_[i * m_ + j];
        const Arc& arc = graph_[from][index];
        gamma(i, j) = std::max(0.0, graph_[arc.to][arc.reverse].capacity);
      }
    }
    return gamma;
  }

 private:
  static constexpr double kInfinity = std::numeric_limits<double>::infinity();
  static constexpr double kResidualEpsilon = 1e-15;

  struct Arc {
    std::size_t to;
    std::size_t reverse;
    double capacity;
    double cost;
  };

  std::size_t source() const { return 0; }
  std::size_t row(std::size_t i) const { return 1 + i; }
  std::size_t col(std::size_t j) const { return 1 + n_ + j; }
  std::size_t sink() const { return 1 + n_ + m_; }

  std::pair<std::size_t, std::size_t> add_arc(std::size_t from, std::size_t to, double capacity, double cost) {
    graph_[from].push_back(Arc{to, graph_[to].size(), capacity, cost});
    graph_[to].push_back(Arc{from, graph_[from].size() - 1, 0.0, -cost});
    ++arc_count_;
    return {from, graph_[from].size() - 1};
  }

  std::size_t n_;
  std::size_t m_;
  std::vector<std::vector<Arc>> graph_;
  std::vector<std::pair<std::size_t, std::size_t>> transport_arc_;
  std::size_t arc_count_ = 0;
};

}  // namespace detail

/// Exact minimum of sum_ij gamma_ij C_ij over Pi(a, b). Costs are shifted by
/// -min(C) so every arc is nonnegative; the shift times the transported mass
/// is added back to the reported cost. Throws NumericalFailure if the flow
/// does not carry the full mass.
inline OtSolution exact_ot(const SimplexWeights& a, const SimplexWeights& b, const CostMatrix& cost) {
  require_same_dim(a.size(), cost.rows(), "row marginal vs cost rows");
  require_same_dim(b.size(), cost.cols(), "column marginal vs cost columns");
  if (!all_finite(cost.entries.data)) throw Error(ErrorCode::NumericalFailure, "non-finite cost entry");

  const double shift = *std::min_element(cost.entries.data.begin(), cost.entries.data.end());
  Matrix shifted = cost.entries;
  for (double& c : shifted.data) c -= shift;

  const double mass = std::min(a.sum(), b.sum());
  detail::TransportFlow flow(a.values(), b.values(), shifted);
  const double sent = flow.run(mass);
  if (std::abs(sent - mass) > kSimplexTolerance) {
    throw Error(ErrorCode::NumericalFailure,
                "flow carried " + std::to_string(sent) + " of " + std::to_string(mass) + " units");
  }

  Coupling coupling{flow.flows(), a, b};
  double total = 0.0;
  for (std::size_t k = 0; k < shifted.data.size(); ++k) total += coupling.gamma.data[k] * shifted.data[k];
  total += shift * sent;
  return OtSolution{std::move(coupling), total};
}

/// Raw-vector overload; marginal validation failures surface as InfeasibleMarginals.
inline OtSolution exact_ot(std::vector<double> a, std::vector<double> b, const CostMatrix& cost) {
  auto validated = [](std::vector<double> values, const char* which) {
    try {
      return SimplexWeights(std::move(values));
    } catch (const Error& e) {
      throw Error(ErrorCode::InfeasibleMarginals, std::string(which) + " marginal: " + e.what());
    }
  };
  return exact_ot(validated(std::move(a), "row"), validated(std::move(b), "column"), cost);
}

/// sum_i sum_j w_i v_j <image_i, text_j>; equal to the negated cost of the
/// product coupling under the negative-dot cost.
inline double bilinear_fused_similarity(const ViewSet& image_views, const ViewSet& text_views,
                                        const SimplexWeights& w, const SimplexWeights& v) {
  require_same_dim(image_views.dim(), text_views.dim(), "image/text view dimension");
  require_same_dim(w.size(), image_views.size(), "image weights vs views");
  require_same_dim(v.size(), text_views.size(), "text weights vs views");
  double total = 0.0;
  for (std::size_t i = 0; i < image_views.size(); ++i) {
    for (std::size_t j = 0; j < text_views.size(); ++j) {
      total += (w[i] * v[j]) * dot(image_views[i], text_views[j]);
    }
  }
  return total;
}

}  // namespace fta
