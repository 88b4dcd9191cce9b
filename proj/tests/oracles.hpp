#pragma once

// Test-only reference computations. Each is written independently of the
// library routine it checks: plain loops, brute force, or finite differences.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "fta/rng.hpp"

namespace oracle {

using Vec = std::vector<double>;
using Grid = std::vector<std::vector<double>>;

inline double inner(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

inline Grid negative_inner_products(const std::vector<Vec>& xs, const std::vector<Vec>& ys) {
  Grid c(xs.size(), std::vector<double>(ys.size()));
  for (std::size_t i = 0; i < xs.size(); ++i) {
    for (std::size_t j = 0; j < ys.size(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < xs[i].size(); ++k) s -= xs[i][k] * ys[j][k];
      c[i][j] = s;
    }
  }
  return c;
}

inline double weighted_sum(const Grid& gamma, const Grid& cost) {
  double s = 0.0;
  for (std::size_t i = 0; i < gamma.size(); ++i) {
    for (std::size_t j = 0; j < gamma[i].size(); ++j) s += gamma[i][j] * cost[i][j];
  }
  return s;
}

inline Vec accumulate(const std::vector<Vec>& views, const Vec& weights) {
  Vec out(views.front().size(), 0.0);
  for (std::size_t i = 0; i < views.size(); ++i) {
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += weights[i] * views[i][k];
  }
  return out;
}

/// Minimum-cost perfect matching on a square matrix (Hungarian method with
/// row/column potentials, O(n^3)).
inline double hungarian_min_cost(const Grid& cost) {
  const std::size_t n = cost.size();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  double total = 0.0;
  for (std::size_t j = 1; j <= n; ++j) total += cost[p[j] - 1][j - 1];
  return total;
}

/// OT cost for marginals row_atoms/D and col_atoms/D: split each marginal
/// into D unit atoms and solve the D x D assignment problem.
inline double unit_atom_ot(const std::vector<int>& row_atoms, const std::vector<int>& col_atoms, const Grid& cost, int denominator) {
  std::vector<std::size_t> row_of, col_of;
  for (std::size_t i = 0; i < row_atoms.size(); ++i) row_of.insert(row_of.end(), row_atoms[i], i);
  for (std::size_t j = 0; j < col_atoms.size(); ++j) col_of.insert(col_of.end(), col_atoms[j], j);
  Grid atoms(row_of.size(), std::vector<double>(col_of.size()));
  for (std::size_t r = 0; r < row_of.size(); ++r) {
    for (std::size_t c = 0; c < col_of.size(); ++c) atoms[r][c] = cost[row_of[r]][col_of[c]];
  }
  return hungarian_min_cost(atoms) / denominator;
}

/// Distributes `denominator` unit atoms over `parts` bins at random (zeros allowed).
inline std::vector<int> random_atoms(std::size_t parts, int denominator, fta::Rng& rng) {
  std::vector<int> counts(parts, 0);
  for (int a = 0; a < denominator; ++a) ++counts[rng.index(parts)];
  return counts;
}

/// Dense affine (+ optional tanh hidden) forward pass and normalization.
inline Vec encoder_forward(const std::vector<Grid>& weights, const std::vector<Vec>& biases, const Vec& x, bool normalize) {
  Vec h = x;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    Vec z(weights[l].size());
    for (std::size_t i = 0; i < z.size(); ++i) {
      double s = biases[l][i];
      for (std::size_t j = 0; j < h.size(); ++j) s += weights[l][i][j] * h[j];
      z[i] = (l + 1 < weights.size()) ? std::tanh(s) : s;
    }
    h = std::move(z);
  }
  if (normalize) {
    double n = 0.0;
    for (double v : h) n += v * v;
    n = std::sqrt(n);
    for (double& v : h) v /= n;
  }
  return h;
}

/// Central difference (f(x+h) - f(x-h)) / 2h of f at a perturbable scalar.
inline double central_difference(double& param, double h, const std::function<double()>& f) {
  const double saved = param;
  param = saved + h;
  const double up = f();
  param = saved - h;
  const double down = f();
  param = saved;
  return (up - down) / (2.0 * h);
}

/// |a - b| / max(|a|, |b|, floor). The floor keeps coordinates whose true
/// derivative is ~0 from turning rounding noise into a large ratio.
inline double relative_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Scalar AdamW trace: returns the parameter after each step.
inline Vec adamw_scalar_trace(double p, const Vec& grads, double lr, double wd) {
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double m = 0.0, v = 0.0;
  Vec out;
  for (std::size_t t = 1; t <= grads.size(); ++t) {
    const double g = grads[t - 1];
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, static_cast<double>(t)));
    const double vh = v / (1 - std::pow(b2, static_cast<double>(t)));
    p = p - lr * mh / (std::sqrt(vh) + eps) - lr * wd * p;
    out.push_back(p);
  }
  return out;
}

struct Scored {
  std::string id;
  double score;
};

/// Full sort of every candidate by (score desc, id asc), then truncation.
inline std::vector<Scored> full_sort_topk(const std::vector<std::string>& ids, const std::vector<Vec>& vectors, const Vec& q,
                                          std::size_t k) {
  std::vector<Scored> all;
  for (std::size_t i = 0; i < ids.size(); ++i) all.push_back({ids[i], inner(vectors[i], q)});
  std::sort(all.begin(), all.end(), [](const Scored& a, const Scored& b) {
    return a.score != b.score ? a.score > b.score : a.id < b.id;
  });
  if (all.size() > k) all.resize(k);
  return all;
}

inline Vec random_vector(std::size_t d, fta::Rng& rng) {
  Vec v(d);
  for (double& x : v) x = rng.normal();
  return v;
}

inline Vec random_unit(std::size_t d, fta::Rng& rng) {
  Vec v = random_vector(d, rng);
  const double n = std::sqrt(inner(v, v));
  for (double& x : v) x /= n;
  return v;
}

inline std::vector<double> random_simplex(std::size_t n, fta::Rng& rng) {
  std::vector<double> w(n);
  double s = 0.0;
  for (double& x : w) {
    x = -std::log(1.0 - rng.uniform());
    s += x;
  }
  for (double& x : w) x /= s;
  return w;
}

}  // namespace oracle
