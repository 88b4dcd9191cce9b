#pragma once

// Fused embeddings: a simplex-weighted sum of the views of one modality, the
// primary-emphasis weight scheme, and text/image pooling for indexing.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "fta/error.hpp"
#include "fta/linalg.hpp"
#include "fta/transport.hpp"
#include "fta/view_set.hpp"

namespace fta {

inline constexpr double kDefaultAlpha = 0.6;
inline constexpr double kZeroNormThreshold = 1e-12;

/// Whether a fused vector is rescaled to unit Euclidean norm.
enum class FusionMode { raw, normalized };

/// Fixed weight alpha on the primary view; the rest is spread evenly.
class WeightScheme {
 public:
  explicit WeightScheme(double alpha = kDefaultAlpha) : alpha_(alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) {
      throw Error(ErrorCode::ConfigInvalid, "alpha must lie in (0, 1), got " + std::to_string(alpha));
    }
  }

  double alpha() const noexcept { return alpha_; }

 private:
  double alpha_;
};

/// [alpha, (1-alpha)/(n-1), ...]; a single view gets all the mass.
inline SimplexWeights design_weights(std::size_t view_count, const WeightScheme& scheme) {
  if (view_count == 0) throw Error(ErrorCode::Empty, "view count must be positive");
  if (view_count == 1) return SimplexWeights({1.0});
  const double alpha = scheme.alpha();
  std::vector<double> w(view_count, (1.0 - alpha) / static_cast<double>(view_count - 1));
  w[0] = alpha;
  return SimplexWeights(std::move(w));
}

/// Divides v by its norm in place; ZeroNorm below 1e-12.
inline void normalize_in_place(std::span<double> v) {
  const double n = norm(v);
  if (!(n >= kZeroNormThreshold)) throw Error(ErrorCode::ZeroNorm, "cannot normalize vector of norm " + std::to_string(n));
  for (double& x : v) x /= n;
}

inline Embedding normalized(Embedding v) {
  normalize_in_place(v);
  return v;
}

/// sum_i weights_i * views_i over a plain list of equal-length vectors.
inline Embedding fuse(std::span<const Embedding> views, std::span<const double> weights, FusionMode mode) {
  require_same_dim(views.size(), weights.size(), "weights vs views");
  if (views.empty()) throw Error(ErrorCode::Empty, "nothing to fuse");
  Embedding out(views.front().size(), 0.0);
  for (std::size_t i = 0; i < views.size(); ++i) axpy(weights[i], views[i], out);
  if (mode == FusionMode::normalized) normalize_in_place(out);
  return out;
}

inline Embedding fuse(const ViewSet& views, const SimplexWeights& weights, FusionMode mode) {
  return fuse(std::span<const Embedding>(views.views()), weights.values(), mode);
}

/// alpha * primary + (1 - alpha) * auxiliary; same arithmetic as fuse over
/// the two-view set with weights [alpha, 1 - alpha].
inline Embedding fuse_rolled(const Embedding& primary, const Embedding& auxiliary, const WeightScheme& scheme,
                             FusionMode mode) {
  require_same_dim(primary.size(), auxiliary.size(), "primary vs auxiliary view");
  const Embedding pair[2] = {primary, auxiliary};
  const double weights[2] = {scheme.alpha(), 1.0 - scheme.alpha()};
  return fuse(pair, weights, mode);
}

/// Element-wise mean of the text and image fused vectors.
inline Embedding fuse_multimodal(const Embedding& text_fused, const Embedding& image_fused, FusionMode mode) {
  require_same_dim(text_fused.size(), image_fused.size(), "text vs image fused embedding");
  Embedding out(text_fused.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = (text_fused[k] + image_fused[k]) * 0.5;
  if (mode == FusionMode::normalized) normalize_in_place(out);
  return out;
}

}  // namespace fta
