#pragma once

// Rolling-sampling contrastive training. Each step encodes the primary view
// and one uniformly drawn auxiliary view per modality, fuses them with the
// fixed primary weight, and applies symmetric in-batch InfoNCE.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "fta/datagen.hpp"
#include "fta/encoder.hpp"
#include "fta/error.hpp"
#include "fta/fusion.hpp"
#include "fta/linalg.hpp"
#include "fta/rng.hpp"
#include "fta/transport.hpp"

namespace fta {

inline constexpr double kDefaultTemperature = 0.07;

enum class TrainMode {
  multiview,   // primary + one sampled auxiliary per modality
  singleview,  // primary views only, no sampling
};

enum class AuxSampling {
  independent,  // fresh uniform draw every step
  round_robin,  // each listing cycles through its auxiliaries across epochs
};

struct TrainConfig {
  WeightScheme alpha{kDefaultAlpha};
  double temperature = kDefaultTemperature;
  std::size_t batch_size = 32;
  std::size_t grad_accum = 1;
  double learning_rate = 1e-3;
  double weight_decay = 0.0;
  std::size_t epochs = 5;
  std::uint64_t seed = 0;
  TrainMode mode = TrainMode::multiview;
  AuxSampling sampling = AuxSampling::independent;
  std::size_t output_dim = 16;
  std::optional<std::size_t> hidden_dim;

  void validate() const {
    auto fail = [](const std::string& msg) { throw Error(ErrorCode::ConfigInvalid, msg); };
    if (!(temperature > 0.0) || !std::isfinite(temperature)) fail("temperature must be > 0");
    if (batch_size == 0) fail("batch_size must be >= 1");
    if (grad_accum == 0) fail("grad_accum must be >= 1");
    if (!(learning_rate > 0.0)) fail("learning_rate must be > 0");
    if (!(weight_decay >= 0.0)) fail("weight_decay must be >= 0");
    if (output_dim == 0 || (hidden_dim && *hidden_dim == 0)) fail("encoder dims must be >= 1");
  }

  /// Batch 128, accumulation 4, lr 1e-5, 30 epochs.
  static TrainConfig full_scale_preset() {
    TrainConfig cfg;
    cfg.batch_size = 128;
    cfg.grad_accum = 4;
    cfg.learning_rate = 1e-5;
    cfg.epochs = 30;
    return cfg;
  }
};

/// Auxiliary view index (>= 1), or nullopt when the modality has one view.
using AuxIndex = std::optional<std::size_t>;

struct AuxPair {
  AuxIndex image;
  AuxIndex text;
  friend bool operator==(const AuxPair&, const AuxPair&) = default;
};

/// Independent uniform auxiliary draws for each modality.
inline AuxPair sample_rolling(std::size_t image_views, std::size_t text_views, Rng& rng) {
  AuxPair out;
  if (image_views > 1) out.image = 1 + static_cast<std::size_t>(rng.index(image_views - 1));
  if (text_views > 1) out.text = 1 + static_cast<std::size_t>(rng.index(text_views - 1));
  return out;
}

inline AuxPair sample_rolling(const Listing& listing, Rng& rng) {
  return sample_rolling(listing.image_views.size(), listing.text_views.size(), rng);
}

struct BatchSample {
  std::size_t listing_index = 0;
  std::string listing_id;
  AuxPair aux;
  Embedding fused_image;  // unit norm
  Embedding fused_text;   // unit norm
  double image_norm = 1.0;  // norm of the fused image vector before renormalization
  double text_norm = 1.0;
};

struct Batch {
  std::vector<BatchSample> samples;
  std::uint64_t rolling_draws = 0;  // sample_rolling invocations
};

namespace detail {

inline void fuse_modality(const Encoder& encoder, const std::vector<FeatureVector>& views, AuxIndex aux,
                          const WeightScheme& scheme, Embedding& fused, double& pre_norm) {
  Embedding primary = encoder.encode(views.front());
  if (aux) {
    const Embedding auxiliary = encoder.encode(views.at(*aux));
    fused = fuse_rolled(primary, auxiliary, scheme, FusionMode::raw);
  } else {
    fused = std::move(primary);
  }
  pre_norm = norm(fused);
  normalize_in_place(fused);
}

inline std::size_t round_robin_aux(std::size_t view_count, std::size_t listing_index, std::size_t epoch,
                                   std::uint64_t seed, std::uint64_t tag) {
  const std::uint64_t offset = derive_seed(seed, tag + listing_index);
  return 1 + static_cast<std::size_t>((offset + epoch) % (view_count - 1));
}

}  // namespace detail

/// Encodes and fuses one listing for a fixed auxiliary choice. Renormalized.
inline BatchSample make_sample(const Listing& listing, std::size_t listing_index, AuxPair aux, const DualEncoder& encoders,
                               const WeightScheme& scheme) {
  BatchSample s;
  s.listing_index = listing_index;
  s.listing_id = listing.id;
  s.aux = aux;
  detail::fuse_modality(encoders.image, listing.image_views, aux.image, scheme, s.fused_image, s.image_norm);
  detail::fuse_modality(encoders.text, listing.text_views, aux.text, scheme, s.fused_text, s.text_norm);
  return s;
}

/// Builds one micro-batch over distinct listings. Exactly two forward calls
/// per modality for a listing with auxiliaries, one otherwise.
inline Batch build_batch(std::span<const Listing> listings, std::span<const std::size_t> batch_indices,
                         const DualEncoder& encoders, const TrainConfig& config, Rng& rng, std::size_t epoch = 0) {
  Batch batch;
  batch.samples.reserve(batch_indices.size());
  for (std::size_t idx : batch_indices) {
    const Listing& listing = listings[idx];
    if (listing.image_views.empty() || listing.text_views.empty()) {
      throw Error(ErrorCode::TooFewViews, "listing " + listing.id + " lacks a view");
    }
    AuxPair aux;
    if (config.mode == TrainMode::multiview) {
      if (config.sampling == AuxSampling::independent) {
        aux = sample_rolling(listing, rng);
        ++batch.rolling_draws;
      } else {
        if (listing.image_views.size() > 1) {
          aux.image = detail::round_robin_aux(listing.image_views.size(), idx, epoch, config.seed, 0x49000000);
        }
        if (listing.text_views.size() > 1) {
          aux.text = detail::round_robin_aux(listing.text_views.size(), idx, epoch, config.seed, 0x54000000);
        }
      }
    }
    batch.samples.push_back(make_sample(listing, idx, aux, encoders, config.alpha));
  }
  return batch;
}

struct InfoNceResult {
  double loss = 0.0;
  Matrix similarity;  // S_kl = <I_k, T_l> / tau
  Matrix row_softmax;  // softmax over l for each row k
  Matrix col_softmax;  // softmax over k for each column l
};

/// Symmetric in-batch InfoNCE:
///   loss = -(1/2B) sum_k [log softmax_row(S)_kk + log softmax_col(S)_kk].
inline InfoNceResult clip_infonce_loss(std::span<const Embedding> fused_images, std::span<const Embedding> fused_texts,
                                       double temperature) {
  require_same_dim(fused_images.size(), fused_texts.size(), "image vs text batch size");
  if (fused_images.empty()) throw Error(ErrorCode::Empty, "empty batch");
  if (!(temperature > 0.0)) throw Error(ErrorCode::ConfigInvalid, "temperature must be > 0");
  const std::size_t b = fused_images.size();
  InfoNceResult r{0.0, Matrix(b, b), Matrix(b, b), Matrix(b, b)};
  for (std::size_t k = 0; k < b; ++k) {
    for (std::size_t l = 0; l < b; ++l) r.similarity(k, l) = dot(fused_images[k], fused_texts[l]) / temperature;
  }
  // Row and column log-sum-exp, shifted by the max for stability.
  auto log_sum_exp = [&](std::size_t fixed, bool over_columns) {
    auto at = [&](std::size_t x) { return over_columns ? r.similarity(fixed, x) : r.similarity(x, fixed); };
    double mx = at(0);
    for (std::size_t x = 1; x < b; ++x) mx = std::max(mx, at(x));
    double z = 0.0;
    for (std::size_t x = 0; x < b; ++x) z += std::exp(at(x) - mx);
    return mx + std::log(z);
  };
  double total = 0.0;
  for (std::size_t k = 0; k < b; ++k) {
    const double lse = log_sum_exp(k, true);
    for (std::size_t l = 0; l < b; ++l) r.row_softmax(k, l) = std::exp(r.similarity(k, l) - lse);
    total += r.similarity(k, k) - lse;
  }
  for (std::size_t l = 0; l < b; ++l) {
    const double lse = log_sum_exp(l, false);
    for (std::size_t k = 0; k < b; ++k) r.col_softmax(k, l) = std::exp(r.similarity(k, l) - lse);
    total += r.similarity(l, l) - lse;
  }
  r.loss = -total / (2.0 * static_cast<double>(b));
  return r;
}

/// d(loss)/d(fused vector) for every row of the batch.
struct EmbeddingGradients {
  std::vector<Embedding> images;
  std::vector<Embedding> texts;
};

inline EmbeddingGradients infonce_embedding_gradients(std::span<const Embedding> fused_images,
                                                      std::span<const Embedding> fused_texts, const InfoNceResult& r,
                                                      double temperature) {
  const std::size_t b = fused_images.size();
  const std::size_t d = fused_images.front().size();
  // dL/dS_kl = [(P_row - 1) + (P_col - 1)] / 2B, with the 1 only on the diagonal.
  Matrix ds(b, b);
  for (std::size_t k = 0; k < b; ++k) {
    for (std::size_t l = 0; l < b; ++l) {
      const double diag = k == l ? 1.0 : 0.0;
      ds(k, l) = ((r.row_softmax(k, l) - diag) + (r.col_softmax(k, l) - diag)) / (2.0 * static_cast<double>(b));
    }
  }
  EmbeddingGradients g{std::vector<Embedding>(b, Embedding(d, 0.0)), std::vector<Embedding>(b, Embedding(d, 0.0))};
  for (std::size_t k = 0; k < b; ++k) {
    for (std::size_t l = 0; l < b; ++l) {
      const double scale = ds(k, l) / temperature;
      axpy(scale, fused_texts[l], g.images[k]);
      axpy(scale, fused_images[k], g.texts[l]);
    }
  }
  return g;
}

struct GradientPair {
  GradientBuffer image;
  GradientBuffer text;
};

inline GradientPair zero_gradients(const DualEncoder& encoders) {
  return {GradientBuffer::zeros_like(encoders.image.params()), GradientBuffer::zeros_like(encoders.text.params())};
}

namespace detail {

// Chains d(loss)/d(unit fused vector) through renormalization, the rolled
// fusion and the encoder.
inline void backprop_modality(const Encoder& encoder, const std::vector<FeatureVector>& views, AuxIndex aux,
                              const WeightScheme& scheme, const Embedding& fused, double pre_norm,
                              const Embedding& upstream, GradientBuffer& into) {
  const double proj = dot(fused, upstream);
  Embedding d_fused(upstream.size());
  for (std::size_t k = 0; k < d_fused.size(); ++k) d_fused[k] = (upstream[k] - fused[k] * proj) / pre_norm;
  if (aux) {
    Embedding d_primary = d_fused, d_aux = d_fused;
    for (double& x : d_primary) x *= scheme.alpha();
    for (double& x : d_aux) x *= 1.0 - scheme.alpha();
    encoder.accumulate_backward(views.front(), d_primary, into);
    encoder.accumulate_backward(views.at(*aux), d_aux, into);
  } else {
    encoder.accumulate_backward(views.front(), d_fused, into);
  }
}

inline std::vector<Embedding> fused_images_of(const Batch& batch) {
  std::vector<Embedding> out;
  for (const auto& s : batch.samples) out.push_back(s.fused_image);
  return out;
}

inline std::vector<Embedding> fused_texts_of(const Batch& batch) {
  std::vector<Embedding> out;
  for (const auto& s : batch.samples) out.push_back(s.fused_text);
  return out;
}

}  // namespace detail

inline InfoNceResult batch_loss(const Batch& batch, double temperature) {
  return clip_infonce_loss(detail::fused_images_of(batch), detail::fused_texts_of(batch), temperature);
}

/// Adds the exact gradient of the batch loss into `into`, reducing in batch order.
inline double accumulate_loss_backward(const Batch& batch, std::span<const Listing> listings, const DualEncoder& encoders,
                                       const TrainConfig& config, GradientPair& into) {
  const auto images = detail::fused_images_of(batch);
  const auto texts = detail::fused_texts_of(batch);
  const InfoNceResult r = clip_infonce_loss(images, texts, config.temperature);
  const EmbeddingGradients g = infonce_embedding_gradients(images, texts, r, config.temperature);
  for (std::size_t k = 0; k < batch.samples.size(); ++k) {
    const BatchSample& s = batch.samples[k];
    const Listing& listing = listings[s.listing_index];
    detail::backprop_modality(encoders.image, listing.image_views, s.aux.image, config.alpha, s.fused_image, s.image_norm,
                              g.images[k], into.image);
    detail::backprop_modality(encoders.text, listing.text_views, s.aux.text, config.alpha, s.fused_text, s.text_norm,
                              g.texts[k], into.text);
  }
  return r.loss;
}

inline GradientPair loss_backward(const Batch& batch, std::span<const Listing> listings, const DualEncoder& encoders,
                                  const TrainConfig& config) {
  GradientPair grads = zero_gradients(encoders);
  accumulate_loss_backward(batch, listings, encoders, config, grads);
  return grads;
}

struct AdamHyperParams {
  double learning_rate = 1e-3;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  GradientBuffer first_moment;
  GradientBuffer second_moment;
  std::uint64_t step = 0;

  static AdamState zeros_like(const EncoderParams& params) {
    return {GradientBuffer::zeros_like(params), GradientBuffer::zeros_like(params), 0};
  }
};

/// AdamW: bias-corrected Adam step plus decoupled decay lr * wd * p, with the
/// decay taken on the pre-step parameter value.
inline void adam_step(EncoderParams& params, const GradientBuffer& grads, AdamState& state, const AdamHyperParams& hp) {
  if (!params.same_shape(grads) || !params.same_shape(state.first_moment) || !params.same_shape(state.second_moment)) {
    throw Error(ErrorCode::DimensionMismatch, "adam operand shapes differ");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(hp.beta1, t);
  const double c2 = 1.0 - std::pow(hp.beta2, t);
  auto update = [&](std::span<double> p, std::span<const double> g, std::span<double> m, std::span<double> v) {
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = hp.beta1 * m[k] + (1.0 - hp.beta1) * g[k];
      v[k] = hp.beta2 * v[k] + (1.0 - hp.beta2) * g[k] * g[k];
      const double m_hat = m[k] / c1;
      const double v_hat = v[k] / c2;
      p[k] -= hp.learning_rate * (m_hat / (std::sqrt(v_hat) + hp.epsilon) + hp.weight_decay * p[k]);
    }
  };
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    update(params.layers[l].weight.data, grads.layers[l].weight.data, state.first_moment.layers[l].weight.data,
           state.second_moment.layers[l].weight.data);
    update(params.layers[l].bias, grads.layers[l].bias, state.first_moment.layers[l].bias,
           state.second_moment.layers[l].bias);
  }
}

struct StepStats {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double loss = 0.0;
  std::uint64_t fwd_calls = 0;
  double ms_per_step = 0.0;
};

inline nlohmann::json to_json(const StepStats& s) {
  return {{"step", s.step}, {"epoch", s.epoch}, {"loss", s.loss}, {"fwd_calls", s.fwd_calls}, {"ms_per_step", s.ms_per_step}};
}

struct EpochStats {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  std::size_t steps = 0;
};

struct TrainResult {
  DualEncoder encoders;
  std::vector<EpochStats> epochs;
  std::vector<StepStats> steps;
  std::uint64_t rolling_draws = 0;
};

using StepObserver = std::function<void(const StepStats&)>;

inline DualEncoder initial_encoders(std::size_t raw_dim, const TrainConfig& config) {
  return make_dual_encoder(raw_dim, config.output_dim, config.hidden_dim, config.seed);
}

/// A step is one micro-batch; the optimizer updates after every grad_accum
/// micro-batches (and at the end of each epoch) using the summed gradients.
inline TrainResult train(std::span<const Listing> listings, const TrainConfig& config, const StepObserver& on_step = {}) {
  config.validate();
  if (listings.empty()) throw Error(ErrorCode::ConfigInvalid, "training set is empty");
  const std::size_t raw_dim = listings.front().image_views.at(0).size();
  for (const auto& l : listings) {
    if (l.image_views.empty() || l.text_views.empty()) throw Error(ErrorCode::ConfigInvalid, "listing " + l.id + " lacks a view");
    if (l.text_views.front().size() != raw_dim) throw Error(ErrorCode::ConfigInvalid, "text and image raw dims differ");
  }

  TrainResult result{initial_encoders(raw_dim, config), {}, {}, 0};
  DualEncoder& enc = result.encoders;
  AdamState image_state = AdamState::zeros_like(enc.image.params());
  AdamState text_state = AdamState::zeros_like(enc.text.params());
  const AdamHyperParams hp{config.learning_rate, config.weight_decay};

  Rng shuffle_rng(derive_seed(config.seed, 0x73687566));
  Rng sample_rng(derive_seed(config.seed, 0x726f6c6c));
  std::vector<std::size_t> order(listings.size());
  GradientPair pending = zero_gradients(enc);
  std::size_t pending_micro = 0;
  std::size_t global_step = 0;

  auto apply_update = [&] {
    adam_step(enc.image.mutable_params(), pending.image, image_state, hp);
    adam_step(enc.text.mutable_params(), pending.text, text_state, hp);
    pending = zero_gradients(enc);
    pending_micro = 0;
  };

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle_rng.shuffle(order);
    EpochStats es{epoch, 0.0, 0};
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const auto t0 = std::chrono::steady_clock::now();
      const std::uint64_t calls_before = enc.image.forward_calls() + enc.text.forward_calls();
      const std::span<const std::size_t> idx(order.data() + start, std::min(config.batch_size, order.size() - start));

      const Batch batch = build_batch(listings, idx, enc, config, sample_rng, epoch);
      result.rolling_draws += batch.rolling_draws;
      const double loss = accumulate_loss_backward(batch, listings, enc, config, pending);
      ++pending_micro;
      const bool last_in_epoch = start + config.batch_size >= order.size();
      if (pending_micro == config.grad_accum || last_in_epoch) apply_update();

      StepStats st;
      st.step = global_step++;
      st.epoch = epoch;
      st.loss = loss;
      st.fwd_calls = enc.image.forward_calls() + enc.text.forward_calls() - calls_before;
      st.ms_per_step = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      es.mean_loss += loss;
      ++es.steps;
      if (on_step) on_step(st);
      result.steps.push_back(st);
    }
    es.mean_loss /= static_cast<double>(std::max<std::size_t>(1, es.steps));
    result.epochs.push_back(es);
  }
  return result;
}

// ---- similarity-level unbiasedness of the rolled estimator ----

struct UnbiasednessCheck {
  double exhaustive_mean = 0.0;  // mean over all (n-1)(m-1) auxiliary pairs
  double full_fused = 0.0;       // <I*, T*> with design weights, raw fusion
};

/// Both sides in raw (un-renormalized) fusion, where the identity is exact.
inline UnbiasednessCheck estimate_unbiasedness(const ViewSet& images, const ViewSet& texts, const WeightScheme& scheme) {
  if (images.size() < 2 || texts.size() < 2) throw Error(ErrorCode::TooFewViews, "need >= 2 views per modality");
  require_same_dim(images.dim(), texts.dim(), "image vs text dimension");
  UnbiasednessCheck out;
  double total = 0.0;
  for (std::size_t i = 1; i < images.size(); ++i) {
    const Embedding fi = fuse_rolled(images.primary(), images[i], scheme, FusionMode::raw);
    for (std::size_t j = 1; j < texts.size(); ++j) {
      total += dot(fi, fuse_rolled(texts.primary(), texts[j], scheme, FusionMode::raw));
    }
  }
  out.exhaustive_mean = total / static_cast<double>((images.size() - 1) * (texts.size() - 1));
  out.full_fused = dot(fuse(images, design_weights(images.size(), scheme), FusionMode::raw),
                       fuse(texts, design_weights(texts.size(), scheme), FusionMode::raw));
  return out;
}

/// Encodes every view of the listing, then checks as above.
inline UnbiasednessCheck estimate_unbiasedness(const Listing& listing, const DualEncoder& encoders, const WeightScheme& scheme) {
  if (listing.image_views.size() < 2 || listing.text_views.size() < 2) {
    throw Error(ErrorCode::TooFewViews, "listing " + listing.id + " needs >= 2 views per modality");
  }
  std::vector<Embedding> img, txt;
  for (const auto& v : listing.image_views) img.push_back(encoders.image.encode(v));
  for (const auto& v : listing.text_views) txt.push_back(encoders.text.encode(v));
  return estimate_unbiasedness(ViewSet(std::move(img), Modality::image), ViewSet(std::move(txt), Modality::text), scheme);
}

struct MonteCarloEstimate {
  double mean = 0.0;
  double standard_error = 0.0;
  std::size_t draws = 0;
};

/// Mean of the rolled similarity over `draws` independent sample_rolling draws.
inline MonteCarloEstimate monte_carlo_rolled_similarity(const ViewSet& images, const ViewSet& texts,
                                                        const WeightScheme& scheme, std::size_t draws, Rng& rng) {
  if (images.size() < 2 || texts.size() < 2) throw Error(ErrorCode::TooFewViews, "need >= 2 views per modality");
  if (draws < 2) throw Error(ErrorCode::ConfigInvalid, "need at least two draws");
  // Pairwise table so each draw is O(1).
  std::vector<Embedding> fi, ft;
  for (std::size_t i = 1; i < images.size(); ++i) fi.push_back(fuse_rolled(images.primary(), images[i], scheme, FusionMode::raw));
  for (std::size_t j = 1; j < texts.size(); ++j) ft.push_back(fuse_rolled(texts.primary(), texts[j], scheme, FusionMode::raw));
  Matrix table(fi.size(), ft.size());
  for (std::size_t i = 0; i < fi.size(); ++i) {
    for (std::size_t j = 0; j < ft.size(); ++j) table(i, j) = dot(fi[i], ft[j]);
  }
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t d = 0; d < draws; ++d) {
    const AuxPair aux = sample_rolling(images.size(), texts.size(), rng);
    const double x = table(*aux.image - 1, *aux.text - 1);
    sum += x;
    sum_sq += x * x;
  }
  const double n = static_cast<double>(draws);
  const double mean = sum / n;
  const double var = std::max(0.0, (sum_sq - n * mean * mean) / (n - 1.0));
  return {mean, std::sqrt(var / n), draws};
}

}  // namespace fta
