#pragma once

// Small trainable encoders: an affine map, optionally with one tanh hidden
// layer, followed by projection onto the unit sphere. Gradients are computed
// by hand in reverse mode.

#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fta/binary_io.hpp"
#include "fta/error.hpp"
#include "fta/fusion.hpp"
#include "fta/linalg.hpp"
#include "fta/rng.hpp"

namespace fta {

struct EncoderConfig {
  std::size_t input_dim = 32;
  std::size_t output_dim = 16;
  std::optional<std::size_t> hidden_dim;
  std::uint64_t seed = 0;

  void validate() const {
    if (input_dim == 0 || output_dim == 0 || (hidden_dim && *hidden_dim == 0)) {
      throw Error(ErrorCode::ConfigInvalid, "encoder dimensions must be >= 1");
    }
  }

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

struct DenseLayer {
  Matrix weight;  // out x in
  std::vector<double> bias;

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// Layer tensors in forward order. Shared by parameters and gradients.
struct LayerStack {
  std::vector<DenseLayer> layers;

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weight.data.size() + l.bias.size();
    return n;
  }

  /// Visits every scalar in file order: per layer, weights row-major then biases.
  template <typename F>
  void for_each(F&& f) {
    for (auto& l : layers) {
      for (double& x : l.weight.data) f(x);
      for (double& x : l.bias) f(x);
    }
  }

  template <typename F>
  void for_each(F&& f) const {
    for (const auto& l : layers) {
      for (double x : l.weight.data) f(x);
      for (double x : l.bias) f(x);
    }
  }

  std::vector<double> flatten() const {
    std::vector<double> flat;
    flat.reserve(parameter_count());
    for_each([&](double x) { flat.push_back(x); });
    return flat;
  }

  bool same_shape(const LayerStack& other) const {
    if (layers.size() != other.layers.size()) return false;
    for (std::size_t k = 0; k < layers.size(); ++k) {
      if (!layers[k].weight.same_shape(other.layers[k].weight) || layers[k].bias.size() != other.layers[k].bias.size()) {
        return false;
      }
    }
    return true;
  }

  friend bool operator==(const LayerStack&, const LayerStack&) = default;
};

struct EncoderParams : LayerStack {};

/// Accumulated d(loss)/d(param), shaped like EncoderParams.
struct GradientBuffer : LayerStack {
  static GradientBuffer zeros_like(const LayerStack& params) {
    GradientBuffer g;
    for (const auto& l : params.layers) {
      g.layers.push_back(DenseLayer{Matrix(l.weight.rows, l.weight.cols), std::vector<double>(l.bias.size(), 0.0)});
    }
    return g;
  }

  GradientBuffer& operator+=(const GradientBuffer& other) {
    if (!same_shape(other)) throw Error(ErrorCode::DimensionMismatch, "gradient buffer shapes differ");
    for (std::size_t k = 0; k < layers.size(); ++k) {
      axpy(1.0, other.layers[k].weight.data, layers[k].weight.data);
      axpy(1.0, other.layers[k].bias, layers[k].bias);
    }
    return *this;
  }
};

/// Glorot-uniform weights, zero biases; deterministic in config.seed.
inline EncoderParams init_params(const EncoderConfig& config) {
  config.validate();
  Rng rng(derive_seed(config.seed, 0x656e63));
  auto make_layer = [&](std::size_t fan_in, std::size_t fan_out) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    DenseLayer layer{Matrix(fan_out, fan_in), std::vector<double>(fan_out, 0.0)};
    for (double& w : layer.weight.data) w = rng.uniform(-bound, bound);
    return layer;
  };
  EncoderParams params;
  if (config.hidden_dim) {
    params.layers.push_back(make_layer(config.input_dim, *config.hidden_dim));
    params.layers.push_back(make_layer(*config.hidden_dim, config.output_dim));
  } else {
    params.layers.push_back(make_layer(config.input_dim, config.output_dim));
  }
  return params;
}

/// Whether encode output is projected to the unit sphere. `raw` exists for
/// gradient tests of the affine part alone.
enum class OutputMode { normalized, raw };

// Atomic counter that can still live inside a copyable value type.
class CallCounter {
 public:
  CallCounter() = default;
  CallCounter(const CallCounter& other) : count_(other.value()) {}
  CallCounter& operator=(const CallCounter& other) {
    count_.store(other.value(), std::memory_order_relaxed);
    return *this;
  }

  void increment() noexcept { count_.fetch_add(1, std::memory_order_relaxed); }
  std::uint64_t value() const noexcept { return count_.load(std::memory_order_relaxed); }
  void reset() noexcept { count_.store(0, std::memory_order_relaxed); }

 private:
  std::atomic<std::uint64_t> count_{0};
};

class Encoder {
 public:
  explicit Encoder(EncoderConfig config) : Encoder(config, init_params(config)) {}

  Encoder(EncoderConfig config, EncoderParams params) : config_(std::move(config)), params_(std::move(params)) {
    config_.validate();
    check_shapes();
  }

  const EncoderConfig& config() const noexcept { return config_; }
  const EncoderParams& params() const noexcept { return params_; }

  /// Parameter mutation belongs to the training loop alone.
  EncoderParams& mutable_params() noexcept { return params_; }

  std::uint64_t forward_calls() const noexcept { return forward_calls_.value(); }
  void reset_forward_calls() noexcept { forward_calls_.reset(); }

  Embedding encode(std::span<const double> raw, OutputMode mode = OutputMode::normalized) const {
    forward_calls_.increment();
    Trace trace = forward(raw);
    if (mode == OutputMode::raw) return std::move(trace.output);
    normalize_in_place(trace.output);
    return std::move(trace.output);
  }

  /// Adds the gradient of <upstream, encode(raw)> w.r.t. every parameter into
  /// `into`. The forward pass is recomputed and not counted.
  void accumulate_backward(std::span<const double> raw, std::span<const double> upstream, GradientBuffer& into,
                           OutputMode mode = OutputMode::normalized) const {
    require_same_dim(upstream.size(), config_.output_dim, "upstream gradient");
    if (!into.same_shape(params_)) throw Error(ErrorCode::DimensionMismatch, "gradient buffer shape");
    Trace trace = forward(raw);

    std::vector<double> delta(upstream.begin(), upstream.end());
    if (mode == OutputMode::normalized) {
      // d u / d z = (I - u u^T) / |z|
      const double z_norm = norm(trace.output);
      if (!(z_norm >= kZeroNormThreshold)) throw Error(ErrorCode::ZeroNorm, "encoder output has zero norm");
      std::vector<double> u = trace.output;
      for (double& x : u) x /= z_norm;
      const double ug = dot(u, delta);
      for (std::size_t k = 0; k < delta.size(); ++k) delta[k] = (delta[k] - u[k] * ug) / z_norm;
    }

    for (std::size_t l = params_.layers.size(); l-- > 0;) {
      const std::vector<double>& input = trace.inputs[l];
      DenseLayer& grad = into.layers[l];
      for (std::size_t i = 0; i < grad.weight.rows; ++i) {
        auto row = grad.weight.row(i);
        for (std::size_t j = 0; j < grad.weight.cols; ++j) row[j] += delta[i] * input[j];
        grad.bias[i] += delta[i];
      }
      if (l > 0) {
        std::vector<double> back = matvec_transposed(params_.layers[l].weight, delta);
        // input of layer l is tanh of the previous pre-activation
        for (std::size_t k = 0; k < back.size(); ++k) back[k] *= 1.0 - input[k] * input[k];
        delta = std::move(back);
      }
    }
  }

 private:
  struct Trace {
    std::vector<std::vector<double>> inputs;  // input to each layer
    std::vector<double> output;               // pre-normalization output
  };

  Trace forward(std::span<const double> raw) const {
    require_same_dim(raw.size(), config_.input_dim, "encoder input");
    Trace trace;
    std::vector<double> x(raw.begin(), raw.end());
    for (std::size_t l = 0; l < params_.layers.size(); ++l) {
      const DenseLayer& layer = params_.layers[l];
      std::vector<double> z = matvec(layer.weight, x);
      for (std::size_t k = 0; k < z.size(); ++k) z[k] += layer.bias[k];
      trace.inputs.push_back(std::move(x));
      if (l + 1 < params_.layers.size()) {
        for (double& v : z) v = std::tanh(v);
      }
      x = std::move(z);
    }
    trace.output = std::move(x);
    return trace;
  }

  void check_shapes() const {
    const std::size_t expected_layers = config_.hidden_dim ? 2 : 1;
    if (params_.layers.size() != expected_layers) throw Error(ErrorCode::DimensionMismatch, "layer count does not match config");
    std::size_t fan_in = config_.input_dim;
    for (std::size_t l = 0; l < params_.layers.size(); ++l) {
      const std::size_t fan_out = (l + 1 == params_.layers.size()) ? config_.output_dim : *config_.hidden_dim;
      const DenseLayer& layer = params_.layers[l];
      if (layer.weight.rows != fan_out || layer.weight.cols != fan_in || layer.bias.size() != fan_out ||
          layer.weight.data.size() != fan_out * fan_in) {
        throw Error(ErrorCode::DimensionMismatch, "layer " + std::to_string(l) + " shape does not match config");
      }
      if (!all_finite(layer.weight.data) || !all_finite(layer.bias)) {
        throw Error(ErrorCode::NumericalFailure, "non-finite parameter in layer " + std::to_string(l));
      }
      fan_in = fan_out;
    }
  }

  EncoderConfig config_;
  EncoderParams params_;
  mutable CallCounter forward_calls_;
};

inline Embedding encode(const Encoder& encoder, std::span<const double> raw) { return encoder.encode(raw); }

inline GradientBuffer encode_backward(const Encoder& encoder, std::span<const double> raw, std::span<const double> upstream,
                                      OutputMode mode = OutputMode::normalized) {
  GradientBuffer grad = GradientBuffer::zeros_like(encoder.params());
  encoder.accumulate_backward(raw, upstream, grad, mode);
  return grad;
}

/// The image tower f and the text tower g.
struct DualEncoder {
  Encoder image;
  Encoder text;

  const Encoder& for_modality(Modality m) const { return m == Modality::image ? image : text; }
};

inline DualEncoder make_dual_encoder(std::size_t input_dim, std::size_t output_dim, std::optional<std::size_t> hidden_dim,
                                     std::uint64_t seed) {
  return DualEncoder{Encoder(EncoderConfig{input_dim, output_dim, hidden_dim, derive_seed(seed, 1)}),
                     Encoder(EncoderConfig{input_dim, output_dim, hidden_dim, derive_seed(seed, 2)})};
}

// Model file: "FTAM", u32 version, then per encoder (image, text) three u32
// dims (hidden 0 = absent) followed by per-layer f64 weights then biases.
inline constexpr std::uint32_t kModelFormatVersion = 1;

inline void write_model(std::ostream& out, const DualEncoder& model) {
  binary::write_magic(out, "FTAM");
  binary::write_le<std::uint32_t>(out, kModelFormatVersion);
  for (const Encoder* enc : {&model.image, &model.text}) {
    const auto& cfg = enc->config();
    binary::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(cfg.input_dim));
    binary::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(cfg.output_dim));
    binary::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(cfg.hidden_dim.value_or(0)));
    enc->params().for_each([&](double x) { binary::write_f64(out, x); });
  }
}

inline DualEncoder read_model(std::istream& in) {
  binary::expect_magic(in, "FTAM");
  const auto version = binary::read_le<std::uint32_t>(in, "version");
  if (version != kModelFormatVersion) throw Error(ErrorCode::FormatError, "unsupported model version " + std::to_string(version));
  auto read_encoder = [&]() {
    EncoderConfig cfg;
    cfg.input_dim = binary::read_le<std::uint32_t>(in, "input_dim");
    cfg.output_dim = binary::read_le<std::uint32_t>(in, "output_dim");
    const auto hidden = binary::read_le<std::uint32_t>(in, "hidden_dim");
    if (hidden != 0) cfg.hidden_dim = hidden;
    try {
      cfg.validate();
    } catch (const Error& e) {
      throw Error(ErrorCode::FormatError, e.what());
    }
    // Shapes come from the zero-initialised layout; values are overwritten.
    EncoderParams params;
    std::size_t fan_in = cfg.input_dim;
    const std::size_t layer_count = cfg.hidden_dim ? 2 : 1;
    for (std::size_t l = 0; l < layer_count; ++l) {
      const std::size_t fan_out = (l + 1 == layer_count) ? cfg.output_dim : *cfg.hidden_dim;
      params.layers.push_back(DenseLayer{Matrix(fan_out, fan_in), std::vector<double>(fan_out, 0.0)});
      fan_in = fan_out;
    }
    params.for_each([&](double& x) { x = binary::read_f64(in, "parameters"); });
    try {
      return Encoder(cfg, std::move(params));
    } catch (const Error& e) {
      throw Error(ErrorCode::FormatError, e.what());
    }
  };
  Encoder image = read_encoder();
  Encoder text = read_encoder();
  binary::expect_eof(in);
  return DualEncoder{std::move(image), std::move(text)};
}

inline void save_model(const DualEncoder& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  write_model(out, model);
  out.flush();
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

inline DualEncoder load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  return read_model(in);
}

}  // namespace fta
