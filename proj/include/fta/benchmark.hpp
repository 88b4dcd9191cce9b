#pragma once

// Per-step training cost as a function of views per listing.

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "json.hpp"

#include "fta/datagen.hpp"
#include "fta/training.hpp"

namespace fta {

struct StepCost {
  std::size_t views = 0;
  std::uint64_t fwd_calls_per_step = 0;  // identical across steps, checked
  double ms_per_step = 0.0;               // median over timed steps
};

inline nlohmann::json to_json(const StepCost& c) {
  return {{"views", c.views}, {"fwd_calls", c.fwd_calls_per_step}, {"ms_per_step", c.ms_per_step}};
}

struct StepCostOptions {
  std::size_t batch_size = 32;
  std::size_t steps = 60;
  std::size_t warmup_steps = 5;
  std::size_t raw_dim = 32;
  std::size_t output_dim = 16;
  std::uint64_t seed = 0;
};

namespace detail {

// One catalog, encoder pair and optimizer state per view count.
struct StepBench {
  std::size_t views;
  std::vector<Listing> catalog;
  TrainConfig config;
  DualEncoder encoders;
  AdamState image_state;
  AdamState text_state;
  Rng rng;
  std::vector<std::size_t> order;
  StepCost cost;
  std::vector<double> times;

  StepBench(std::size_t v, const StepCostOptions& opt, std::vector<Listing> cat, TrainConfig cfg)
      : views(v),
        catalog(std::move(cat)),
        config(std::move(cfg)),
        encoders(initial_encoders(opt.raw_dim, config)),
        image_state(AdamState::zeros_like(encoders.image.params())),
        text_state(AdamState::zeros_like(encoders.text.params())),
        rng(derive_seed(opt.seed, 0x62656e63)),
        order(catalog.size()),
        cost{v, 0, 0.0} {
    std::iota(order.begin(), order.end(), std::size_t{0});
  }

  void step(std::size_t index, bool timed) {
    const std::size_t batch = config.batch_size;
    const std::size_t start = (index * batch) % catalog.size();
    const std::span<const std::size_t> idx(order.data() + start, batch);
    const std::uint64_t before = encoders.image.forward_calls() + encoders.text.forward_calls();
    const auto t0 = std::chrono::steady_clock::now();

    const Batch b = build_batch(catalog, idx, encoders, config, rng);
    GradientPair grads = loss_backward(b, catalog, encoders, config);
    const AdamHyperParams hp{config.learning_rate, config.weight_decay};
    adam_step(encoders.image.mutable_params(), grads.image, image_state, hp);
    adam_step(encoders.text.mutable_params(), grads.text, text_state, hp);

    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    const std::uint64_t calls = encoders.image.forward_calls() + encoders.text.forward_calls() - before;
    if (index == 0) cost.fwd_calls_per_step = calls;
    if (calls != cost.fwd_calls_per_step) throw Error(ErrorCode::NumericalFailure, "forward calls varied between steps");
    if (timed) times.push_back(ms);
  }
};

}  // namespace detail

/// Times full training steps (sampling, encoding, loss, backward, AdamW) on
/// catalogs whose listings all have `views` image and text views. View counts
/// are interleaved step by step so machine-wide drift hits them equally; the
/// reported time is the median per view count.
inline std::vector<StepCost> measure_step_costs(std::span<const std::size_t> view_counts, const StepCostOptions& opt) {
  std::vector<detail::StepBench> benches;
  benches.reserve(view_counts.size());
  for (std::size_t views : view_counts) {
    if (views == 0) throw Error(ErrorCode::ConfigInvalid, "view counts must be >= 1");
    SyntheticConfig data_cfg;
    data_cfg.num_listings = opt.batch_size * 4;
    data_cfg.image_views_n = views;
    data_cfg.text_views_m = views;
    data_cfg.raw_dim = opt.raw_dim;
    data_cfg.seed = opt.seed;
    TrainConfig cfg;
    cfg.batch_size = opt.batch_size;
    cfg.output_dim = opt.output_dim;
    cfg.seed = opt.seed;
    benches.emplace_back(views, opt, generate_catalog(data_cfg), cfg);
  }
  for (std::size_t step = 0; step < opt.warmup_steps + opt.steps; ++step) {
    for (auto& b : benches) b.step(step, step >= opt.warmup_steps);
  }
  std::vector<StepCost> out;
  for (auto& b : benches) {
    if (!b.times.empty()) {
      std::nth_element(b.times.begin(), b.times.begin() + static_cast<std::ptrdiff_t>(b.times.size() / 2), b.times.end());
      b.cost.ms_per_step = b.times[b.times.size() / 2];
    }
    out.push_back(b.cost);
  }
  return out;
}

inline StepCost measure_step_cost(std::size_t views, const StepCostOptions& opt) {
  const std::size_t one[1] = {views};
  return measure_step_costs(one, opt).front();
}

}  // namespace fta
