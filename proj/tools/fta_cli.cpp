// fta: gen-data -> train -> index -> search / eval, plus the ot-check and
// bench diagnostics. JSON goes to stdout, progress to stderr.
//
// Exit codes: 0 ok, 1 IO/format, 2 config/flags, 3 evaluation precondition,
// 4 property failure.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "fta/fta.hpp"

using nlohmann::json;

namespace {

enum Exit { kOk = 0, kIo = 1, kConfig = 2, kPrecondition = 3, kProperty = 4 };

int exit_code(fta::ErrorCode code) {
  using fta::ErrorCode;
  switch (code) {
    case ErrorCode::IoError:
    case ErrorCode::FormatError: return kIo;
    case ErrorCode::ConfigInvalid:
    case ErrorCode::DimensionMismatch:
    case ErrorCode::NegativeEntry:
    case ErrorCode::NotNormalized:
    case ErrorCode::TooFewViews: return kConfig;
    case ErrorCode::Empty:
    case ErrorCode::UnknownListing:
    case ErrorCode::EmptyIndex:
    case ErrorCode::MissingView: return kPrecondition;
    case ErrorCode::InfeasibleMarginals:
    case ErrorCode::NumericalFailure:
    case ErrorCode::ZeroNorm: return kProperty;
  }
  return kProperty;
}

void log(const std::string& msg) { std::cerr << "[fta] " << msg << '\n'; }

void print(const json& j) { std::cout << j.dump(2) << '\n'; }

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw fta::Error(fta::ErrorCode::IoError, "cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw fta::Error(fta::ErrorCode::ConfigInvalid, path + ": " + e.what());
  }
}

// --seed, else FTX_SEED, else the config file value (if any), else 0.
std::optional<std::uint64_t> env_seed() {
  const char* env = std::getenv("FTX_SEED");
  if (env == nullptr || *env == '\0') return std::nullopt;
  try {
    std::size_t used = 0;
    const auto v = std::stoull(env, &used);
    if (used != std::string(env).size()) throw std::invalid_argument(env);
    return v;
  } catch (const std::exception&) {
    throw fta::Error(fta::ErrorCode::ConfigInvalid, std::string("FTX_SEED is not an integer: ") + env);
  }
}

std::optional<std::uint64_t> resolve_seed(const std::optional<std::uint64_t>& flag) { return flag ? flag : env_seed(); }

// ---------------------------------------------------------------- gen-data

struct GenDataArgs {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> listings;
};

int cmd_gen_data(const GenDataArgs& a) {
  json doc = a.config.empty() ? json::object() : read_json_file(a.config);
  if (const auto seed = resolve_seed(a.seed)) doc["seed"] = *seed;
  if (a.listings) doc["num_listings"] = *a.listings;
  const fta::SyntheticConfig cfg = fta::synthetic_config_from_json(doc);
  const auto catalog = fta::generate_catalog(cfg);
  const auto log_rows = catalog.empty() ? std::vector<fta::Interaction>{} : fta::generate_interactions(cfg, catalog);
  fta::serialize_dataset(catalog, log_rows, a.out);
  log("wrote " + std::to_string(catalog.size()) + " listings and " + std::to_string(log_rows.size()) + " interactions to " + a.out);
  print({{"listings", catalog.size()}, {"interactions", log_rows.size()}, {"out", a.out}, {"config", json(cfg)}});
  return kOk;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string data;
  std::string config;
  std::string out;
  std::string stats;
  std::string preset = "desk";
  std::optional<double> alpha, tau, lr, wd;
  std::optional<std::size_t> epochs, batch, accum, dim, hidden;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mode, sampling;
};

fta::TrainMode parse_mode(const std::string& s) {
  if (s == "multiview") return fta::TrainMode::multiview;
  if (s == "singleview") return fta::TrainMode::singleview;
  throw fta::Error(fta::ErrorCode::ConfigInvalid, "mode must be multiview or singleview, got '" + s + "'");
}

fta::AuxSampling parse_sampling(const std::string& s) {
  if (s == "independent") return fta::AuxSampling::independent;
  if (s == "round_robin") return fta::AuxSampling::round_robin;
  throw fta::Error(fta::ErrorCode::ConfigInvalid, "sampling must be independent or round_robin, got '" + s + "'");
}

// Flags override the config file, which overrides the preset.
fta::TrainConfig train_config(const TrainArgs& a) {
  fta::TrainConfig cfg = a.preset == "full" ? fta::TrainConfig::full_scale_preset() : fta::TrainConfig{};
  std::optional<double> alpha = a.alpha;
  if (!a.config.empty()) {
    const json doc = read_json_file(a.config);
    if (!doc.is_object()) throw fta::Error(fta::ErrorCode::ConfigInvalid, "train config must be a JSON object");
    try {
      for (const auto& [key, value] : doc.items()) {
        if (key == "alpha") {
          if (!alpha) alpha = value.get<double>();
        } else if (key == "temperature") cfg.temperature = value.get<double>();
        else if (key == "batch_size") cfg.batch_size = value.get<std::size_t>();
        else if (key == "grad_accum") cfg.grad_accum = value.get<std::size_t>();
        else if (key == "learning_rate") cfg.learning_rate = value.get<double>();
        else if (key == "weight_decay") cfg.weight_decay = value.get<double>();
        else if (key == "epochs") cfg.epochs = value.get<std::size_t>();
        else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
        else if (key == "mode") cfg.mode = parse_mode(value.get<std::string>());
        else if (key == "sampling") cfg.sampling = parse_sampling(value.get<std::string>());
        else if (key == "output_dim") cfg.output_dim = value.get<std::size_t>();
        else if (key == "hidden_dim") cfg.hidden_dim = value.get<std::size_t>();
        else throw fta::Error(fta::ErrorCode::ConfigInvalid, "unknown train config key '" + key + "'");
      }
    } catch (const json::exception& e) {
      throw fta::Error(fta::ErrorCode::ConfigInvalid, a.config + ": " + e.what());
    }
  }
  if (alpha) cfg.alpha = fta::WeightScheme(*alpha);
  if (a.tau) cfg.temperature = *a.tau;
  if (a.lr) cfg.learning_rate = *a.lr;
  if (a.wd) cfg.weight_decay = *a.wd;
  if (a.epochs) cfg.epochs = *a.epochs;
  if (a.batch) cfg.batch_size = *a.batch;
  if (a.accum) cfg.grad_accum = *a.accum;
  if (a.dim) cfg.output_dim = *a.dim;
  if (a.hidden) cfg.hidden_dim = *a.hidden;
  if (a.mode) cfg.mode = parse_mode(*a.mode);
  if (a.sampling) cfg.sampling = parse_sampling(*a.sampling);
  if (const auto seed = resolve_seed(a.seed)) cfg.seed = *seed;
  cfg.validate();
  return cfg;
}

int cmd_train(const TrainArgs& a) {
  const fta::TrainConfig cfg = train_config(a);
  const fta::Dataset data = fta::load_dataset(a.data);
  std::ofstream stats;
  if (!a.stats.empty()) {
    stats.open(a.stats, std::ios::trunc);
    if (!stats) throw fta::Error(fta::ErrorCode::IoError, "cannot open " + a.stats);
  }
  const fta::TrainResult result = fta::train(data.listings, cfg, [&](const fta::StepStats& s) {
    if (stats.is_open()) stats << fta::to_json(s).dump() << '\n';
  });
  for (const auto& e : result.epochs) log("epoch " + std::to_string(e.epoch) + " mean loss " + std::to_string(e.mean_loss));
  if (stats.is_open() && !stats.flush()) throw fta::Error(fta::ErrorCode::IoError, "write failed for " + a.stats);
  fta::save_model(result.encoders, a.out);
  json epochs = json::array();
  for (const auto& e : result.epochs) epochs.push_back({{"epoch", e.epoch}, {"mean_loss", e.mean_loss}, {"steps", e.steps}});
  print({{"model", a.out},
         {"steps", result.steps.size()},
         {"epochs", epochs},
         {"rolling_draws", result.rolling_draws},
         {"mode", cfg.mode == fta::TrainMode::multiview ? "multiview" : "singleview"},
         {"alpha", cfg.alpha.alpha()},
         {"seed", cfg.seed}});
  return kOk;
}

// ---------------------------------------------------------------- index / search / eval

struct IndexFlags {
  double alpha = fta::kDefaultAlpha;
  std::string modality = "multimodal";
  std::string views = "all";
};

fta::IndexBuildOptions index_options(const IndexFlags& f) {
  fta::IndexBuildOptions opt{fta::WeightScheme(f.alpha)};
  if (f.modality == "multimodal") opt.modality = fta::IndexModality::multimodal;
  else if (f.modality == "text") opt.modality = fta::IndexModality::text_only;
  else if (f.modality == "image") opt.modality = fta::IndexModality::image_only;
  else throw fta::Error(fta::ErrorCode::ConfigInvalid, "modality must be multimodal, text or image");
  if (f.views == "all") opt.views = fta::IndexViews::all;
  else if (f.views == "primary") opt.views = fta::IndexViews::primary_only;
  else throw fta::Error(fta::ErrorCode::ConfigInvalid, "views must be all or primary");
  return opt;
}

struct IndexArgs {
  std::string data, model, out;
  IndexFlags flags;
};

int cmd_index(const IndexArgs& a) {
  const auto opt = index_options(a.flags);
  const fta::DualEncoder enc = fta::load_model(a.model);
  const fta::Dataset data = fta::load_dataset(a.data);
  const fta::EmbeddingIndex index = fta::build_index(data.listings, enc, opt);
  fta::save_index(index, a.out);
  log("indexed " + std::to_string(index.size()) + " listings");
  print({{"index", a.out}, {"size", index.size()}, {"dim", index.dim()}, {"modality", a.flags.modality}, {"views", a.flags.views}});
  return kOk;
}

struct SearchArgs {
  std::string index, model, data, listing;
  std::optional<std::size_t> interaction;
  std::vector<double> query;
  std::size_t k = 10;
};

int cmd_search(const SearchArgs& a) {
  const int sources = (a.interaction ? 1 : 0) + (a.listing.empty() ? 0 : 1) + (a.query.empty() ? 0 : 1);
  if (sources != 1) throw fta::Error(fta::ErrorCode::ConfigInvalid, "give exactly one of --interaction, --listing, --query");
  const fta::EmbeddingIndex index = fta::load_index(a.index);
  const fta::DualEncoder enc = fta::load_model(a.model);
  std::vector<double> raw = a.query;
  json source;
  if (!a.query.empty()) {
    source = "query";
  } else {
    if (a.data.empty()) throw fta::Error(fta::ErrorCode::ConfigInvalid, "--data is required with --interaction/--listing");
    const fta::Dataset data = fta::load_dataset(a.data);
    if (a.interaction) {
      if (*a.interaction >= data.interactions.size()) {
        throw fta::Error(fta::ErrorCode::ConfigInvalid, "interaction " + std::to_string(*a.interaction) + " out of range");
      }
      const auto& it = data.interactions[*a.interaction];
      raw = it.query_features;
      source = {{"interaction", *a.interaction}, {"clicked_id", it.clicked_listing_id}};
    } else {
      const fta::Listing* found = nullptr;
      for (const auto& l : data.listings) {
        if (l.id == a.listing) found = &l;
      }
      if (found == nullptr) throw fta::Error(fta::ErrorCode::UnknownListing, "no listing '" + a.listing + "' in dataset");
      raw = found->text_views.front();
      source = {{"listing_title", a.listing}};
    }
  }
  const auto hits = fta::knn(index, enc.text.encode(raw), a.k);
  json out = json::array();
  for (const auto& h : hits) out.push_back({{"id", h.listing_id}, {"score", h.score}});
  print({{"source", source}, {"hits", out}});
  return kOk;
}

struct EvalQ2iArgs {
  std::string data, model, index;
  std::vector<std::size_t> ks{10, 100, 500};
  bool by_category = false;
  IndexFlags flags;
};

int cmd_eval_q2i(const EvalQ2iArgs& a) {
  fta::validate_cutoffs(a.ks);
  const auto opt = index_options(a.flags);
  const fta::DualEncoder enc = fta::load_model(a.model);
  const fta::Dataset data = fta::load_dataset(a.data);
  fta::EmbeddingIndex index = a.index.empty() ? fta::build_index(data.listings, enc, opt) : fta::load_index(a.index);
  if (!a.index.empty()) {
    for (const auto& l : data.listings) {
      if (index.contains(l.id)) index.set_category(l.id, l.category);
    }
  }
  if (index.dim() != enc.text.config().output_dim) {
    throw fta::Error(fta::ErrorCode::DimensionMismatch, "index dimension does not match the model");
  }
  fta::EvalReport report = fta::recall_at_k(index, enc.text, data.interactions, a.ks);
  if (!a.by_category) {
    report.per_category_recall.clear();
    report.per_category_count.clear();
  }
  json j = fta::to_json(report);
  j["index"] = a.index.empty() ? json{{"modality", a.flags.modality}, {"views", a.flags.views}, {"alpha", a.flags.alpha}}
                               : json(a.index);
  print(j);
  return kOk;
}

struct EvalCrossArgs {
  std::string data, model, source = "title", target = "nonprimary_image";
  std::size_t k = 1;
};

fta::ViewRole view_role(const std::string& s) {
  const auto r = fta::parse_view_role(s);
  if (!r) throw fta::Error(fta::ErrorCode::ConfigInvalid, "unknown view role '" + s + "'");
  return *r;
}

int cmd_eval_crossview(const EvalCrossArgs& a) {
  const auto source = view_role(a.source), target = view_role(a.target);
  if (a.k == 0) throw fta::Error(fta::ErrorCode::ConfigInvalid, "k must be >= 1");
  const fta::DualEncoder enc = fta::load_model(a.model);
  const fta::Dataset data = fta::load_dataset(a.data);
  const double r = fta::cross_view_eval(data.listings, enc, source, target, a.k);
  print({{"source", a.source}, {"target", a.target}, {"k", a.k}, {"recall", r}, {"listings", data.listings.size()}});
  return kOk;
}

// ---------------------------------------------------------------- diagnostics

struct OtCheckArgs {
  std::size_t n = 8, m = 8, trials = 500, dim = 8;
  std::optional<std::uint64_t> seed;
};

std::vector<double> random_weights(std::size_t n, fta::Rng& rng) {
  std::vector<double> w(n);
  double s = 0.0;
  for (double& x : w) s += (x = rng.uniform() + 1e-3);
  for (double& x : w) x /= s;
  return w;
}

// Exact OT never costs more than the factorized coupling, which is feasible.
int cmd_ot_check(const OtCheckArgs& a) {
  if (a.n == 0 || a.m == 0 || a.dim == 0) throw fta::Error(fta::ErrorCode::ConfigInvalid, "--n, --m and --dim must be >= 1");
  fta::Rng rng(fta::derive_seed(resolve_seed(a.seed).value_or(0), 0x6f74));
  std::size_t passed = 0;
  double worst_gap = -1e300;
  for (std::size_t t = 0; t < a.trials; ++t) {
    const std::size_t n = 1 + rng.index(a.n), m = 1 + rng.index(a.m);
    std::vector<fta::Embedding> iv(n), tv(m);
    for (auto& v : iv) v = fta::normalized([&] { fta::Embedding e(a.dim); for (double& x : e) x = rng.normal(); return e; }());
    for (auto& v : tv) v = fta::normalized([&] { fta::Embedding e(a.dim); for (double& x : e) x = rng.normal(); return e; }());
    const fta::SimplexWeights w(random_weights(n, rng)), v(random_weights(m, rng));
    const auto cost = fta::negative_dot_cost(fta::ViewSet(iv, fta::Modality::image), fta::ViewSet(tv, fta::Modality::text));
    const auto fact = fta::factorized_coupling(w, v);
    const double fact_cost = fta::coupling_cost(fact, cost);
    const auto exact = fta::exact_ot(w, v, cost);
    const double gap = exact.cost - fact_cost;
    worst_gap = std::max(worst_gap, gap);
    if (gap <= 1e-9 && fact.is_feasible(1e-9) && exact.coupling.is_feasible(1e-9)) ++passed;
  }
  const std::size_t failed = a.trials - passed;
  print({{"trials", a.trials}, {"passed", passed}, {"failed", failed}, {"max_exact_minus_factorized", a.trials ? worst_gap : 0.0}});
  return failed == 0 ? kOk : kProperty;
}

struct BenchArgs {
  std::vector<std::size_t> views{2, 4, 8, 16};
  std::size_t batch = 32, steps = 60, warmup = 5, raw = 32, dim = 16;
  std::optional<std::uint64_t> seed;
};

int cmd_bench(const BenchArgs& a) {
  if (a.views.empty() || a.batch == 0 || a.steps == 0) throw fta::Error(fta::ErrorCode::ConfigInvalid, "empty benchmark");
  fta::StepCostOptions opt{a.batch, a.steps, a.warmup, a.raw, a.dim, resolve_seed(a.seed).value_or(0)};
  json rows = json::array();
  std::uint64_t calls = 0;
  bool constant_calls = true;
  double lo = 1e300, hi = 0.0;
  const auto costs = fta::measure_step_costs(a.views, opt);
  for (std::size_t i = 0; i < costs.size(); ++i) {
    const fta::StepCost& c = costs[i];
    log("views " + std::to_string(c.views) + ": " + std::to_string(c.ms_per_step) + " ms/step");
    if (i == 0) calls = c.fwd_calls_per_step;
    constant_calls = constant_calls && c.fwd_calls_per_step == calls;
    lo = std::min(lo, c.ms_per_step);
    hi = std::max(hi, c.ms_per_step);
    rows.push_back(fta::to_json(c));
  }
  print({{"rows", rows}, {"fwd_calls_constant", constant_calls}, {"ms_spread_over_min", lo > 0 ? (hi - lo) / lo : 0.0}});
  return constant_calls ? kOk : kProperty;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Factorized transport alignment: data generation, training, indexing and evaluation"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic multi-view catalog and click log");
  gen_cmd->add_option("--config", gen.config, "JSON dataset config (unknown keys rejected)");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--seed", gen.seed, "Seed (overrides config; FTX_SEED fallback)");
  gen_cmd->add_option("--listings", gen.listings, "Number of listings (overrides config)");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train the dual encoder with rolling multi-view sampling");
  train_cmd->add_option("--data", tr.data, "Dataset directory")->required();
  train_cmd->add_option("--out", tr.out, "Output model file (.ftam)")->required();
  train_cmd->add_option("--config", tr.config, "JSON train config; flags override it");
  train_cmd->add_option("--preset", tr.preset, "Base defaults: desk or full (batch 128, accum 4, lr 1e-5, 30 epochs)")
      ->check(CLI::IsMember({"desk", "full"}));
  train_cmd->add_option("--alpha", tr.alpha, "Primary-view weight in (0, 1)");
  train_cmd->add_option("--tau", tr.tau, "InfoNCE temperature");
  train_cmd->add_option("--epochs", tr.epochs, "Epochs");
  train_cmd->add_option("--batch", tr.batch, "Micro-batch size");
  train_cmd->add_option("--accum", tr.accum, "Micro-batches per optimizer update");
  train_cmd->add_option("--lr", tr.lr, "AdamW learning rate");
  train_cmd->add_option("--wd", tr.wd, "AdamW decoupled weight decay");
  train_cmd->add_option("--seed", tr.seed, "Seed (FTX_SEED fallback)");
  train_cmd->add_option("--mode", tr.mode, "multiview or singleview");
  train_cmd->add_option("--sampling", tr.sampling, "Auxiliary sampling: independent or round_robin");
  train_cmd->add_option("--dim", tr.dim, "Embedding dimension");
  train_cmd->add_option("--hidden", tr.hidden, "Hidden tanh layer width (default: linear encoder)");
  train_cmd->add_option("--stats", tr.stats, "Per-step stats JSONL output");

  IndexArgs ix;
  auto add_index_flags = [](CLI::App* cmd, IndexFlags& f) {
    cmd->add_option("--alpha", f.alpha, "Primary-view weight for fusion");
    cmd->add_option("--modality", f.modality, "multimodal, text or image")->check(CLI::IsMember({"multimodal", "text", "image"}));
    cmd->add_option("--views", f.views, "all or primary")->check(CLI::IsMember({"all", "primary"}));
  };
  auto* index_cmd = app.add_subcommand("index", "Build and save the fused-embedding index");
  index_cmd->add_option("--data", ix.data, "Dataset directory")->required();
  index_cmd->add_option("--model", ix.model, "Model file")->required();
  index_cmd->add_option("--out", ix.out, "Output index file (.ftai)")->required();
  add_index_flags(index_cmd, ix.flags);

  SearchArgs se;
  auto* search_cmd = app.add_subcommand("search", "Top-k search with a text query");
  search_cmd->add_option("--index", se.index, "Index file")->required();
  search_cmd->add_option("--model", se.model, "Model file")->required();
  search_cmd->add_option("--data", se.data, "Dataset directory (for --interaction/--listing)");
  search_cmd->add_option("--interaction", se.interaction, "Use this interaction's query");
  search_cmd->add_option("--listing", se.listing, "Use this listing's title as the query");
  search_cmd->add_option("--query", se.query, "Raw query features, comma separated")->delimiter(',');
  search_cmd->add_option("--k", se.k, "Number of hits");

  auto* eval_cmd = app.add_subcommand("eval", "Retrieval evaluation");
  eval_cmd->require_subcommand(1);
  EvalQ2iArgs q2i;
  auto* q2i_cmd = eval_cmd->add_subcommand("q2i", "Zero-shot query-to-item recall@k over the click log");
  q2i_cmd->add_option("--data", q2i.data, "Dataset directory")->required();
  q2i_cmd->add_option("--model", q2i.model, "Model file")->required();
  q2i_cmd->add_option("--index", q2i.index, "Prebuilt index (default: build from --data)");
  q2i_cmd->add_option("--k", q2i.ks, "Strictly ascending cutoffs")->delimiter(',');
  q2i_cmd->add_flag("--by-category", q2i.by_category, "Add per-category recall");
  add_index_flags(q2i_cmd, q2i.flags);
  EvalCrossArgs cv;
  auto* cross_cmd = eval_cmd->add_subcommand("crossview", "Cross-view self-retrieval recall@k");
  cross_cmd->add_option("--data", cv.data, "Dataset directory")->required();
  cross_cmd->add_option("--model", cv.model, "Model file")->required();
  cross_cmd->add_option("--source", cv.source, "title, primary_image, nonprimary_image or pseudo_query");
  cross_cmd->add_option("--target", cv.target, "title, primary_image, nonprimary_image or pseudo_query");
  cross_cmd->add_option("--k", cv.k, "Cutoff");

  OtCheckArgs ot;
  auto* ot_cmd = app.add_subcommand("ot-check", "Check exact OT <= factorized coupling cost on random instances");
  ot_cmd->add_option("--n", ot.n, "Max image views per instance");
  ot_cmd->add_option("--m", ot.m, "Max text views per instance");
  ot_cmd->add_option("--trials", ot.trials, "Number of random instances");
  ot_cmd->add_option("--dim", ot.dim, "Embedding dimension");
  ot_cmd->add_option("--seed", ot.seed, "Seed (FTX_SEED fallback)");

  BenchArgs be;
  auto* bench_cmd = app.add_subcommand("bench", "Per-step cost of training versus view count");
  bench_cmd->add_option("--views", be.views, "View counts, comma separated")->delimiter(',');
  bench_cmd->add_option("--batch", be.batch, "Batch size");
  bench_cmd->add_option("--steps", be.steps, "Timed steps per view count");
  bench_cmd->add_option("--warmup", be.warmup, "Untimed warmup steps");
  bench_cmd->add_option("--raw-dim", be.raw, "Raw feature dimension");
  bench_cmd->add_option("--dim", be.dim, "Embedding dimension");
  bench_cmd->add_option("--seed", be.seed, "Seed (FTX_SEED fallback)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    if (*gen_cmd) return cmd_gen_data(gen);
    if (*train_cmd) return cmd_train(tr);
    if (*index_cmd) return cmd_index(ix);
    if (*search_cmd) return cmd_search(se);
    if (*q2i_cmd) return cmd_eval_q2i(q2i);
    if (*cross_cmd) return cmd_eval_crossview(cv);
    if (*ot_cmd) return cmd_ot_check(ot);
    if (*bench_cmd) return cmd_bench(be);
  } catch (const fta::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kProperty;
  }
  return kConfig;
}
