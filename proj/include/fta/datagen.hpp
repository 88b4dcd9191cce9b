#pragma once

// Seeded synthetic marketplace: listings with multi-view image and text
// features generated from a hidden latent, plus a click log whose queries
// mention details the primary views do not show.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "fta/error.hpp"
#include "fta/linalg.hpp"
#include "fta/rng.hpp"

namespace fta {

using FeatureVector = std::vector<double>;

struct Listing {
  std::string id;
  std::string category;
  std::vector<FeatureVector> image_views;  // [0] is the primary image
  std::vector<FeatureVector> text_views;   // [0] is the title, the rest pseudo-queries
  FeatureVector latent;                    // diagnostics only

  friend bool operator==(const Listing&, const Listing&) = default;
};

struct Interaction {
  FeatureVector query_features;
  std::string clicked_listing_id;

  friend bool operator==(const Interaction&, const Interaction&) = default;
};

struct SyntheticConfig {
  std::size_t num_listings = 1000;
  std::size_t num_categories = 10;
  std::size_t image_views_n = 6;
  std::size_t text_views_m = 10;
  std::size_t latent_core_dim = 8;
  std::size_t latent_detail_dim = 8;
  std::size_t raw_dim = 32;
  double view_noise = 1.0;
  double query_noise = 0.1;
  double interactions_per_listing_rate = 0.29;
  double listing_coverage = 0.15;  // cap on the fraction of listings that receive clicks
  double aux_detail_fraction = 0.5;           // chance a non-primary image shows a given detail coordinate
  double pseudo_query_detail_fraction = 0.5;  // same for pseudo-queries
  std::uint64_t seed = 0;

  void validate() const {
    auto fail = [](const std::string& msg) { throw Error(ErrorCode::ConfigInvalid, msg); };
    if (num_categories == 0) fail("num_categories must be >= 1");
    if (image_views_n == 0 || text_views_m == 0) fail("each modality needs at least one view");
    if (latent_core_dim == 0) fail("latent_core_dim must be >= 1");
    if (raw_dim == 0) fail("raw_dim must be >= 1");
    if (!(view_noise >= 0.0) || !(query_noise >= 0.0)) fail("noise levels must be nonnegative");
    if (!(interactions_per_listing_rate >= 0.0 && interactions_per_listing_rate <= 1.0)) {
      fail("interactions_per_listing_rate must lie in [0, 1]");
    }
    if (!(listing_coverage > 0.0 && listing_coverage <= 1.0)) fail("listing_coverage must lie in (0, 1]");
    if (!(aux_detail_fraction >= 0.0 && aux_detail_fraction <= 1.0)) fail("aux_detail_fraction must lie in [0, 1]");
    if (!(pseudo_query_detail_fraction >= 0.0 && pseudo_query_detail_fraction <= 1.0)) {
      fail("pseudo_query_detail_fraction must lie in [0, 1]");
    }
  }

  std::size_t latent_dim() const { return latent_core_dim + latent_detail_dim; }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SyntheticConfig, num_listings, num_categories, image_views_n, text_views_m,
                                                latent_core_dim, latent_detail_dim, raw_dim, view_noise, query_noise,
                                                interactions_per_listing_rate, listing_coverage, aux_detail_fraction,
                                                pseudo_query_detail_fraction, seed)

/// Parses a config document; unknown keys and type errors are ConfigInvalid.
inline SyntheticConfig synthetic_config_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw Error(ErrorCode::ConfigInvalid, "config must be a JSON object");
  const nlohmann::json known = SyntheticConfig{};
  for (const auto& [key, value] : doc.items()) {
    if (!known.contains(key)) throw Error(ErrorCode::ConfigInvalid, "unknown config key '" + key + "'");
  }
  SyntheticConfig cfg;
  try {
    cfg = doc.get<SyntheticConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigInvalid, e.what());
  }
  cfg.validate();
  return cfg;
}

/// Prompt used by an LLM-backed pseudo-query provider; `{title}` is replaced
/// by the listing title. The shipped provider is synthetic and ignores it.
inline constexpr const char* kPseudoQueryPromptTemplate =
    "You are a creative assistant helping improve search suggestions on an E-commerce Platform.\n"
    "Given a product title, generate 5--10 short, diverse, and imaginative search queries a curious shopper might use.\n"
    "Do NOT repeat the title directly. Instead, think about real user needs, use cases, related problems, or benefits.\n"
    "Each query should be a short phrase --- 3 to 10 words --- like how people search.\n"
    "Now generate queries for the following product:\n"
    "Product Title: {title}\n"
    "Search Queries:";

struct PseudoQueryRequest {
  std::span<const double> title_features;
  std::span<const double> latent;  // only synthetic providers can see this
  std::size_t listing_index = 0;
  std::size_t count = 0;
};

/// Generates auxiliary text views for a listing from its title.
class PseudoQueryProvider {
 public:
  virtual ~PseudoQueryProvider() = default;
  virtual std::vector<FeatureVector> generate(const PseudoQueryRequest& request) const = 0;
};

namespace detail {

// P [core; mask * detail] + noise
inline FeatureVector project_view(const Matrix& projection, std::span<const double> latent, std::size_t core_dim,
                                  std::span<const std::uint8_t> detail_mask, double noise, Rng& rng) {
  std::vector<double> visible(latent.begin(), latent.end());
  for (std::size_t k = core_dim; k < visible.size(); ++k) {
    if (!detail_mask[k - core_dim]) visible[k] = 0.0;
  }
  FeatureVector out = matvec(projection, visible);
  if (noise > 0.0) {
    for (double& x : out) x += noise * rng.normal();
  }
  return out;
}

inline std::vector<std::uint8_t> random_mask(std::size_t size, double keep, Rng& rng) {
  std::vector<std::uint8_t> mask(size);
  for (std::size_t k = 0; k < size; ++k) mask[k] = rng.uniform() < keep ? 1 : 0;
  return mask;
}

inline Matrix random_projection(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix p(rows, cols);
  const double scale = 1.0 / std::sqrt(static_cast<double>(cols));
  for (double& x : p.data) x = scale * rng.normal();
  return p;
}

}  // namespace detail

/// Pseudo-queries as text-modality views that each reveal a random subset of
/// the listing's detail coordinates.
class SyntheticPseudoQueryProvider final : public PseudoQueryProvider {
 public:
  SyntheticPseudoQueryProvider(Matrix text_projection, std::size_t core_dim, double detail_fraction, double noise,
                               std::uint64_t seed)
      : projection_(std::move(text_projection)),
        core_dim_(core_dim),
        detail_fraction_(detail_fraction),
        noise_(noise),
        seed_(seed) {}

  std::vector<FeatureVector> generate(const PseudoQueryRequest& request) const override {
    require_same_dim(request.latent.size(), projection_.cols, "latent vs text projection");
    Rng rng(derive_seed(seed_, request.listing_index));
    std::vector<FeatureVector> queries;
    queries.reserve(request.count);
    const std::size_t detail_dim = projection_.cols - core_dim_;
    for (std::size_t q = 0; q < request.count; ++q) {
      const auto mask = detail::random_mask(detail_dim, detail_fraction_, rng);
      queries.push_back(detail::project_view(projection_, request.latent, core_dim_, mask, noise_, rng));
    }
    return queries;
  }

 private:
  Matrix projection_;
  std::size_t core_dim_;
  double detail_fraction_;
  double noise_;
  std::uint64_t seed_;
};

/// The fixed random maps from latent space to raw image / text features.
struct ModalityProjections {
  Matrix image;
  Matrix text;
};

inline ModalityProjections make_projections(const SyntheticConfig& cfg) {
  Rng rng(derive_seed(cfg.seed, 0x70726f6a));
  Matrix image = detail::random_projection(cfg.raw_dim, cfg.latent_dim(), rng);
  Matrix text = detail::random_projection(cfg.raw_dim, cfg.latent_dim(), rng);
  return {std::move(image), std::move(text)};
}

inline std::string listing_id(std::size_t index) {
  std::string digits = std::to_string(index);
  return "L" + std::string(digits.size() < 7 ? 7 - digits.size() : 0, '0') + digits;
}

inline std::string category_name(std::size_t index) { return "cat" + std::to_string(index); }

/// Catalog with the default synthetic pseudo-query provider.
inline std::vector<Listing> generate_catalog(const SyntheticConfig& cfg, const PseudoQueryProvider* provider = nullptr) {
  cfg.validate();
  const ModalityProjections proj = make_projections(cfg);
  std::unique_ptr<PseudoQueryProvider> owned;
  if (provider == nullptr) {
    owned = std::make_unique<SyntheticPseudoQueryProvider>(proj.text, cfg.latent_core_dim, cfg.pseudo_query_detail_fraction,
                                                           cfg.view_noise, derive_seed(cfg.seed, 0x7073710a));
    provider = owned.get();
  }

  // Category centroids live in the core block; detail coordinates are
  // listing-specific so that no primary view can predict them.
  Rng centroid_rng(derive_seed(cfg.seed, 0x63656e74));
  std::vector<std::vector<double>> centroids(cfg.num_categories, std::vector<double>(cfg.latent_core_dim));
  for (auto& c : centroids) {
    for (double& x : c) x = centroid_rng.normal();
  }

  const std::vector<std::uint8_t> none_mask(cfg.latent_detail_dim, 0);

  std::vector<Listing> catalog;
  catalog.reserve(cfg.num_listings);
  for (std::size_t l = 0; l < cfg.num_listings; ++l) {
    Rng rng(derive_seed(cfg.seed, 0x6c000000ULL + l));
    Listing listing;
    listing.id = listing_id(l);
    const std::size_t cat = static_cast<std::size_t>(rng.index(cfg.num_categories));
    listing.category = category_name(cat);
    listing.latent.resize(cfg.latent_dim());
    for (std::size_t k = 0; k < cfg.latent_core_dim; ++k) listing.latent[k] = centroids[cat][k] + rng.normal();
    for (std::size_t k = cfg.latent_core_dim; k < cfg.latent_dim(); ++k) listing.latent[k] = rng.normal();

    listing.image_views.push_back(
        detail::project_view(proj.image, listing.latent, cfg.latent_core_dim, none_mask, cfg.view_noise, rng));
    for (std::size_t i = 1; i < cfg.image_views_n; ++i) {
      const auto mask = detail::random_mask(cfg.latent_detail_dim, cfg.aux_detail_fraction, rng);
      listing.image_views.push_back(
          detail::project_view(proj.image, listing.latent, cfg.latent_core_dim, mask, cfg.view_noise, rng));
    }

    listing.text_views.push_back(
        detail::project_view(proj.text, listing.latent, cfg.latent_core_dim, none_mask, cfg.view_noise, rng));
    if (cfg.text_views_m > 1) {
      auto queries = provider->generate(PseudoQueryRequest{listing.text_views.front(), listing.latent, l, cfg.text_views_m - 1});
      if (queries.size() != cfg.text_views_m - 1) throw Error(ErrorCode::ConfigInvalid, "provider returned wrong query count");
      for (auto& q : queries) {
        require_same_dim(q.size(), cfg.raw_dim, "pseudo-query features");
        listing.text_views.push_back(std::move(q));
      }
    }
    catalog.push_back(std::move(listing));
  }
  return catalog;
}

/// Click log: queries are text projections of the full latent plus noise;
/// clicks fall on a capped pool of covered listings.
inline std::vector<Interaction> generate_interactions(const SyntheticConfig& cfg, std::span<const Listing> catalog) {
  cfg.validate();
  if (catalog.empty()) throw Error(ErrorCode::Empty, "catalog is empty");
  const auto count = static_cast<std::size_t>(std::llround(cfg.interactions_per_listing_rate * static_cast<double>(catalog.size())));
  if (count == 0) return {};

  const ModalityProjections proj = make_projections(cfg);
  Rng rng(derive_seed(cfg.seed, 0x696e7472));
  std::vector<std::size_t> pool(catalog.size());
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  rng.shuffle(pool);
  const auto pool_size = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(cfg.listing_coverage * static_cast<double>(catalog.size()))));
  pool.resize(std::min(pool_size, catalog.size()));

  const std::vector<std::uint8_t> all_mask(cfg.latent_detail_dim, 1);

  std::vector<Interaction> log;
  log.reserve(count);
  for (std::size_t q = 0; q < count; ++q) {
    const Listing& target = catalog[pool[rng.index(pool.size())]];
    require_same_dim(target.latent.size(), cfg.latent_dim(), "listing latent");
    log.push_back(Interaction{
        detail::project_view(proj.text, target.latent, cfg.latent_core_dim, all_mask, cfg.query_noise, rng),
        target.id});
  }
  return log;
}

struct Dataset {
  std::vector<Listing> listings;
  std::vector<Interaction> interactions;
};

inline constexpr const char* kListingsFile = "listings.jsonl";
inline constexpr const char* kInteractionsFile = "interactions.jsonl";

inline nlohmann::json to_json(const Listing& l) {
  nlohmann::json j = {{"id", l.id}, {"category", l.category}, {"image_views", l.image_views}, {"text_views", l.text_views}};
  if (!l.latent.empty()) j["latent"] = l.latent;
  return j;
}

inline nlohmann::json to_json(const Interaction& i) { return {{"query", i.query_features}, {"clicked_id", i.clicked_listing_id}}; }

inline void serialize_dataset(std::span<const Listing> listings, std::span<const Interaction> interactions,
                              const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir.string() + ": " + ec.message());
  auto write_lines = [&](const std::filesystem::path& path, auto items) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    // nlohmann renders doubles with the shortest round-trip decimal form.
    for (const auto& item : items) out << to_json(item).dump() << '\n';
    out.flush();
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
  };
  write_lines(dir / kListingsFile, listings);
  write_lines(dir / kInteractionsFile, interactions);
}

namespace detail {

template <typename Parse>
void read_json_lines(const std::filesystem::path& path, Parse&& parse) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      parse(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::FormatError, path.filename().string() + " line " + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(ErrorCode::FormatError, path.filename().string() + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (in.bad()) throw Error(ErrorCode::IoError, "read failed for " + path.string());
}

inline std::vector<FeatureVector> view_list(const nlohmann::json& j, const char* key) {
  auto views = j.at(key).get<std::vector<FeatureVector>>();
  if (views.empty()) throw Error(ErrorCode::FormatError, std::string(key) + " is empty");
  for (const auto& v : views) {
    if (v.size() != views.front().size() || v.empty()) throw Error(ErrorCode::FormatError, std::string(key) + " has ragged dims");
  }
  return views;
}

}  // namespace detail

inline Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset data;
  detail::read_json_lines(dir / kListingsFile, [&](const nlohmann::json& j) {
    Listing l;
    l.id = j.at("id").get<std::string>();
    l.category = j.at("category").get<std::string>();
    l.image_views = detail::view_list(j, "image_views");
    l.text_views = detail::view_list(j, "text_views");
    if (j.contains("latent")) l.latent = j.at("latent").get<FeatureVector>();
    if (!data.listings.empty() && (l.image_views.front().size() != data.listings.front().image_views.front().size() ||
                                   l.text_views.front().size() != data.listings.front().text_views.front().size())) {
      throw Error(ErrorCode::FormatError, "feature dimension differs from earlier listings");
    }
    data.listings.push_back(std::move(l));
  });
  detail::read_json_lines(dir / kInteractionsFile, [&](const nlohmann::json& j) {
    data.interactions.push_back(
        Interaction{j.at("query").get<FeatureVector>(), j.at("clicked_id").get<std::string>()});
  });
  return data;
}

}  // namespace fta
