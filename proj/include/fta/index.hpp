#pragma once

// Offline fused-embedding index with exact cosine k-NN, its binary file
// format, and the retrieval evaluation harnesses.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"

#include "fta/binary_io.hpp"
#include "fta/datagen.hpp"
#include "fta/encoder.hpp"
#include "fta/error.hpp"
#include "fta/fusion.hpp"
#include "fta/linalg.hpp"

namespace fta {

inline constexpr double kIndexUnitTolerance = 1e-6;

struct IndexEntry {
  std::string listing_id;
  Embedding vector;
};

/// Immutable after construction: one unit vector per unique listing id.
class EmbeddingIndex {
 public:
  explicit EmbeddingIndex(std::size_t dim) : dim_(dim) {
    if (dim == 0) throw Error(ErrorCode::DimensionMismatch, "index dimension must be >= 1");
  }

  void add(std::string listing_id, Embedding vector) {
    require_same_dim(vector.size(), dim_, "index vector");
    if (!all_finite(vector) || std::abs(norm(vector) - 1.0) > kIndexUnitTolerance) {
      throw Error(ErrorCode::NumericalFailure, "index vector for '" + listing_id + "' is not unit norm");
    }
    if (!positions_.emplace(listing_id, entries_.size()).second) {
      throw Error(ErrorCode::ConfigInvalid, "duplicate listing id '" + listing_id + "'");
    }
    entries_.push_back(IndexEntry{std::move(listing_id), std::move(vector)});
  }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  const std::vector<IndexEntry>& entries() const noexcept { return entries_; }
  const IndexEntry& operator[](std::size_t i) const { return entries_.at(i); }

  bool contains(std::string_view id) const { return positions_.count(std::string(id)) > 0; }

  /// Categories are kept in memory only; the file format does not carry them.
  void set_category(const std::string& id, std::string category) {
    if (!contains(id)) throw Error(ErrorCode::UnknownListing, "no listing '" + id + "' in index");
    categories_[id] = std::move(category);
  }

  std::optional<std::string> category(const std::string& id) const {
    auto it = categories_.find(id);
    if (it == categories_.end()) return std::nullopt;
    return it->second;
  }

  bool has_categories() const noexcept { return !categories_.empty(); }

 private:
  std::size_t dim_;
  std::vector<IndexEntry> entries_;
  std::unordered_map<std::string, std::size_t> positions_;
  std::unordered_map<std::string, std::string> categories_;
};

enum class IndexModality { multimodal, text_only, image_only };

/// Which views feed the per-modality fusion.
enum class IndexViews {
  all,           // design-weight fusion over every view
  primary_only,  // title and primary image only (single-view baseline)
};

struct IndexBuildOptions {
  WeightScheme scheme{kDefaultAlpha};
  IndexModality modality = IndexModality::multimodal;
  IndexViews views = IndexViews::all;
};

namespace detail {

inline Embedding fused_modality(const Encoder& encoder, const std::vector<FeatureVector>& views, const IndexBuildOptions& opt) {
  const std::size_t count = opt.views == IndexViews::all ? views.size() : 1;
  std::vector<Embedding> encoded;
  encoded.reserve(count);
  for (std::size_t i = 0; i < count; ++i) encoded.push_back(encoder.encode(views[i]));
  const SimplexWeights w = design_weights(count, opt.scheme);
  return fuse(std::span<const Embedding>(encoded), w.values(), FusionMode::normalized);
}

}  // namespace detail

/// The listing's item vector as stored in the index.
inline Embedding listing_embedding(const Listing& listing, const DualEncoder& encoders, const IndexBuildOptions& opt) {
  if (listing.image_views.empty() || listing.text_views.empty()) {
    throw Error(ErrorCode::MissingView, "listing " + listing.id + " lacks a view");
  }
  switch (opt.modality) {
    case IndexModality::text_only: return detail::fused_modality(encoders.text, listing.text_views, opt);
    case IndexModality::image_only: return detail::fused_modality(encoders.image, listing.image_views, opt);
    case IndexModality::multimodal: break;
  }
  const Embedding text = detail::fused_modality(encoders.text, listing.text_views, opt);
  const Embedding image = detail::fused_modality(encoders.image, listing.image_views, opt);
  return fuse_multimodal(text, image, FusionMode::normalized);
}

inline EmbeddingIndex build_index(std::span<const Listing> catalog, const DualEncoder& encoders, const IndexBuildOptions& opt) {
  if (catalog.empty()) throw Error(ErrorCode::Empty, "catalog is empty");
  EmbeddingIndex index(encoders.text.config().output_dim);
  for (const Listing& l : catalog) {
    index.add(l.id, listing_embedding(l, encoders, opt));
    index.set_category(l.id, l.category);
  }
  return index;
}

// Index file: "FTAI", u32 version, u32 dim, u64 count, then per record a u16
// id length, the UTF-8 id bytes and dim little-endian f32 values.
inline constexpr std::uint32_t kIndexFormatVersion = 1;

inline void write_index(std::ostream& out, const EmbeddingIndex& index) {
  binary::write_magic(out, "FTAI");
  binary::write_le<std::uint32_t>(out, kIndexFormatVersion);
  binary::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(index.dim()));
  binary::write_le<std::uint64_t>(out, index.size());
  for (const auto& e : index.entries()) {
    if (e.listing_id.size() > 0xffff) throw Error(ErrorCode::FormatError, "listing id longer than 65535 bytes");
    binary::write_le<std::uint16_t>(out, static_cast<std::uint16_t>(e.listing_id.size()));
    out.write(e.listing_id.data(), static_cast<std::streamsize>(e.listing_id.size()));
    for (double x : e.vector) binary::write_f32(out, static_cast<float>(x));
  }
}

inline EmbeddingIndex read_index(std::istream& in) {
  binary::expect_magic(in, "FTAI");
  const auto version = binary::read_le<std::uint32_t>(in, "version");
  if (version != kIndexFormatVersion) throw Error(ErrorCode::FormatError, "unsupported index version " + std::to_string(version));
  const auto dim = binary::read_le<std::uint32_t>(in, "dim");
  const auto count = binary::read_le<std::uint64_t>(in, "count");
  if (dim == 0) throw Error(ErrorCode::FormatError, "index dimension is zero");
  EmbeddingIndex index(dim);
  for (std::uint64_t r = 0; r < count; ++r) {
    const auto len = binary::read_le<std::uint16_t>(in, "id length");
    std::string id(len, '\0');
    binary::read_exact(in, id.data(), len, "id");
    Embedding v(dim);
    for (double& x : v) x = binary::read_f32(in, "vector");
    try {
      index.add(std::move(id), std::move(v));
    } catch (const Error& e) {
      throw Error(ErrorCode::FormatError, e.what());
    }
  }
  binary::expect_eof(in);
  return index;
}

inline void save_index(const EmbeddingIndex& index, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  write_index(out, index);
  out.flush();
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

inline EmbeddingIndex load_index(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  return read_index(in);
}

struct SearchHit {
  std::string listing_id;
  double score = 0.0;
  friend bool operator==(const SearchHit&, const SearchHit&) = default;
};

/// Exact top-k by dot product, descending; ties by ascending id.
inline std::vector<SearchHit> knn(const EmbeddingIndex& index, std::span<const double> query, std::size_t k) {
  if (index.empty()) throw Error(ErrorCode::EmptyIndex, "index has no entries");
  require_same_dim(query.size(), index.dim(), "query vs index dimension");
  if (k == 0) throw Error(ErrorCode::ConfigInvalid, "k must be >= 1");
  std::vector<std::pair<double, std::size_t>> scored;
  scored.reserve(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) scored.emplace_back(dot(index[i].vector, query), i);
  const auto before = [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return index[a.second].listing_id < index[b.second].listing_id;
  };
  const std::size_t top = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(top), scored.end(), before);
  std::vector<SearchHit> hits;
  hits.reserve(top);
  for (std::size_t r = 0; r < top; ++r) hits.push_back(SearchHit{index[scored[r].second].listing_id, scored[r].first});
  return hits;
}

struct EvalReport {
  std::vector<std::size_t> ks;
  std::vector<double> recall;  // parallel to ks
  std::size_t interactions = 0;
  std::map<std::string, std::vector<double>> per_category_recall;
  std::map<std::string, std::size_t> per_category_count;

  double recall_at(std::size_t k) const {
    for (std::size_t i = 0; i < ks.size(); ++i) {
      if (ks[i] == k) return recall[i];
    }
    throw Error(ErrorCode::ConfigInvalid, "k=" + std::to_string(k) + " not in report");
  }
};

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json recall = nlohmann::json::object();
  for (std::size_t i = 0; i < r.ks.size(); ++i) recall["R@" + std::to_string(r.ks[i])] = r.recall[i];
  nlohmann::json j = {{"ks", r.ks}, {"recall", recall}, {"interactions", r.interactions}};
  if (!r.per_category_recall.empty()) {
    nlohmann::json cats = nlohmann::json::object();
    for (const auto& [cat, values] : r.per_category_recall) {
      nlohmann::json c = {{"count", r.per_category_count.at(cat)}};
      for (std::size_t i = 0; i < r.ks.size(); ++i) c["R@" + std::to_string(r.ks[i])] = values[i];
      cats[cat] = c;
    }
    j["per_category"] = cats;
  }
  return j;
}

/// ks must be non-empty, >= 1 and strictly ascending.
inline void validate_cutoffs(std::span<const std::size_t> ks) {
  if (ks.empty()) throw Error(ErrorCode::ConfigInvalid, "no cutoffs given");
  for (std::size_t i = 0; i < ks.size(); ++i) {
    if (ks[i] == 0) throw Error(ErrorCode::ConfigInvalid, "cutoffs must be >= 1");
    if (i > 0 && ks[i] <= ks[i - 1]) throw Error(ErrorCode::ConfigInvalid, "cutoffs must be strictly ascending");
  }
}

/// Zero-shot query-to-item recall: the text encoder embeds each query.
inline EvalReport recall_at_k(const EmbeddingIndex& index, const Encoder& query_encoder,
                              std::span<const Interaction> interactions, std::span<const std::size_t> ks) {
  validate_cutoffs(ks);
  for (const auto& it : interactions) {
    if (!index.contains(it.clicked_listing_id)) {
      throw Error(ErrorCode::UnknownListing, "clicked listing '" + it.clicked_listing_id + "' is not indexed");
    }
  }
  EvalReport report;
  report.ks.assign(ks.begin(), ks.end());
  report.recall.assign(ks.size(), 0.0);
  report.interactions = interactions.size();
  std::map<std::string, std::vector<double>> hits_by_cat;
  std::vector<double> hits(ks.size(), 0.0);

  for (const auto& it : interactions) {
    const Embedding q = query_encoder.encode(it.query_features);
    const auto top = knn(index, q, ks.back());
    std::size_t rank = top.size();  // 0-based; == size means not retrieved
    for (std::size_t r = 0; r < top.size(); ++r) {
      if (top[r].listing_id == it.clicked_listing_id) {
        rank = r;
        break;
      }
    }
    const auto cat = index.category(it.clicked_listing_id);
    if (cat) {
      hits_by_cat.try_emplace(*cat, ks.size(), 0.0);
      ++report.per_category_count[*cat];
    }
    for (std::size_t i = 0; i < ks.size(); ++i) {
      if (rank < ks[i]) {
        hits[i] += 1.0;
        if (cat) hits_by_cat[*cat][i] += 1.0;
      }
    }
  }
  if (!interactions.empty()) {
    for (std::size_t i = 0; i < ks.size(); ++i) report.recall[i] = hits[i] / static_cast<double>(interactions.size());
  }
  for (auto& [cat, h] : hits_by_cat) {
    const double n = static_cast<double>(report.per_category_count[cat]);
    for (double& x : h) x /= n;
    report.per_category_recall[cat] = std::move(h);
  }
  return report;
}

enum class ViewRole { title, primary_image, nonprimary_image, pseudo_query };

inline std::string_view to_string(ViewRole role) {
  switch (role) {
    case ViewRole::title: return "title";
    case ViewRole::primary_image: return "primary_image";
    case ViewRole::nonprimary_image: return "nonprimary_image";
    case ViewRole::pseudo_query: return "pseudo_query";
  }
  return "unknown";
}

inline std::optional<ViewRole> parse_view_role(std::string_view s) {
  for (ViewRole r : {ViewRole::title, ViewRole::primary_image, ViewRole::nonprimary_image, ViewRole::pseudo_query}) {
    if (to_string(r) == s) return r;
  }
  return std::nullopt;
}

/// The single view playing `role` for this listing, encoded by its tower.
/// Non-primary images and pseudo-queries use the first auxiliary.
inline Embedding encode_view(const Listing& listing, const DualEncoder& encoders, ViewRole role) {
  auto pick = [&](const std::vector<FeatureVector>& views, std::size_t i) -> const FeatureVector& {
    if (views.size() <= i) {
      throw Error(ErrorCode::MissingView, "listing " + listing.id + " has no " + std::string(to_string(role)) + " view");
    }
    return views[i];
  };
  switch (role) {
    case ViewRole::title: return encoders.text.encode(pick(listing.text_views, 0));
    case ViewRole::pseudo_query: return encoders.text.encode(pick(listing.text_views, 1));
    case ViewRole::primary_image: return encoders.image.encode(pick(listing.image_views, 0));
    case ViewRole::nonprimary_image: return encoders.image.encode(pick(listing.image_views, 1));
  }
  throw Error(ErrorCode::MissingView, "unknown view role");
}

/// Self-retrieval recall@k: each listing's source view queries an index of
/// every listing's target view.
inline double cross_view_eval(std::span<const Listing> catalog, const DualEncoder& encoders, ViewRole source,
                              ViewRole target, std::size_t k) {
  if (catalog.empty()) throw Error(ErrorCode::Empty, "catalog is empty");
  EmbeddingIndex index(encoders.text.config().output_dim);
  for (const auto& l : catalog) index.add(l.id, encode_view(l, encoders, target));
  std::size_t hits = 0;
  for (const auto& l : catalog) {
    const auto top = knn(index, encode_view(l, encoders, source), k);
    for (const auto& h : top) {
      if (h.listing_id == l.id) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(catalog.size());
}

}  // namespace fta
