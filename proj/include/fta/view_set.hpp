#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "fta/error.hpp"
#include "fta/linalg.hpp"

namespace fta {

enum class Modality { image, text };

/// Ordered views of one modality of one listing. Element 0 is the primary
/// view (the seller-curated primary image or the title).
class ViewSet {
 public:
  ViewSet(std::vector<Embedding> views, Modality modality) : views_(std::move(views)), modality_(modality) {
    if (views_.empty()) throw Error(ErrorCode::Empty, "view set needs at least one view");
    const std::size_t d = views_.front().size();
    if (d == 0) throw Error(ErrorCode::DimensionMismatch, "views must have positive dimension");
    for (const auto& v : views_) {
      require_same_dim(v.size(), d, "view dimension");
      if (!all_finite(v)) throw Error(ErrorCode::NumericalFailure, "non-finite view entry");
    }
  }

  std::size_t size() const noexcept { return views_.size(); }
  std::size_t dim() const noexcept { return views_.front().size(); }
  Modality modality() const noexcept { return modality_; }

  const Embedding& primary() const noexcept { return views_.front(); }
  const Embedding& operator[](std::size_t i) const { return views_.at(i); }
  const std::vector<Embedding>& views() const noexcept { return views_; }

 private:
  std::vector<Embedding> views_;
  Modality modality_;
};

}  // namespace fta
