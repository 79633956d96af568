#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "facet/embedding.hpp"
#include "facet/errors.hpp"
#include "facet/store.hpp"

namespace facet {

struct ScoredId {
  ItemId id;
  double score;  // dot product of unit vectors, 64-bit accumulation

  bool operator==(const ScoredId&) const = default;
};

struct RankResult {
  ItemId target;
  std::size_t rank;  // 1-based
  std::size_t pool_size;
};

namespace detail {

// Total order used everywhere: score descending, ties broken by ascending id.
inline bool scored_before(const ScoredId& a, const ScoredId& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.id < b.id;
}

inline std::vector<ScoredId> score_candidates(const EmbeddingStore& store,
                                              std::span<const ItemId> candidates,
                                              const EmbeddingVector& q) {
  if (q.dim() != store.dim()) {
    throw DimMismatchError("search: query dim " + std::to_string(q.dim()) +
                           " does not match store dim " + std::to_string(store.dim()));
  }
  std::vector<ScoredId> scored;
  scored.reserve(candidates.size());
  for (const auto& id : candidates) {
    const auto row = store.row(store.index_of(id));
    scored.push_back(ScoredId{id, dot(row, q.span())});
  }
  return scored;
}

}  // namespace detail

// Exact top-k by inner product over a candidate subset, descending score,
// ties by ascending id. Returns min(k, |candidates|) entries.
inline std::vector<ScoredId> top_k(const EmbeddingStore& store,
                                   std::span<const ItemId> candidates,
                                   const EmbeddingVector& q, std::size_t k) {
  if (k == 0) {
    throw InvalidArgumentError("top_k: k must be >= 1");
  }
  auto scored = detail::score_candidates(store, candidates, q);
  const std::size_t take = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take),
                    scored.end(), detail::scored_before);
  scored.resize(take);
  return scored;
}

// Top-k over every row in the store.
inline std::vector<ScoredId> top_k(const EmbeddingStore& store, const EmbeddingVector& q,
                                   std::size_t k) {
  return top_k(store, store.ids(), q, k);
}

// 1-based rank of `target` among `candidates`: 1 + #(strictly greater score)
// + #(equal score with smaller id). Consistent with top_k ordering.
inline RankResult rank_of(const EmbeddingStore& store, std::span<const ItemId> candidates,
                          const EmbeddingVector& q, const ItemId& target) {
  if (q.dim() != store.dim()) {
    throw DimMismatchError("rank_of: query dim mismatch");
  }
  bool found = false;
  for (const auto& id : candidates) {
    if (id == target) {
      found = true;
      break;
    }
  }
  if (!found) {
    throw UnknownIdError("rank_of: target " + target + " not among candidates");
  }
  const auto target_row = store.row(store.index_of(target));
  const double target_score = dot(target_row, q.span());

  std::size_t rank = 1;
  for (const auto& id : candidates) {
    if (id == target) continue;
    const auto row = store.row(store.index_of(id));
    const double s = dot(row, q.span());
    if (s > target_score || (s == target_score && id < target)) ++rank;
  }
  return RankResult{target, rank, candidates.size()};
}

}  // namespace facet
