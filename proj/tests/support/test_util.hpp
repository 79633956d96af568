#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "facet/embedding.hpp"
#include "facet/search.hpp"
#include "facet/store.hpp"

namespace facet::test {

inline std::vector<float> random_unit(std::mt19937_64& rng, std::size_t dim) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> raw(dim);
  for (auto& x : raw) x = gauss(rng);
  return normalize(std::span<const double>(raw)).values();
}

inline EmbeddingStore random_store(std::mt19937_64& rng, std::size_t count, std::size_t dim,
                                   const std::string& tag = "general") {
  EmbeddingStore store(tag, dim);
  for (std::size_t i = 0; i < count; ++i) {
    store.add("item_" + std::to_string(i), EmbeddingVector(random_unit(rng, dim)));
  }
  return store;
}

// Independent oracle: score every candidate, full sort by (score desc, id
// asc), take k. Mirrors the engine's 64-bit accumulation order so scores are
// bit-identical.
inline std::vector<ScoredId> naive_top_k(const EmbeddingStore& store,
                                         const std::vector<ItemId>& candidates,
                                         const EmbeddingVector& q, std::size_t k) {
  std::vector<ScoredId> scored;
  for (const auto& id : candidates) {
    double acc = 0.0;
    const auto row = store.row(store.index_of(id));
    for (std::size_t j = 0; j < row.size(); ++j) {
      acc += static_cast<double>(row[j]) * static_cast<double>(q[j]);
    }
    scored.push_back(ScoredId{id, acc});
  }
  std::sort(scored.begin(), scored.end(), [](const ScoredId& a, const ScoredId& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });
  if (scored.size() > k) scored.resize(k);
  return scored;
}

class TempDir {
 public:
  explicit TempDir(const std::string& label) {
    static std::atomic<std::uint64_t> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("facet_" + label + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter.fetch_add(1)));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path file(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace facet::test
