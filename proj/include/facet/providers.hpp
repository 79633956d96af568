#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "facet/embedding.hpp"
#include "facet/errors.hpp"
#include "facet/prompts.hpp"
#include "facet/store.hpp"

namespace facet {

enum class Capability { image_general, image_prompted, text_query };

// What a provider needs to embed one query. File-backed providers look up by
// id, HTTP providers send the text, the synthetic provider resolves the
// (facet, value) pair registered for the id at generation time.
struct QueryRef {
  ItemId id;
  std::string text;
  std::string facet;
  int value_index = -1;
};

// The universal multimodal embedder behind one interface: it maps an image
// (optionally conditioned on a textual prompt) or a text query to a unit
// vector of fixed dimension.
class EmbedderProvider {
 public:
  virtual ~EmbedderProvider() = default;

  virtual std::string id() const = 0;
  virtual std::size_t dim() const = 0;
  virtual bool supports(Capability c) const = 0;

  // General image embedding, no conditioning prompt.
  virtual EmbeddingVector embed_image_general(const ItemId& image) = 0;
  // Image embedding conditioned on a facet question.
  virtual EmbeddingVector embed_image_prompted(const ItemId& image, const PromptSpec& prompt) = 0;
  virtual EmbeddingVector embed_query(const QueryRef& query) = 0;
};

// --- synthetic attribute world ---

struct SyntheticWorldConfig {
  int n_facets = 4;
  int values_per_facet = 5;
  int n_images = 2000;
  double salience_low = 0.1;
  double salience_high = 1.0;
  // Fraction of facets per image drawn high-salience; realized as an exact
  // per-image count of max(1, round(fraction * n_facets)).
  double dominant_fraction = 0.25;
  double query_blend_mu = 3.0;    // coarse facet-presence weight in queries
  double prompt_boost_gamma = 8.0;  // multiplicative boost on the prompted facet
  double noise_scale = 0.01;
  std::uint64_t seed = 17;

  std::size_t dim() const {
    return static_cast<std::size_t>(n_facets) * static_cast<std::size_t>(values_per_facet);
  }

  void validate() const {
    if (n_facets < 2) throw ConfigInvalidError("n_facets must be >= 2");
    if (values_per_facet < 3) throw ConfigInvalidError("values_per_facet must be >= 3");
    if (n_images < 1) throw ConfigInvalidError("n_images must be >= 1");
    if (!(salience_low < salience_high)) {
      throw ConfigInvalidError("salience_low must be < salience_high");
    }
    if (salience_low <= 0.0) throw ConfigInvalidError("salience_low must be positive");
    if (dominant_fraction <= 0.0 || dominant_fraction > 1.0) {
      throw ConfigInvalidError("dominant_fraction must be in (0, 1]");
    }
    if (query_blend_mu < 0.0) throw ConfigInvalidError("query_blend_mu must be >= 0");
    // gamma == 1 is the boost-identity degenerate case and stays legal.
    if (prompt_boost_gamma < 1.0) throw ConfigInvalidError("prompt_boost_gamma must be >= 1");
    if (noise_scale < 0.0) throw ConfigInvalidError("noise_scale must be >= 0");
  }
};

struct SyntheticImage {
  ItemId id;
  std::vector<int> assignment;    // value index per facet
  std::vector<double> salience;   // per facet, low or high
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  return splitmix64(seed ^ splitmix64(salt));
}

}  // namespace detail

// Names used for facets in generated worlds, in a fixed order; worlds larger
// than the standard list continue with numbered attributes.
inline std::vector<std::string> standard_facet_names(std::size_t n) {
  static const std::vector<std::string> kStandard = {
      "animals", "scenes",   "objects",  "count_of_people",
      "materials", "times", "weathers", "gestures"};
  std::vector<std::string> names;
  for (std::size_t i = 0; i < n; ++i) {
    if (i < kStandard.size()) {
      names.push_back(kStandard[i]);
    } else {
      names.push_back("attribute_" + std::to_string(i));
    }
  }
  return names;
}

// Deterministic population of images over n_facets discrete attributes.
// Every image has exactly one value per facet and a per-facet salience that
// models dominant vs non-dominant attributes. The noise vector is drawn once
// per image and shared between general and prompted embeddings.
class SyntheticWorld {
 public:
  explicit SyntheticWorld(SyntheticWorldConfig config,
                          std::vector<std::string> facet_names = {})
      : config_(config) {
    config_.validate();
    facet_names_ = facet_names.empty()
                       ? standard_facet_names(static_cast<std::size_t>(config_.n_facets))
                       : std::move(facet_names);
    if (facet_names_.size() != static_cast<std::size_t>(config_.n_facets)) {
      throw ConfigInvalidError("facet name count does not match n_facets");
    }
    for (std::size_t f = 0; f < facet_names_.size(); ++f) {
      facet_index_.emplace(facet_names_[f], f);
    }

    const int high_count =
        std::max(1, static_cast<int>(std::lround(config_.dominant_fraction * config_.n_facets)));
    std::mt19937_64 rng(detail::mix_seed(config_.seed, 0x5752ULL));
    std::uniform_int_distribution<int> value_dist(0, config_.values_per_facet - 1);
    std::normal_distribution<double> gauss(0.0, 1.0);

    const std::size_t d = config_.dim();
    images_.reserve(static_cast<std::size_t>(config_.n_images));
    noise_.reserve(static_cast<std::size_t>(config_.n_images) * d);
    std::vector<int> facet_order(static_cast<std::size_t>(config_.n_facets));
    for (int i = 0; i < config_.n_images; ++i) {
      SyntheticImage img;
      img.id = "img_" + std::to_string(i);
      img.assignment.resize(static_cast<std::size_t>(config_.n_facets));
      img.salience.assign(static_cast<std::size_t>(config_.n_facets), config_.salience_low);
      for (int f = 0; f < config_.n_facets; ++f) {
        img.assignment[static_cast<std::size_t>(f)] = value_dist(rng);
      }
      for (int f = 0; f < config_.n_facets; ++f) facet_order[static_cast<std::size_t>(f)] = f;
      for (int h = 0; h < high_count; ++h) {
        std::uniform_int_distribution<int> pick(h, config_.n_facets - 1);
        std::swap(facet_order[static_cast<std::size_t>(h)],
                  facet_order[static_cast<std::size_t>(pick(rng))]);
        img.salience[static_cast<std::size_t>(facet_order[static_cast<std::size_t>(h)])] =
            config_.salience_high;
      }
      image_index_.emplace(img.id, images_.size());
      images_.push_back(std::move(img));

      std::mt19937_64 noise_rng(detail::mix_seed(config_.seed, 0x1000000ULL + static_cast<std::uint64_t>(i)));
      for (std::size_t j = 0; j < d; ++j) noise_.push_back(gauss(noise_rng));
    }
  }

  const SyntheticWorldConfig& config() const { return config_; }
  const std::vector<SyntheticImage>& images() const { return images_; }
  const std::vector<std::string>& facet_names() const { return facet_names_; }

  std::size_t facet_index(const std::string& name) const {
    auto it = facet_index_.find(name);
    if (it == facet_index_.end()) {
      throw UnknownFacetError("synthetic world has no facet " + name);
    }
    return it->second;
  }

  std::size_t image_index(const ItemId& id) const {
    auto it = image_index_.find(id);
    if (it == image_index_.end()) {
      throw UnknownImageError("synthetic world has no image " + id);
    }
    return it->second;
  }

  bool has_image(const ItemId& id) const { return image_index_.contains(id); }

  std::string value_name(std::size_t facet, int value) const {
    return facet_names_[facet] + "_" + std::to_string(value);
  }

  void register_query(const ItemId& case_id, std::size_t facet, int value) {
    check_value(facet, value);
    query_table_[case_id] = {facet, value};
  }

  bool has_query(const ItemId& case_id) const { return query_table_.contains(case_id); }

  std::pair<std::size_t, int> query_target(const ItemId& case_id) const {
    auto it = query_table_.find(case_id);
    if (it == query_table_.end()) {
      throw UnknownIdError("no registered query for case " + case_id);
    }
    return it->second;
  }

  // raw = sum_f salience_f(i) * e(f, v_f(i)) + eps * eta(i), normalized.
  // With a prompted facet, that facet's weight is multiplied by gamma;
  // normalization makes the prompted embedding a nonlinear function of the
  // general one.
  EmbeddingVector general_embedding(std::size_t image) const {
    return embed_image_impl(image, -1);
  }

  EmbeddingVector prompted_embedding(std::size_t image, std::size_t facet) const {
    return embed_image_impl(image, static_cast<int>(facet));
  }

  // q = normalize(e(f, v) + (mu / V) * ones over facet block f). The blend
  // term models coarse facet-presence matching: it is what lets a
  // dominant-but-wrong value outscore a correct-but-faint one under general
  // embeddings.
  EmbeddingVector query_embedding(std::size_t facet, int value) const {
    check_value(facet, value);
    const std::size_t v_count = static_cast<std::size_t>(config_.values_per_facet);
    std::vector<double> raw(config_.dim(), 0.0);
    const std::size_t base = facet * v_count;
    const double blend = config_.query_blend_mu / static_cast<double>(v_count);
    for (std::size_t j = 0; j < v_count; ++j) raw[base + j] = blend;
    raw[base + static_cast<std::size_t>(value)] += 1.0;
    return normalize(std::span<const double>(raw));
  }

 private:
  void check_value(std::size_t facet, int value) const {
    if (facet >= facet_names_.size()) {
      throw UnknownFacetError("facet index out of range");
    }
    if (value < 0 || value >= config_.values_per_facet) {
      throw InvalidArgumentError("value index out of range: " + std::to_string(value));
    }
  }

  EmbeddingVector embed_image_impl(std::size_t image, int prompted_facet) const {
    const SyntheticImage& img = images_[image];
    const std::size_t d = config_.dim();
    std::vector<double> raw(d, 0.0);
    for (int f = 0; f < config_.n_facets; ++f) {
      const std::size_t fu = static_cast<std::size_t>(f);
      double weight = img.salience[fu];
      if (f == prompted_facet) weight *= config_.prompt_boost_gamma;
      raw[fu * static_cast<std::size_t>(config_.values_per_facet) +
          static_cast<std::size_t>(img.assignment[fu])] += weight;
    }
    if (config_.noise_scale > 0.0) {
      const double* eta = noise_.data() + image * d;
      for (std::size_t j = 0; j < d; ++j) raw[j] += config_.noise_scale * eta[j];
    }
    return normalize(std::span<const double>(raw));
  }

  SyntheticWorldConfig config_;
  std::vector<std::string> facet_names_;
  std::unordered_map<std::string, std::size_t> facet_index_;
  std::vector<SyntheticImage> images_;
  std::unordered_map<ItemId, std::size_t> image_index_;
  std::vector<double> noise_;  // n_images * dim
  std::unordered_map<ItemId, std::pair<std::size_t, int>> query_table_;
};

class SyntheticProvider : public EmbedderProvider {
 public:
  explicit SyntheticProvider(std::shared_ptr<const SyntheticWorld> world)
      : world_(std::move(world)) {
    if (!world_) throw InvalidArgumentError("SyntheticProvider: null world");
  }

  std::string id() const override { return "synthetic"; }
  std::size_t dim() const override { return world_->config().dim(); }
  bool supports(Capability) const override { return true; }

  EmbeddingVector embed_image_general(const ItemId& image) override {
    return world_->general_embedding(world_->image_index(image));
  }

  EmbeddingVector embed_image_prompted(const ItemId& image, const PromptSpec& prompt) override {
    return world_->prompted_embedding(world_->image_index(image),
                                      world_->facet_index(prompt.facet));
  }

  EmbeddingVector embed_query(const QueryRef& query) override {
    if (!query.facet.empty() && query.value_index >= 0) {
      return world_->query_embedding(world_->facet_index(query.facet), query.value_index);
    }
    const auto [facet, value] = world_->query_target(query.id);
    return world_->query_embedding(facet, value);
  }

  const SyntheticWorld& world() const { return *world_; }

 private:
  std::shared_ptr<const SyntheticWorld> world_;
};

// --- file-backed provider over precomputed stores ---

// Serves embeddings from core-store files: one "general" store, one
// "queries" store keyed by case id, and one store per prompt id.
class FileBackedProvider : public EmbedderProvider {
 public:
  FileBackedProvider(std::optional<EmbeddingStore> general,
                     std::optional<EmbeddingStore> queries,
                     std::map<std::string, EmbeddingStore> prompted)
      : general_(std::move(general)),
        queries_(std::move(queries)),
        prompted_(std::move(prompted)) {
    std::size_t d = 0;
    if (general_) d = general_->dim();
    if (queries_) {
      if (d != 0 && queries_->dim() != d) {
        throw DimMismatchError("file provider: query store dim mismatch");
      }
      d = queries_->dim();
    }
    for (const auto& [prompt_id, store] : prompted_) {
      if (d != 0 && store.dim() != d) {
        throw DimMismatchError("file provider: store for prompt " + prompt_id +
                               " has mismatched dim");
      }
      d = store.dim();
    }
    if (d == 0) {
      throw InvalidArgumentError("file provider: no stores supplied");
    }
    dim_ = d;
  }

  std::string id() const override { return "files"; }
  std::size_t dim() const override { return dim_; }

  bool supports(Capability c) const override {
    switch (c) {
      case Capability::image_general:
        return general_.has_value();
      case Capability::image_prompted:
        return !prompted_.empty();
      case Capability::text_query:
        return queries_.has_value();
    }
    return false;
  }

  EmbeddingVector embed_image_general(const ItemId& image) override {
    if (!general_) throw UnsupportedError("file provider: no general store");
    if (!general_->contains(image)) {
      throw UnknownImageError("file provider: unknown image " + image);
    }
    return general_->get(image);
  }

  EmbeddingVector embed_image_prompted(const ItemId& image, const PromptSpec& prompt) override {
    auto it = prompted_.find(prompt.prompt_id);
    if (it == prompted_.end()) {
      throw UnsupportedError("file provider: no store for prompt " + prompt.prompt_id);
    }
    if (!it->second.contains(image)) {
      throw UnknownImageError("file provider: unknown image " + image + " for prompt " +
                              prompt.prompt_id);
    }
    return it->second.get(image);
  }

  EmbeddingVector embed_query(const QueryRef& query) override {
    if (!queries_) throw UnsupportedError("file provider: no query store");
    if (!queries_->contains(query.id)) {
      throw UnknownIdError("file provider: unknown query " + query.id);
    }
    return queries_->get(query.id);
  }

 private:
  std::optional<EmbeddingStore> general_;
  std::optional<EmbeddingStore> queries_;
  std::map<std::string, EmbeddingStore> prompted_;
  std::size_t dim_ = 0;
};

}  // namespace facet
