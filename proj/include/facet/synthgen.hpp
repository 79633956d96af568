#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "facet/benchmark.hpp"
#include "facet/errors.hpp"
#include "facet/providers.hpp"

namespace facet {

enum class PositivePolicy { low_salience, high_salience, any };

inline std::string to_string(PositivePolicy p) {
  switch (p) {
    case PositivePolicy::low_salience: return "low_salience";
    case PositivePolicy::high_salience: return "high_salience";
    case PositivePolicy::any: return "any";
  }
  return "any";
}

inline PositivePolicy positive_policy_from_string(const std::string& s) {
  if (s == "low_salience") return PositivePolicy::low_salience;
  if (s == "high_salience") return PositivePolicy::high_salience;
  if (s == "any") return PositivePolicy::any;
  throw ConfigInvalidError("unknown positive policy: " + s);
}

struct GeneratorConfig {
  SyntheticWorldConfig world;
  // Cases per facet; facets absent from the map fall back to default_cases.
  std::map<std::string, std::size_t> cases_per_facet;
  std::size_t default_cases = 200;
  std::size_t negatives_per_case = 99;
  // Mutually-confusable value pairs never mixed as positive/negative.
  std::map<std::string, std::vector<std::pair<int, int>>> exclusivity;
  // Facets evaluated with an ordinal distance margin instead of plain
  // value inequality.
  std::map<std::string, int> ordinal_margins;
  // Salience the queried facet must have on drawn positives. Queries target
  // non-dominant attributes by default, which is the regime where general
  // embeddings fail.
  std::map<std::string, PositivePolicy> positive_policy;
  PositivePolicy default_positive_policy = PositivePolicy::low_salience;
  std::uint64_t seed = 99;

  void validate() const {
    world.validate();
    if (negatives_per_case == 0) throw ConfigInvalidError("negatives_per_case must be >= 1");
    for (const auto& [facet, count] : cases_per_facet) {
      if (count == 0) throw ConfigInvalidError("cases for facet " + facet + " must be >= 1");
    }
    if (default_cases == 0) throw ConfigInvalidError("default_cases must be >= 1");
    for (const auto& [facet, margin] : ordinal_margins) {
      if (margin < 1) throw ConfigInvalidError("ordinal margin for " + facet + " must be >= 1");
    }
  }

  // Defaults that mirror the shipped facet set: count_of_people is ordinal
  // with margin 3, and the two sky-condition values of weathers are treated
  // as confusable.
  static GeneratorConfig defaults() {
    GeneratorConfig cfg;
    const auto names = standard_facet_names(static_cast<std::size_t>(cfg.world.n_facets));
    for (const auto& name : names) {
      if (name == "count_of_people") cfg.ordinal_margins[name] = 3;
      if (name == "weathers") cfg.exclusivity[name].emplace_back(0, 1);
    }
    return cfg;
  }
};

inline std::shared_ptr<SyntheticWorld> generate_world(const SyntheticWorldConfig& config) {
  return std::make_shared<SyntheticWorld>(config);
}

namespace detail {

inline std::string query_text_for(const std::string& facet, const std::string& value_name) {
  if (facet == "animals") {
    return "Find me an everyday image in which animals such as " + value_name +
           " can be seen.";
  }
  if (facet == "scenes") {
    return "Find me an everyday image where the type of location depicted is " + value_name +
           ".";
  }
  if (facet == "objects") {
    return "Find me an everyday image in which objects such as " + value_name +
           " are present.";
  }
  if (facet == "count_of_people") {
    return "Find me an everyday image with " + value_name + " people present in it.";
  }
  if (facet == "materials") {
    return "Find me an everyday image showing some object or surface made of material " +
           value_name + ".";
  }
  if (facet == "times") {
    return "Find me an everyday image where the time of day depicted is " + value_name + ".";
  }
  if (facet == "weathers") {
    return "Find me an everyday image where the weather is like " + value_name + ".";
  }
  if (facet == "gestures") {
    return "Find me an everyday image where the gesture people are making is " + value_name +
           ".";
  }
  return "Find me an everyday image where the " + facet + " attribute is " + value_name + ".";
}

// Admissible negative values for a query value under the facet's rules:
// ordinal facets require |value - positive| >= margin, categorical facets
// require a different value outside the confusable list.
inline std::vector<int> admissible_negative_values(
    int positive_value, int values_per_facet, int ordinal_margin,
    const std::vector<std::pair<int, int>>& confusable) {
  std::vector<int> out;
  for (int v = 0; v < values_per_facet; ++v) {
    if (ordinal_margin > 0) {
      if (std::abs(v - positive_value) < ordinal_margin) continue;
    } else {
      if (v == positive_value) continue;
      bool excluded = false;
      for (const auto& [a, b] : confusable) {
        if ((a == positive_value && b == v) || (b == positive_value && a == v)) {
          excluded = true;
          break;
        }
      }
      if (excluded) continue;
    }
    out.push_back(v);
  }
  return out;
}

template <typename T>
std::vector<T> sample_without_replacement(const std::vector<T>& pool, std::size_t n,
                                          std::mt19937_64& rng) {
  std::vector<T> copy = pool;
  for (std::size_t i = 0; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, copy.size() - 1);
    std::swap(copy[i], copy[pick(rng)]);
  }
  copy.resize(n);
  return copy;
}

}  // namespace detail

// Builds a benchmark over the world following the construction discipline:
// positives carry the queried (facet, value); negatives are drawn uniformly
// from images whose value on that facet is exclusive of the positive's.
// Registers each case's (facet, value) with the world so the synthetic
// provider can embed its query. Pure function of (world, config).
inline BenchmarkSet generate_benchmark(SyntheticWorld& world, const GeneratorConfig& config) {
  config.validate();
  const auto& wc = world.config();

  std::vector<Facet> facets;
  for (const auto& name : world.facet_names()) {
    Facet f;
    f.name = name;
    auto it = config.ordinal_margins.find(name);
    if (it != config.ordinal_margins.end()) {
      f.kind = FacetKind::ordinal;
      f.ordinal_margin = it->second;
    }
    facets.push_back(std::move(f));
  }
  BenchmarkSet bench(std::move(facets), config.negatives_per_case);

  std::mt19937_64 rng(detail::mix_seed(config.seed, 0xbe9cULL));
  static const std::vector<std::pair<int, int>> kNoConfusables;

  std::size_t case_seq = 0;
  for (std::size_t f = 0; f < world.facet_names().size(); ++f) {
    const std::string& facet_name = world.facet_names()[f];
    const auto cases_it = config.cases_per_facet.find(facet_name);
    const std::size_t n_cases =
        cases_it != config.cases_per_facet.end() ? cases_it->second : config.default_cases;
    const auto margin_it = config.ordinal_margins.find(facet_name);
    const int margin = margin_it != config.ordinal_margins.end() ? margin_it->second : 0;
    const auto excl_it = config.exclusivity.find(facet_name);
    const auto& confusable =
        excl_it != config.exclusivity.end() ? excl_it->second : kNoConfusables;
    const auto policy_it = config.positive_policy.find(facet_name);
    const PositivePolicy policy = policy_it != config.positive_policy.end()
                                      ? policy_it->second
                                      : config.default_positive_policy;

    // Query values admitting at least one exclusive value.
    std::vector<int> query_values;
    for (int v = 0; v < wc.values_per_facet; ++v) {
      if (!detail::admissible_negative_values(v, wc.values_per_facet, margin, confusable)
               .empty()) {
        query_values.push_back(v);
      }
    }
    if (query_values.empty()) {
      throw InsufficientNegativesError("facet " + facet_name +
                                       ": no value admits any exclusive negative value");
    }

    // Index images by value on this facet, split by salience.
    std::vector<std::vector<std::size_t>> by_value(
        static_cast<std::size_t>(wc.values_per_facet));
    std::vector<std::vector<std::size_t>> by_value_low(
        static_cast<std::size_t>(wc.values_per_facet));
    std::vector<std::vector<std::size_t>> by_value_high(
        static_cast<std::size_t>(wc.values_per_facet));
    for (std::size_t i = 0; i < world.images().size(); ++i) {
      const auto& img = world.images()[i];
      const int v = img.assignment[f];
      by_value[static_cast<std::size_t>(v)].push_back(i);
      if (img.salience[f] == wc.salience_high) {
        by_value_high[static_cast<std::size_t>(v)].push_back(i);
      } else {
        by_value_low[static_cast<std::size_t>(v)].push_back(i);
      }
    }

    for (std::size_t c = 0; c < n_cases; ++c) {
      std::uniform_int_distribution<std::size_t> value_pick(0, query_values.size() - 1);
      const int value = query_values[value_pick(rng)];

      const auto& positive_pool =
          policy == PositivePolicy::low_salience
              ? by_value_low[static_cast<std::size_t>(value)]
              : (policy == PositivePolicy::high_salience
                     ? by_value_high[static_cast<std::size_t>(value)]
                     : by_value[static_cast<std::size_t>(value)]);
      if (positive_pool.empty()) {
        throw InsufficientNegativesError("facet " + facet_name + " value " +
                                         std::to_string(value) +
                                         ": no eligible positive images");
      }
      std::uniform_int_distribution<std::size_t> pos_pick(0, positive_pool.size() - 1);
      const std::size_t positive = positive_pool[pos_pick(rng)];

      std::vector<std::size_t> negative_pool;
      for (int v :
           detail::admissible_negative_values(value, wc.values_per_facet, margin, confusable)) {
        const auto& bucket = by_value[static_cast<std::size_t>(v)];
        negative_pool.insert(negative_pool.end(), bucket.begin(), bucket.end());
      }
      if (negative_pool.size() < config.negatives_per_case) {
        throw InsufficientNegativesError(
            "facet " + facet_name + " value " + std::to_string(value) + ": only " +
            std::to_string(negative_pool.size()) + " exclusive negatives available, need " +
            std::to_string(config.negatives_per_case));
      }
      const auto negatives =
          detail::sample_without_replacement(negative_pool, config.negatives_per_case, rng);

      TestCase tc;
      tc.case_id = "case_" + facet_name + "_" + std::to_string(case_seq++);
      tc.facet = facet_name;
      tc.query_text = detail::query_text_for(
          facet_name, margin > 0 ? std::to_string(value) : world.value_name(f, value));
      tc.positive = world.images()[positive].id;
      tc.negatives.reserve(negatives.size());
      for (std::size_t idx : negatives) tc.negatives.push_back(world.images()[idx].id);
      bench.add_case(std::move(tc));
      world.register_query(bench.cases().back().case_id, f, value);
    }
  }
  return bench;
}

}  // namespace facet
