#include <gtest/gtest.h>

#include <set>

#include "facet/synthgen.hpp"
#include "support/test_util.hpp"

namespace facet {
namespace {

GeneratorConfig small_gen_config() {
  auto cfg = GeneratorConfig::defaults();
  cfg.world.n_images = 600;
  cfg.world.seed = 21;
  cfg.default_cases = 10;
  cfg.seed = 22;
  return cfg;
}

TEST(GenerateWorld, DeterministicForFixedSeed) {
  const auto cfg = small_gen_config();
  const auto w1 = generate_world(cfg.world);
  const auto w2 = generate_world(cfg.world);
  ASSERT_EQ(w1->images().size(), w2->images().size());
  for (std::size_t i = 0; i < w1->images().size(); ++i) {
    EXPECT_EQ(w1->images()[i].id, w2->images()[i].id);
    EXPECT_EQ(w1->images()[i].assignment, w2->images()[i].assignment);
    EXPECT_EQ(w1->images()[i].salience, w2->images()[i].salience);
  }
}

TEST(GenerateWorld, DominantFractionOneMakesEverythingHigh) {
  auto cfg = small_gen_config().world;
  cfg.dominant_fraction = 1.0;
  cfg.n_images = 50;
  const auto world = generate_world(cfg);
  for (const auto& img : world->images()) {
    for (double s : img.salience) EXPECT_EQ(s, cfg.salience_high);
  }
}

TEST(GenerateWorld, EmpiricalHighSalienceFractionNearConfig) {
  SyntheticWorldConfig cfg;  // defaults: 2000 images, 4 facets, fraction 0.25
  const auto world = generate_world(cfg);
  ASSERT_EQ(world->images().size(), 2000u);
  std::size_t high = 0, total = 0;
  for (const auto& img : world->images()) {
    bool any_high = false;
    for (double s : img.salience) {
      ++total;
      if (s == cfg.salience_high) {
        ++high;
        any_high = true;
      }
    }
    EXPECT_TRUE(any_high);
  }
  const double fraction = static_cast<double>(high) / static_cast<double>(total);
  EXPECT_NEAR(fraction, cfg.dominant_fraction, 0.02);
}

TEST(AdmissibleNegatives, OrdinalMarginRule) {
  // margin 3: a candidate 2 away is rejected, 3 away is accepted
  const auto values = detail::admissible_negative_values(5, 12, 3, {});
  EXPECT_EQ(std::count(values.begin(), values.end(), 7), 0);
  EXPECT_EQ(std::count(values.begin(), values.end(), 8), 1);
  EXPECT_EQ(std::count(values.begin(), values.end(), 2), 1);
  EXPECT_EQ(std::count(values.begin(), values.end(), 5), 0);
}

TEST(AdmissibleNegatives, ConfusablePairRule) {
  const std::vector<std::pair<int, int>> confusable = {{2, 3}};
  const auto values = detail::admissible_negative_values(2, 5, 0, confusable);
  EXPECT_EQ(values, (std::vector<int>{0, 1, 4}));
  const auto sym = detail::admissible_negative_values(3, 5, 0, confusable);
  EXPECT_EQ(sym, (std::vector<int>{0, 1, 4}));
}

TEST(GenerateBenchmark, DeterministicAndValid) {
  const auto cfg = small_gen_config();
  auto w1 = generate_world(cfg.world);
  auto w2 = generate_world(cfg.world);
  const auto b1 = generate_benchmark(*w1, cfg);
  const auto b2 = generate_benchmark(*w2, cfg);
  EXPECT_TRUE(b1 == b2);
  EXPECT_EQ(b1.cases().size(), 4u * 10u);
}

TEST(GenerateBenchmark, EveryCasePassesLoaderRevalidation) {
  test::TempDir dir("synthgen_reval");
  auto cfg = small_gen_config();
  cfg.default_cases = 25;
  auto world = generate_world(cfg.world);
  const auto bench = generate_benchmark(*world, cfg);
  bench.save(dir.file("b.jsonl"));
  const auto reloaded = BenchmarkSet::load(dir.file("b.jsonl"));
  EXPECT_TRUE(reloaded == bench);
}

TEST(GenerateBenchmark, OrdinalMarginHoldsOnGeneratedNegatives) {
  const auto cfg = small_gen_config();
  auto world = generate_world(cfg.world);
  const auto bench = generate_benchmark(*world, cfg);
  std::size_t checked = 0;
  for (const auto& tc : bench.cases()) {
    if (tc.facet != "count_of_people") continue;
    const auto [facet_idx, value] = world->query_target(tc.case_id);
    const std::size_t f = facet_idx;
    EXPECT_EQ(world->images()[world->image_index(tc.positive)].assignment[f], value);
    for (const auto& neg : tc.negatives) {
      const int nv = world->images()[world->image_index(neg)].assignment[f];
      EXPECT_GE(std::abs(nv - value), 3) << tc.case_id;
      ++checked;
    }
  }
  EXPECT_GT(checked, 0u);
}

TEST(GenerateBenchmark, ConfusableValuesNeverAppearAsNegatives) {
  auto cfg = small_gen_config();
  cfg.world.n_facets = 8;  // include weathers with its confusable (0, 1) pair
  cfg = [&] {
    auto fresh = GeneratorConfig::defaults();
    fresh.world = cfg.world;
    fresh.default_cases = 20;
    fresh.seed = cfg.seed;
    fresh.ordinal_margins.clear();
    fresh.exclusivity.clear();
    for (const auto& name : standard_facet_names(8)) {
      if (name == "count_of_people") fresh.ordinal_margins[name] = 3;
      if (name == "weathers") fresh.exclusivity[name].emplace_back(0, 1);
    }
    return fresh;
  }();
  auto world = generate_world(cfg.world);
  const auto bench = generate_benchmark(*world, cfg);
  std::size_t confusable_queries = 0;
  for (const auto& tc : bench.cases()) {
    if (tc.facet != "weathers") continue;
    const auto [f, value] = world->query_target(tc.case_id);
    if (value != 0 && value != 1) continue;
    ++confusable_queries;
    const int banned = value == 0 ? 1 : 0;
    for (const auto& neg : tc.negatives) {
      const int nv = world->images()[world->image_index(neg)].assignment[f];
      EXPECT_NE(nv, banned) << tc.case_id;
      EXPECT_NE(nv, value) << tc.case_id;
    }
  }
  EXPECT_GT(confusable_queries, 0u);
}

TEST(GenerateBenchmark, PositivesFollowTheSaliencePolicy) {
  const auto cfg = small_gen_config();  // default policy: low salience
  auto world = generate_world(cfg.world);
  const auto bench = generate_benchmark(*world, cfg);
  for (const auto& tc : bench.cases()) {
    const auto [f, value] = world->query_target(tc.case_id);
    const auto& img = world->images()[world->image_index(tc.positive)];
    EXPECT_EQ(img.salience[f], cfg.world.salience_low) << tc.case_id;
    EXPECT_EQ(img.assignment[f], value) << tc.case_id;
  }

  auto high_cfg = cfg;
  high_cfg.default_positive_policy = PositivePolicy::high_salience;
  auto world2 = generate_world(high_cfg.world);
  const auto bench2 = generate_benchmark(*world2, high_cfg);
  for (const auto& tc : bench2.cases()) {
    const auto [f, value] = world2->query_target(tc.case_id);
    EXPECT_EQ(world2->images()[world2->image_index(tc.positive)].salience[f],
              high_cfg.world.salience_high);
  }
}

TEST(GenerateBenchmark, QueryTextsUseTheFacetTemplates) {
  const auto cfg = small_gen_config();
  auto world = generate_world(cfg.world);
  const auto bench = generate_benchmark(*world, cfg);
  for (const auto& tc : bench.cases()) {
    EXPECT_EQ(tc.query_text.rfind("Find me an everyday image", 0), 0u) << tc.query_text;
    if (tc.facet == "count_of_people") {
      EXPECT_NE(tc.query_text.find("people present in it."), std::string::npos);
    }
    if (tc.facet == "animals") {
      EXPECT_NE(tc.query_text.find("animals such as animals_"), std::string::npos);
    }
  }
}

TEST(GenerateBenchmark, InsufficientNegativesReportsFacetAndValue) {
  auto cfg = small_gen_config();
  cfg.world.n_images = 120;  // too few for 99 exclusive negatives everywhere
  cfg.negatives_per_case = 99;
  auto world = generate_world(cfg.world);
  try {
    generate_benchmark(*world, cfg);
    FAIL() << "expected InsufficientNegativesError";
  } catch (const InsufficientNegativesError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("facet"), std::string::npos);
  }
}

TEST(GenerateBenchmark, UnsatisfiableMarginIsAnError) {
  auto cfg = small_gen_config();
  cfg.ordinal_margins["count_of_people"] = 5;  // values 0..4, no pair 5 apart
  auto world = generate_world(cfg.world);
  EXPECT_THROW(generate_benchmark(*world, cfg), InsufficientNegativesError);
}

TEST(GeneratorConfig, Validation) {
  auto cfg = GeneratorConfig::defaults();
  cfg.negatives_per_case = 0;
  EXPECT_THROW(cfg.validate(), ConfigInvalidError);
  cfg = GeneratorConfig::defaults();
  cfg.cases_per_facet["animals"] = 0;
  EXPECT_THROW(cfg.validate(), ConfigInvalidError);
  cfg = GeneratorConfig::defaults();
  cfg.ordinal_margins["animals"] = 0;
  EXPECT_THROW(cfg.validate(), ConfigInvalidError);
}

}  // namespace
}  // namespace facet
