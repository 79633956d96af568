#include <gtest/gtest.h>

#include <fstream>

#include "facet/benchmark.hpp"
#include "support/test_util.hpp"

namespace facet {
namespace {

std::vector<ItemId> make_ids(const std::string& prefix, std::size_t n, std::size_t from = 0) {
  std::vector<ItemId> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back(prefix + std::to_string(from + i));
  return ids;
}

BenchmarkSet small_bench(std::size_t negatives = 99) {
  BenchmarkSet bench({Facet{"animals", FacetKind::categorical, 0},
                      Facet{"count_of_people", FacetKind::ordinal, 3}},
                     negatives);
  TestCase tc;
  tc.case_id = "case_0";
  tc.facet = "animals";
  tc.query_text = "Find me an everyday image in which animals such as animals_1 can be seen.";
  tc.positive = "img_pos";
  tc.negatives = make_ids("img_neg_", negatives);
  bench.add_case(tc);
  return bench;
}

TEST(Benchmark, AcceptsValidCase) {
  const auto bench = small_bench();
  EXPECT_EQ(bench.cases().size(), 1u);
  EXPECT_EQ(bench.pool_size(), 100u);
  EXPECT_EQ(bench.case_by_id("case_0").positive, "img_pos");
}

TEST(Benchmark, RejectsPositiveAmongNegatives) {
  BenchmarkSet bench({Facet{"animals", FacetKind::categorical, 0}}, 99);
  TestCase tc;
  tc.case_id = "bad";
  tc.facet = "animals";
  tc.query_text = "q";
  tc.positive = "img_5";
  tc.negatives = make_ids("img_", 99);  // includes img_5
  EXPECT_THROW(bench.add_case(tc), InvariantViolationError);
}

TEST(Benchmark, RejectsDuplicateCaseIdWrongCountUnknownFacet) {
  auto bench = small_bench();
  TestCase dup;
  dup.case_id = "case_0";
  dup.facet = "animals";
  dup.query_text = "q";
  dup.positive = "p";
  dup.negatives = make_ids("n_", 99);
  EXPECT_THROW(bench.add_case(dup), InvariantViolationError);

  TestCase wrong_count = dup;
  wrong_count.case_id = "case_1";
  wrong_count.negatives = make_ids("n_", 42);
  EXPECT_THROW(bench.add_case(wrong_count), InvariantViolationError);

  TestCase unknown_facet = dup;
  unknown_facet.case_id = "case_2";
  unknown_facet.facet = "nope";
  EXPECT_THROW(bench.add_case(unknown_facet), InvariantViolationError);

  TestCase dup_negative = dup;
  dup_negative.case_id = "case_3";
  dup_negative.negatives = make_ids("n_", 99);
  dup_negative.negatives[5] = dup_negative.negatives[6];
  EXPECT_THROW(bench.add_case(dup_negative), InvariantViolationError);
}

TEST(Benchmark, OrdinalMarginOnCategoricalRejected) {
  EXPECT_THROW(BenchmarkSet({Facet{"animals", FacetKind::categorical, 3}}, 99),
               InvariantViolationError);
}

TEST(Benchmark, RoundTripPreservesEveryField) {
  test::TempDir dir("bench_rt");
  const auto bench = small_bench();
  bench.save(dir.file("b.jsonl"));
  const auto loaded = BenchmarkSet::load(dir.file("b.jsonl"));
  EXPECT_TRUE(loaded == bench);
  EXPECT_EQ(loaded.facet("count_of_people").ordinal_margin, 3);
  EXPECT_EQ(loaded.facet("count_of_people").kind, FacetKind::ordinal);
}

TEST(Benchmark, LoadRejectsMalformedInput) {
  test::TempDir dir("bench_bad");
  {
    std::ofstream out(dir.file("no_header.jsonl"));
    out << "{\"case_id\":\"x\"}\n";
  }
  EXPECT_THROW(BenchmarkSet::load(dir.file("no_header.jsonl")), FormatError);
  {
    std::ofstream out(dir.file("bad_json.jsonl"));
    out << "{\"facets\":[{\"name\":\"a\",\"kind\":\"categorical\",\"ordinal_margin\":0}],"
           "\"negatives_per_case\":1}\n";
    out << "not json\n";
  }
  EXPECT_THROW(BenchmarkSet::load(dir.file("bad_json.jsonl")), FormatError);
  EXPECT_THROW(BenchmarkSet::load(dir.path() / "missing.jsonl"), IoError);
}

TEST(Benchmark, CandidateUnionIsSortedAndDeduplicated) {
  BenchmarkSet bench({Facet{"a", FacetKind::categorical, 0}}, 2);
  TestCase t1{"c1", "a", "q", "p1", {"n2", "n1"}};
  TestCase t2{"c2", "a", "q", "p1", {"n1", "n3"}};
  bench.add_case(t1);
  bench.add_case(t2);
  const auto pool = bench.candidate_union();
  EXPECT_EQ(pool, (std::vector<ItemId>{"n1", "n2", "n3", "p1"}));
  EXPECT_EQ(bench.candidate_union("a").size(), 4u);
  EXPECT_THROW(bench.candidate_union("zzz"), UnknownFacetError);
}

std::vector<EvalRecord> records_from_ranks(const std::vector<std::size_t>& ranks,
                                           const std::string& mode = "test") {
  std::vector<EvalRecord> records;
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    records.push_back(EvalRecord{"case_" + std::to_string(i), ranks[i], 100, mode});
  }
  return records;
}

TEST(Recall, DirectCounts) {
  EXPECT_DOUBLE_EQ(recall_at_k(records_from_ranks({1, 1, 1}), 1), 1.0);
  EXPECT_DOUBLE_EQ(recall_at_k(records_from_ranks({1, 3, 6, 2}), 5), 0.75);
  EXPECT_THROW(recall_at_k({}, 1), EmptyInputError);
  EXPECT_THROW(recall_at_k(records_from_ranks({1}), 0), InvalidArgumentError);
}

TEST(Recall, MonotoneInKAndSaturatesAtPoolSize) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::size_t> ranks;
    for (int i = 0; i < 40; ++i) ranks.push_back(1 + rng() % 100);
    const auto records = records_from_ranks(ranks);
    double prev = 0.0;
    for (std::size_t k = 1; k <= 100; k += 7) {
      const double r = recall_at_k(records, k);
      EXPECT_GE(r, prev);
      prev = r;
    }
    EXPECT_DOUBLE_EQ(recall_at_k(records, 100), 1.0);
  }
}

BenchmarkSet report_bench(const std::vector<std::string>& facet_names,
                          std::size_t cases_per_facet) {
  std::vector<Facet> facets;
  for (const auto& name : facet_names) facets.push_back(Facet{name, FacetKind::categorical, 0});
  BenchmarkSet bench(std::move(facets), 2);
  std::size_t seq = 0;
  for (const auto& name : facet_names) {
    for (std::size_t i = 0; i < cases_per_facet; ++i) {
      TestCase tc;
      tc.case_id = "case_" + std::to_string(seq++);
      tc.facet = name;
      tc.query_text = "q";
      tc.positive = "p" + std::to_string(seq);
      tc.negatives = {"n" + std::to_string(seq) + "a", "n" + std::to_string(seq) + "b"};
      bench.add_case(tc);
    }
  }
  return bench;
}

TEST(Report, SingleFacetEqualsRecallAtK) {
  const auto bench = report_bench({"animals"}, 4);
  std::vector<EvalRecord> records;
  const std::vector<std::size_t> ranks = {1, 2, 3, 1};
  for (std::size_t i = 0; i < 4; ++i) {
    records.push_back(EvalRecord{"case_" + std::to_string(i), ranks[i], 3, "m"});
  }
  const auto report = per_facet_report(records, bench, {1, 2});
  ASSERT_EQ(report.rows.size(), 2u);
  EXPECT_DOUBLE_EQ(report.rows[0].recall, recall_at_k(records, 1));
  EXPECT_DOUBLE_EQ(report.rows[1].recall, recall_at_k(records, 2));
  EXPECT_DOUBLE_EQ(report.macro_average.at(1), recall_at_k(records, 1));
  EXPECT_DOUBLE_EQ(report.case_weighted_average.at(1), recall_at_k(records, 1));
}

TEST(Report, TwoFacetsMacroAverage) {
  const auto bench = report_bench({"a", "b"}, 2);
  std::vector<EvalRecord> records = {
      EvalRecord{"case_0", 1, 3, "m"}, EvalRecord{"case_1", 1, 3, "m"},
      EvalRecord{"case_2", 2, 3, "m"}, EvalRecord{"case_3", 3, 3, "m"}};
  const auto report = per_facet_report(records, bench, {1});
  EXPECT_DOUBLE_EQ(report.macro_average.at(1), 0.5);
  EXPECT_DOUBLE_EQ(report.case_weighted_average.at(1), 0.5);
}

TEST(Report, MacroVersusCaseWeightedDiffer) {
  // 1 case on facet a (hit), 3 cases on facet b (miss): macro 0.5, weighted 0.25.
  const auto bench = [&] {
    BenchmarkSet b({Facet{"a", FacetKind::categorical, 0}, Facet{"b", FacetKind::categorical, 0}},
                   2);
    b.add_case(TestCase{"ca", "a", "q", "p0", {"n0x", "n0y"}});
    for (int i = 0; i < 3; ++i) {
      b.add_case(TestCase{"cb" + std::to_string(i), "b", "q", "p" + std::to_string(i + 1),
                          {"nx" + std::to_string(i), "ny" + std::to_string(i)}});
    }
    return b;
  }();
  std::vector<EvalRecord> records = {
      EvalRecord{"ca", 1, 3, "m"}, EvalRecord{"cb0", 2, 3, "m"}, EvalRecord{"cb1", 2, 3, "m"},
      EvalRecord{"cb2", 3, 3, "m"}};
  const auto report = per_facet_report(records, bench, {1});
  EXPECT_DOUBLE_EQ(report.macro_average.at(1), 0.5);
  EXPECT_DOUBLE_EQ(report.case_weighted_average.at(1), 0.25);
}

TEST(Report, EightFacetFixtureMatchesIndependentRecomputation) {
  std::mt19937_64 rng(77);
  std::vector<std::string> names;
  for (int i = 0; i < 8; ++i) names.push_back("facet" + std::to_string(i));
  const std::size_t cases_per_facet = 25;
  const auto bench = report_bench(names, cases_per_facet);

  std::vector<EvalRecord> records;
  std::vector<std::size_t> ranks;
  for (std::size_t i = 0; i < names.size() * cases_per_facet; ++i) {
    const std::size_t rank = 1 + rng() % 3;
    ranks.push_back(rank);
    records.push_back(EvalRecord{"case_" + std::to_string(i), rank, 3, "m"});
  }
  const std::vector<std::size_t> ks = {1, 2, 3};
  const auto report = per_facet_report(records, bench, ks);

  // Independent spreadsheet-style recomputation straight from the ranks.
  for (std::size_t k : ks) {
    double macro = 0.0;
    std::size_t hits_total = 0;
    for (std::size_t f = 0; f < names.size(); ++f) {
      std::size_t hits = 0;
      for (std::size_t c = 0; c < cases_per_facet; ++c) {
        if (ranks[f * cases_per_facet + c] <= k) ++hits;
      }
      const double expected = static_cast<double>(hits) / cases_per_facet;
      bool found = false;
      for (const auto& row : report.rows) {
        if (row.facet == names[f] && row.k == k) {
          EXPECT_DOUBLE_EQ(row.recall, expected);
          EXPECT_EQ(row.n_cases, cases_per_facet);
          found = true;
        }
      }
      EXPECT_TRUE(found) << names[f] << " k=" << k;
      macro += expected;
      hits_total += hits;
    }
    EXPECT_NEAR(report.macro_average.at(k), macro / 8.0, 1e-12);
    EXPECT_NEAR(report.case_weighted_average.at(k),
                static_cast<double>(hits_total) / (8.0 * cases_per_facet), 1e-12);
  }
}

TEST(Report, UnknownCaseRejected) {
  const auto bench = report_bench({"a"}, 1);
  std::vector<EvalRecord> records = {EvalRecord{"ghost", 1, 3, "m"}};
  EXPECT_THROW(per_facet_report(records, bench, {1}), UnknownCaseError);
}

TEST(Report, CsvAndJsonOutputs) {
  test::TempDir dir("report_io");
  const auto bench = report_bench({"a", "b"}, 2);
  std::vector<EvalRecord> records = {
      EvalRecord{"case_0", 1, 3, "m"}, EvalRecord{"case_1", 2, 3, "m"},
      EvalRecord{"case_2", 1, 3, "m"}, EvalRecord{"case_3", 1, 3, "m"}};
  const auto report = per_facet_report(records, bench, {1, 2});
  write_report_csv(report, dir.file("r.csv"));
  write_report_json(report, dir.file("r.json"));

  std::ifstream csv(dir.file("r.csv"));
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header, "facet,k,recall,n_cases,mode");
  std::string line;
  std::size_t rows = 0;
  bool saw_macro = false, saw_weighted = false;
  while (std::getline(csv, line)) {
    ++rows;
    if (line.rfind("macro_average,", 0) == 0) saw_macro = true;
    if (line.rfind("case_weighted_average,", 0) == 0) saw_weighted = true;
  }
  EXPECT_EQ(rows, 4u + 2u + 2u);
  EXPECT_TRUE(saw_macro);
  EXPECT_TRUE(saw_weighted);

  std::ifstream jf(dir.file("r.json"));
  nlohmann::json j;
  jf >> j;
  EXPECT_EQ(j["mode"], "m");
  EXPECT_EQ(j["per_facet"].size(), 4u);
  EXPECT_TRUE(j.contains("macro_average"));
  EXPECT_TRUE(j.contains("case_weighted_average"));
}

}  // namespace
}  // namespace facet
