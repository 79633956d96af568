#pragma once

#include <algorithm>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "json.hpp"

#include "facet/embedding.hpp"
#include "facet/errors.hpp"

namespace facet {

enum class FacetKind { categorical, ordinal };

inline std::string to_string(FacetKind kind) {
  return kind == FacetKind::categorical ? "categorical" : "ordinal";
}

inline FacetKind facet_kind_from_string(const std::string& s) {
  if (s == "categorical") return FacetKind::categorical;
  if (s == "ordinal") return FacetKind::ordinal;
  throw FormatError("unknown facet kind: " + s);
}

struct Facet {
  std::string name;
  FacetKind kind = FacetKind::categorical;
  // Minimum value distance for ordinal negatives; 0 for categorical facets.
  int ordinal_margin = 0;

  void validate() const {
    if (name.empty()) throw InvariantViolationError("facet name must be non-empty");
    if (kind == FacetKind::categorical && ordinal_margin != 0) {
      throw InvariantViolationError("facet " + name +
                                    ": ordinal_margin must be 0 for categorical facets");
    }
    if (ordinal_margin < 0) {
      throw InvariantViolationError("facet " + name + ": negative ordinal_margin");
    }
  }

  bool operator==(const Facet&) const = default;
};

// One query with one positive and a fixed number of negative candidates.
struct TestCase {
  ItemId case_id;
  std::string facet;
  std::string query_text;
  ItemId positive;
  std::vector<ItemId> negatives;

  std::vector<ItemId> candidates() const {
    std::vector<ItemId> pool;
    pool.reserve(negatives.size() + 1);
    pool.push_back(positive);
    pool.insert(pool.end(), negatives.begin(), negatives.end());
    return pool;
  }

  bool operator==(const TestCase&) const = default;
};

class BenchmarkSet {
 public:
  BenchmarkSet(std::vector<Facet> facets, std::size_t negatives_per_case)
      : facets_(std::move(facets)), negatives_per_case_(negatives_per_case) {
    if (negatives_per_case_ == 0) {
      throw InvariantViolationError("negatives_per_case must be positive");
    }
    for (std::size_t i = 0; i < facets_.size(); ++i) {
      facets_[i].validate();
      if (!facet_index_.emplace(facets_[i].name, i).second) {
        throw InvariantViolationError("duplicate facet " + facets_[i].name);
      }
    }
  }

  void add_case(TestCase tc) {
    validate_item_id(tc.case_id);
    validate_item_id(tc.positive);
    if (case_index_.contains(tc.case_id)) {
      throw InvariantViolationError("duplicate case_id " + tc.case_id);
    }
    if (!facet_index_.contains(tc.facet)) {
      throw InvariantViolationError("case " + tc.case_id + ": unknown facet " + tc.facet);
    }
    if (tc.negatives.size() != negatives_per_case_) {
      throw InvariantViolationError("case " + tc.case_id + ": expected " +
                                    std::to_string(negatives_per_case_) + " negatives, got " +
                                    std::to_string(tc.negatives.size()));
    }
    std::unordered_set<ItemId> seen;
    seen.insert(tc.positive);
    for (const auto& id : tc.negatives) {
      validate_item_id(id);
      if (!seen.insert(id).second) {
        throw InvariantViolationError("case " + tc.case_id +
                                      ": candidate ids not distinct (" + id + ")");
      }
    }
    case_index_.emplace(tc.case_id, cases_.size());
    cases_.push_back(std::move(tc));
  }

  const std::vector<Facet>& facets() const { return facets_; }
  const std::vector<TestCase>& cases() const { return cases_; }
  std::size_t negatives_per_case() const { return negatives_per_case_; }
  std::size_t pool_size() const { return negatives_per_case_ + 1; }

  const Facet& facet(const std::string& name) const {
    auto it = facet_index_.find(name);
    if (it == facet_index_.end()) {
      throw UnknownFacetError("unknown facet " + name);
    }
    return facets_[it->second];
  }

  bool has_case(const ItemId& case_id) const { return case_index_.contains(case_id); }

  const TestCase& case_by_id(const ItemId& case_id) const {
    auto it = case_index_.find(case_id);
    if (it == case_index_.end()) {
      throw UnknownCaseError("unknown case " + case_id);
    }
    return cases_[it->second];
  }

  // Sorted union of all candidate ids, optionally restricted to one facet.
  std::vector<ItemId> candidate_union() const { return candidate_union_impl(nullptr); }
  std::vector<ItemId> candidate_union(const std::string& facet_name) const {
    facet(facet_name);  // validates
    return candidate_union_impl(&facet_name);
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
      throw IoError("benchmark save: cannot open " + path.string());
    }
    nlohmann::json header;
    header["facets"] = nlohmann::json::array();
    for (const auto& f : facets_) {
      header["facets"].push_back({{"name", f.name},
                                  {"kind", to_string(f.kind)},
                                  {"ordinal_margin", f.ordinal_margin}});
    }
    header["negatives_per_case"] = negatives_per_case_;
    out << header.dump() << "\n";
    for (const auto& tc : cases_) {
      nlohmann::json line = {{"case_id", tc.case_id},
                             {"facet", tc.facet},
                             {"query_text", tc.query_text},
                             {"positive", tc.positive},
                             {"negatives", tc.negatives}};
      out << line.dump() << "\n";
    }
    if (!out) {
      throw IoError("benchmark save: write failed for " + path.string());
    }
  }

  static BenchmarkSet load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
      throw IoError("benchmark load: cannot open " + path.string());
    }
    std::string line;
    if (!std::getline(in, line)) {
      throw FormatError("benchmark load: missing header line");
    }
    nlohmann::json header;
    try {
      header = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("benchmark load: bad header: ") + e.what());
    }
    if (!header.contains("facets") || !header.contains("negatives_per_case")) {
      throw FormatError("benchmark load: header requires facets and negatives_per_case");
    }
    std::vector<Facet> facets;
    for (const auto& jf : header["facets"]) {
      Facet f;
      f.name = jf.at("name").get<std::string>();
      f.kind = facet_kind_from_string(jf.value("kind", std::string("categorical")));
      f.ordinal_margin = jf.value("ordinal_margin", 0);
      facets.push_back(std::move(f));
    }
    BenchmarkSet bench(std::move(facets), header["negatives_per_case"].get<std::size_t>());

    std::size_t line_no = 1;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception& e) {
        throw FormatError("benchmark load: line " + std::to_string(line_no) + ": " + e.what());
      }
      TestCase tc;
      try {
        tc.case_id = j.at("case_id").get<std::string>();
        tc.facet = j.at("facet").get<std::string>();
        tc.query_text = j.at("query_text").get<std::string>();
        tc.positive = j.at("positive").get<std::string>();
        tc.negatives = j.at("negatives").get<std::vector<std::string>>();
      } catch (const nlohmann::json::exception& e) {
        throw FormatError("benchmark load: line " + std::to_string(line_no) + ": " + e.what());
      }
      bench.add_case(std::move(tc));
    }
    return bench;
  }

  bool operator==(const BenchmarkSet& other) const {
    return facets_ == other.facets_ && cases_ == other.cases_ &&
           negatives_per_case_ == other.negatives_per_case_;
  }

 private:
  std::vector<ItemId> candidate_union_impl(const std::string* facet_name) const {
    std::set<ItemId> pool;
    for (const auto& tc : cases_) {
      if (facet_name != nullptr && tc.facet != *facet_name) continue;
      pool.insert(tc.positive);
      pool.insert(tc.negatives.begin(), tc.negatives.end());
    }
    return std::vector<ItemId>(pool.begin(), pool.end());
  }

  std::vector<Facet> facets_;
  std::vector<TestCase> cases_;
  std::size_t negatives_per_case_;
  std::unordered_map<std::string, std::size_t> facet_index_;
  std::unordered_map<ItemId, std::size_t> case_index_;
};

struct EvalRecord {
  ItemId case_id;
  std::size_t rank;  // 1-based
  std::size_t pool_size;
  std::string mode;
};

inline double recall_at_k(std::span<const EvalRecord> records, std::size_t k) {
  if (records.empty()) {
    throw EmptyInputError("recall_at_k: no records");
  }
  if (k == 0) {
    throw InvalidArgumentError("recall_at_k: k must be >= 1");
  }
  std::size_t hits = 0;
  for (const auto& r : records) {
    if (r.rank <= k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

struct FacetRecall {
  std::string facet;
  std::size_t k;
  double recall;
  std::size_t n_cases;
};

struct Report {
  std::string mode;
  std::vector<std::size_t> ks;
  std::vector<FacetRecall> rows;  // facet-major, k-minor, facets in benchmark order
  // The paper's Avg. column weighting is unstated, so both are emitted.
  std::map<std::size_t, double> macro_average;          // unweighted mean over facets
  std::map<std::size_t, double> case_weighted_average;  // mean over all cases
};

inline Report per_facet_report(std::span<const EvalRecord> records, const BenchmarkSet& bench,
                               std::vector<std::size_t> ks) {
  if (records.empty()) {
    throw EmptyInputError("per_facet_report: no records");
  }
  if (ks.empty()) {
    throw InvalidArgumentError("per_facet_report: ks must be non-empty");
  }
  std::map<std::string, std::vector<const EvalRecord*>> by_facet;
  for (const auto& r : records) {
    const TestCase& tc = bench.case_by_id(r.case_id);  // UnknownCaseError if absent
    by_facet[tc.facet].push_back(&r);
  }

  Report report;
  report.mode = records.front().mode;
  report.ks = ks;
  for (std::size_t k : ks) {
    double facet_sum = 0.0;
    std::size_t n_facets = 0;
    std::size_t case_hits = 0;
    for (const auto& f : bench.facets()) {
      auto it = by_facet.find(f.name);
      if (it == by_facet.end()) continue;
      std::size_t hits = 0;
      for (const EvalRecord* r : it->second) {
        if (r->rank <= k) ++hits;
      }
      const double recall =
          static_cast<double>(hits) / static_cast<double>(it->second.size());
      report.rows.push_back(FacetRecall{f.name, k, recall, it->second.size()});
      facet_sum += recall;
      ++n_facets;
      case_hits += hits;
    }
    report.macro_average[k] = facet_sum / static_cast<double>(n_facets);
    report.case_weighted_average[k] =
        static_cast<double>(case_hits) / static_cast<double>(records.size());
  }
  // Regroup rows facet-major for readability.
  std::stable_sort(report.rows.begin(), report.rows.end(),
                   [&](const FacetRecall& a, const FacetRecall& b) {
                     if (a.facet != b.facet) {
                       // benchmark declaration order
                       std::size_t ia = 0, ib = 0;
                       for (std::size_t i = 0; i < bench.facets().size(); ++i) {
                         if (bench.facets()[i].name == a.facet) ia = i;
                         if (bench.facets()[i].name == b.facet) ib = i;
                       }
                       return ia < ib;
                     }
                     return a.k < b.k;
                   });
  return report;
}

namespace detail {

inline std::string format_double(double x) {
  std::ostringstream os;
  os.precision(6);
  os << std::fixed << x;
  return os.str();
}

}  // namespace detail

inline void write_report_csv(const Report& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw IoError("report csv: cannot open " + path.string());
  }
  out << "facet,k,recall,n_cases,mode\n";
  std::size_t total_cases = 0;
  for (const auto& row : report.rows) {
    if (row.k == report.ks.front()) total_cases += row.n_cases;
  }
  for (const auto& row : report.rows) {
    out << row.facet << "," << row.k << "," << detail::format_double(row.recall) << ","
        << row.n_cases << "," << report.mode << "\n";
  }
  for (std::size_t k : report.ks) {
    out << "macro_average," << k << "," << detail::format_double(report.macro_average.at(k))
        << "," << total_cases << "," << report.mode << "\n";
  }
  for (std::size_t k : report.ks) {
    out << "case_weighted_average," << k << ","
        << detail::format_double(report.case_weighted_average.at(k)) << "," << total_cases
        << "," << report.mode << "\n";
  }
  if (!out) {
    throw IoError("report csv: write failed for " + path.string());
  }
}

inline nlohmann::json report_to_json(const Report& report) {
  nlohmann::json j;
  j["mode"] = report.mode;
  j["ks"] = report.ks;
  j["per_facet"] = nlohmann::json::array();
  for (const auto& row : report.rows) {
    j["per_facet"].push_back({{"facet", row.facet},
                              {"k", row.k},
                              {"recall", row.recall},
                              {"n_cases", row.n_cases},
                              {"mode", report.mode}});
  }
  j["macro_average"] = nlohmann::json::object();
  j["case_weighted_average"] = nlohmann::json::object();
  for (std::size_t k : report.ks) {
    j["macro_average"][std::to_string(k)] = report.macro_average.at(k);
    j["case_weighted_average"][std::to_string(k)] = report.case_weighted_average.at(k);
  }
  return j;
}

inline void write_report_json(const Report& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw IoError("report json: cannot open " + path.string());
  }
  out << report_to_json(report).dump(2) << "\n";
}

}  // namespace facet
