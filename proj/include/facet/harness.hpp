#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "facet/approx.hpp"
#include "facet/benchmark.hpp"
#include "facet/errors.hpp"
#include "facet/prompts.hpp"
#include "facet/providers.hpp"
#include "facet/search.hpp"
#include "facet/store.hpp"

namespace facet {

enum class EvalMode { baseline, prompted_gt, preprocessed_selected, linear_approx };

inline std::string to_string(EvalMode mode) {
  switch (mode) {
    case EvalMode::baseline: return "baseline";
    case EvalMode::prompted_gt: return "prompted_gt";
    case EvalMode::preprocessed_selected: return "preprocessed_selected";
    case EvalMode::linear_approx: return "linear_approx";
  }
  return "unknown";
}

inline EvalMode eval_mode_from_string(const std::string& s) {
  if (s == "baseline") return EvalMode::baseline;
  if (s == "prompted" || s == "prompted_gt") return EvalMode::prompted_gt;
  if (s == "selected" || s == "preprocessed_selected") return EvalMode::preprocessed_selected;
  if (s == "approx" || s == "linear_approx") return EvalMode::linear_approx;
  throw InvalidArgumentError("unknown eval mode: " + s);
}

// Abstract unit costs: v per image embedding, t per text embedding with a
// dual-encoder, F per forward pass of the multimodal embedder.
struct CostConfig {
  double v = 1.0;
  double t = 1.0;
  double F = 1.0;
};

struct CounterSnapshot {
  std::uint64_t image_embed_calls = 0;
  std::uint64_t prompted_embed_calls = 0;
  std::uint64_t text_embed_calls = 0;
  std::uint64_t selector_calls = 0;
};

// Frozen view of a completed run's ledger. Totals are always recomputed from
// the counters, never stored.
struct CostSummary {
  std::size_t n_images = 0;    // N: distinct pool images
  std::size_t n_queries = 0;   // M
  std::size_t sample_size = 0; // K, 0 unless linear_approx
  std::size_t n_prompts = 0;   // prompts with pre-built stores
  std::map<std::string, std::size_t> facet_pool_sizes;
  CostConfig costs;
  CounterSnapshot preprocess;
  CounterSnapshot query;
};

// Pre-processing-phase calls are ledgered separately from per-query calls;
// counters only increase.
class CostLedger {
 public:
  enum class Phase { preprocess, query };

  explicit CostLedger(CostConfig costs = {}) : costs_(costs) {}

  void count_image(Phase p) { counter(p).image.fetch_add(1, std::memory_order_relaxed); }
  void count_prompted(Phase p, std::uint64_t n = 1) {
    counter(p).prompted.fetch_add(n, std::memory_order_relaxed);
  }
  void count_text(Phase p) { counter(p).text.fetch_add(1, std::memory_order_relaxed); }
  void count_selector(Phase p) { counter(p).selector.fetch_add(1, std::memory_order_relaxed); }

  void set_pool_size(std::size_t n) { n_images_ = n; }
  void set_query_count(std::size_t m) { n_queries_ = m; }
  void set_sample_size(std::size_t k) { sample_size_ = k; }
  void set_prompt_count(std::size_t p) { n_prompts_ = p; }
  void set_facet_pool_size(const std::string& facet, std::size_t n) {
    facet_pool_sizes_[facet] = n;
  }

  CostSummary summary() const {
    CostSummary s;
    s.n_images = n_images_;
    s.n_queries = n_queries_;
    s.sample_size = sample_size_;
    s.n_prompts = n_prompts_;
    s.facet_pool_sizes = facet_pool_sizes_;
    s.costs = costs_;
    s.preprocess = snapshot(preprocess_);
    s.query = snapshot(query_);
    return s;
  }

 private:
  struct Counters {
    std::atomic<std::uint64_t> image{0};
    std::atomic<std::uint64_t> prompted{0};
    std::atomic<std::uint64_t> text{0};
    std::atomic<std::uint64_t> selector{0};
  };

  static CounterSnapshot snapshot(const Counters& c) {
    return CounterSnapshot{c.image.load(), c.prompted.load(), c.text.load(), c.selector.load()};
  }

  Counters& counter(Phase p) { return p == Phase::preprocess ? preprocess_ : query_; }

  CostConfig costs_;
  std::size_t n_images_ = 0;
  std::size_t n_queries_ = 0;
  std::size_t sample_size_ = 0;
  std::size_t n_prompts_ = 0;
  std::map<std::string, std::size_t> facet_pool_sizes_;
  Counters preprocess_;
  Counters query_;
};

// Forwards to an inner provider while counting calls in the active phase.
class CountingProvider : public EmbedderProvider {
 public:
  CountingProvider(EmbedderProvider& inner, CostLedger& ledger)
      : inner_(inner), ledger_(ledger) {}

  void set_phase(CostLedger::Phase phase) { phase_.store(phase); }

  std::string id() const override { return inner_.id(); }
  std::size_t dim() const override { return inner_.dim(); }
  bool supports(Capability c) const override { return inner_.supports(c); }

  EmbeddingVector embed_image_general(const ItemId& image) override {
    ledger_.count_image(phase_.load());
    return inner_.embed_image_general(image);
  }

  EmbeddingVector embed_image_prompted(const ItemId& image, const PromptSpec& prompt) override {
    ledger_.count_prompted(phase_.load());
    return inner_.embed_image_prompted(image, prompt);
  }

  EmbeddingVector embed_query(const QueryRef& query) override {
    ledger_.count_text(phase_.load());
    return inner_.embed_query(query);
  }

 private:
  EmbedderProvider& inner_;
  CostLedger& ledger_;
  std::atomic<CostLedger::Phase> phase_{CostLedger::Phase::preprocess};
};

struct EvalOptions {
  std::size_t workers = std::thread::hardware_concurrency();
  CostConfig costs;
  std::vector<std::size_t> report_ks = {1, 5};
};

struct RunResult {
  std::vector<EvalRecord> records;
  CostSummary cost;
  // preprocessed_selected only: fraction of queries whose selected prompt is
  // the facet's ground-truth prompt.
  std::map<std::string, double> selection_accuracy_per_facet;
  std::optional<double> selection_accuracy;
};

namespace detail {

template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  workers = std::min(std::max<std::size_t>(workers, 1), std::max<std::size_t>(n, 1));
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&] {
      while (true) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) break;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          next.store(n);
          break;
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

inline void require_capability(const EmbedderProvider& provider, Capability c,
                               const std::string& what) {
  if (!provider.supports(c)) {
    throw UnsupportedError("provider " + provider.id() + " does not support " + what);
  }
}

inline void require_registry_coverage(const BenchmarkSet& bench, const PromptRegistry& registry) {
  for (const auto& tc : bench.cases()) {
    if (registry.find_by_facet(tc.facet) == nullptr) {
      throw MissingPromptError("registry has no prompt for facet " + tc.facet);
    }
  }
}

inline EmbeddingStore build_general_store(const BenchmarkSet& bench, EmbedderProvider& provider) {
  const auto pool = bench.candidate_union();
  EmbeddingStore store("general", provider.dim());
  for (const auto& id : pool) store.add(id, provider.embed_image_general(id));
  return store;
}

}  // namespace detail

// Restricts a registry to the prompts covering the benchmark's facets, in
// registry order. Every facet with cases must be covered.
inline PromptRegistry registry_for_benchmark(const PromptRegistry& registry,
                                             const BenchmarkSet& bench) {
  detail::require_registry_coverage(bench, registry);
  std::vector<PromptSpec> prompts;
  for (const auto& p : registry.prompts()) {
    for (const auto& facet : bench.facets()) {
      if (facet.name == p.facet) {
        prompts.push_back(p);
        break;
      }
    }
  }
  if (prompts.empty()) {
    throw MissingPromptError("registry shares no facet with the benchmark");
  }
  return PromptRegistry(std::move(prompts), registry.wrapper_default());
}

// General store built once over the candidate union, each query embedded
// once, ranks computed over each case's candidate pool.
inline RunResult run_baseline(const BenchmarkSet& bench, EmbedderProvider& provider,
                              const EvalOptions& options = {}) {
  detail::require_capability(provider, Capability::image_general, "general image embedding");
  detail::require_capability(provider, Capability::text_query, "query embedding");

  CostLedger ledger(options.costs);
  CountingProvider counted(provider, ledger);
  counted.set_phase(CostLedger::Phase::preprocess);
  const EmbeddingStore general = detail::build_general_store(bench, counted);
  ledger.set_pool_size(general.size());
  ledger.set_query_count(bench.cases().size());

  counted.set_phase(CostLedger::Phase::query);
  std::vector<EvalRecord> records(bench.cases().size());
  detail::parallel_for(bench.cases().size(), options.workers, [&](std::size_t i) {
    const TestCase& tc = bench.cases()[i];
    const EmbeddingVector q = counted.embed_query(QueryRef{tc.case_id, tc.query_text, tc.facet});
    const auto candidates = tc.candidates();
    const RankResult r = rank_of(general, candidates, q, tc.positive);
    records[i] = EvalRecord{tc.case_id, r.rank, r.pool_size, "baseline"};
  });
  return RunResult{std::move(records), ledger.summary(), {}, std::nullopt};
}

// One prompted store per facet, built once with the facet's ground-truth
// prompt; queries scored against their facet's store.
inline RunResult run_prompted_gt(const BenchmarkSet& bench, EmbedderProvider& provider,
                                 const PromptRegistry& registry,
                                 const EvalOptions& options = {}) {
  detail::require_capability(provider, Capability::image_prompted, "prompted image embedding");
  detail::require_capability(provider, Capability::text_query, "query embedding");
  detail::require_registry_coverage(bench, registry);

  CostLedger ledger(options.costs);
  CountingProvider counted(provider, ledger);
  counted.set_phase(CostLedger::Phase::preprocess);

  std::map<std::string, EmbeddingStore> stores;  // facet -> prompted store
  std::size_t n_prompts = 0;
  for (const auto& facet : bench.facets()) {
    const auto pool = bench.candidate_union(facet.name);
    if (pool.empty()) continue;
    const PromptSpec& prompt = registry.by_facet(facet.name);
    EmbeddingStore store(prompt.prompt_id, counted.dim());
    for (const auto& id : pool) store.add(id, counted.embed_image_prompted(id, prompt));
    ledger.set_facet_pool_size(facet.name, store.size());
    stores.emplace(facet.name, std::move(store));
    ++n_prompts;
  }
  ledger.set_pool_size(bench.candidate_union().size());
  ledger.set_query_count(bench.cases().size());
  ledger.set_prompt_count(n_prompts);

  counted.set_phase(CostLedger::Phase::query);
  std::vector<EvalRecord> records(bench.cases().size());
  detail::parallel_for(bench.cases().size(), options.workers, [&](std::size_t i) {
    const TestCase& tc = bench.cases()[i];
    const EmbeddingVector q = counted.embed_query(QueryRef{tc.case_id, tc.query_text, tc.facet});
    const auto candidates = tc.candidates();
    const RankResult r = rank_of(stores.at(tc.facet), candidates, q, tc.positive);
    records[i] = EvalRecord{tc.case_id, r.rank, r.pool_size, "prompted_gt"};
  });
  return RunResult{std::move(records), ledger.summary(), {}, std::nullopt};
}

struct SelectedRunOptions {
  SelectorOptions selector;
  // Bound on concurrent in-flight external selector calls.
  std::size_t max_in_flight = 4;
};

// Pre-builds one store per registry prompt over the full candidate union (the
// pre-processing phase, not charged per query); at test time each query costs
// one selector call plus one embedding.
inline RunResult run_preprocessed_selected(const BenchmarkSet& bench, EmbedderProvider& provider,
                                           const PromptRegistry& registry,
                                           const SelectedRunOptions& sel_options = {},
                                           const EvalOptions& options = {}) {
  detail::require_capability(provider, Capability::image_prompted, "prompted image embedding");
  detail::require_capability(provider, Capability::text_query, "query embedding");
  detail::require_registry_coverage(bench, registry);

  CostLedger ledger(options.costs);
  CountingProvider counted(provider, ledger);
  counted.set_phase(CostLedger::Phase::preprocess);

  const auto pool = bench.candidate_union();
  std::map<std::string, EmbeddingStore> stores;  // prompt_id -> store
  for (const auto& prompt : registry.prompts()) {
    EmbeddingStore store(prompt.prompt_id, counted.dim());
    for (const auto& id : pool) store.add(id, counted.embed_image_prompted(id, prompt));
    stores.emplace(prompt.prompt_id, std::move(store));
  }
  ledger.set_pool_size(pool.size());
  ledger.set_query_count(bench.cases().size());
  ledger.set_prompt_count(registry.size());

  counted.set_phase(CostLedger::Phase::query);
  std::vector<EvalRecord> records(bench.cases().size());
  std::vector<char> selected_gt(bench.cases().size(), 0);
  std::counting_semaphore<> in_flight(
      static_cast<std::ptrdiff_t>(std::max<std::size_t>(sel_options.max_in_flight, 1)));

  detail::parallel_for(bench.cases().size(), options.workers, [&](std::size_t i) {
    const TestCase& tc = bench.cases()[i];
    SelectionOutcome outcome;
    if (sel_options.selector.client != nullptr) {
      in_flight.acquire();
      try {
        outcome = select_prompt(tc.query_text, registry, sel_options.selector);
      } catch (...) {
        in_flight.release();
        throw;
      }
      in_flight.release();
    } else {
      outcome = select_prompt(tc.query_text, registry, sel_options.selector);
    }
    ledger.count_selector(CostLedger::Phase::query);
    // Evaluation proceeds against the selected store even when the selection
    // is wrong; wrong-but-similar prompts retain some accuracy.
    const EmbeddingVector q = counted.embed_query(QueryRef{tc.case_id, tc.query_text, tc.facet});
    const auto candidates = tc.candidates();
    const RankResult r = rank_of(stores.at(outcome.chosen), candidates, q, tc.positive);
    records[i] = EvalRecord{tc.case_id, r.rank, r.pool_size, "preprocessed_selected"};
    selected_gt[i] = outcome.chosen == registry.by_facet(tc.facet).prompt_id ? 1 : 0;
  });

  RunResult result{std::move(records), ledger.summary(), {}, std::nullopt};
  std::map<std::string, std::pair<std::size_t, std::size_t>> facet_counts;
  for (std::size_t i = 0; i < bench.cases().size(); ++i) {
    auto& [correct, total] = facet_counts[bench.cases()[i].facet];
    correct += static_cast<std::size_t>(selected_gt[i]);
    ++total;
  }
  std::size_t correct_total = 0;
  for (const auto& [facet, counts] : facet_counts) {
    result.selection_accuracy_per_facet[facet] =
        static_cast<double>(counts.first) / static_cast<double>(counts.second);
    correct_total += counts.first;
  }
  result.selection_accuracy =
      static_cast<double>(correct_total) / static_cast<double>(bench.cases().size());
  return result;
}

// Per facet: sample K (a, b) pairs from the facet's candidate pool, fit
// W = B A^T once, transform each query, score against the general store. The
// prompted sample embeddings are charged at query time; the amortized
// counters and the per-query K F + F formula view are both reported.
// A non-empty cross_fit_facet draws every facet's sample from that facet's
// pool instead (disjoint-category fitting); no quality target is attached to
// that configuration.
inline RunResult run_linear_approx(const BenchmarkSet& bench, EmbedderProvider& provider,
                                   const PromptRegistry& registry, std::size_t sample_size,
                                   std::uint64_t seed, const EvalOptions& options = {},
                                   FitMethod method = FitMethod::outer_product,
                                   const std::string& cross_fit_facet = "") {
  if (sample_size == 0) {
    throw InvalidArgumentError("run_linear_approx: sample size K must be >= 1");
  }
  detail::require_capability(provider, Capability::image_general, "general image embedding");
  detail::require_capability(provider, Capability::image_prompted, "prompted image embedding");
  detail::require_capability(provider, Capability::text_query, "query embedding");
  detail::require_registry_coverage(bench, registry);

  CostLedger ledger(options.costs);
  CountingProvider counted(provider, ledger);
  counted.set_phase(CostLedger::Phase::preprocess);
  const EmbeddingStore general = detail::build_general_store(bench, counted);
  ledger.set_pool_size(general.size());
  ledger.set_query_count(bench.cases().size());
  ledger.set_sample_size(sample_size);

  counted.set_phase(CostLedger::Phase::query);
  std::map<std::string, LinearMap> maps;  // facet -> fitted map
  std::size_t n_facets = 0;
  for (std::size_t f = 0; f < bench.facets().size(); ++f) {
    const std::string& facet_name = bench.facets()[f].name;
    const auto facet_pool = bench.candidate_union(facet_name);
    if (facet_pool.empty()) continue;
    const PromptSpec& prompt = registry.by_facet(facet_name);
    const auto sample_pool =
        cross_fit_facet.empty() ? facet_pool : bench.candidate_union(cross_fit_facet);
    // The general columns of the sample are reads of stored embeddings, not
    // fresh embedder calls; only the K prompted embeddings are charged.
    const auto pairs =
        sample_pairs(provider, sample_pool, prompt, sample_size, detail::mix_seed(seed, f));
    ledger.count_prompted(CostLedger::Phase::query, pairs.count());
    ledger.set_facet_pool_size(facet_name, facet_pool.size());
    maps.emplace(facet_name, fit(pairs, method));
    ++n_facets;
  }
  ledger.set_prompt_count(n_facets);

  std::vector<EvalRecord> records(bench.cases().size());
  detail::parallel_for(bench.cases().size(), options.workers, [&](std::size_t i) {
    const TestCase& tc = bench.cases()[i];
    const EmbeddingVector q = counted.embed_query(QueryRef{tc.case_id, tc.query_text, tc.facet});
    const EmbeddingVector tq = transform_query(maps.at(tc.facet), q);
    const auto candidates = tc.candidates();
    const RankResult r = rank_of(general, candidates, tq, tc.positive);
    records[i] = EvalRecord{tc.case_id, r.rank, r.pool_size, "linear_approx"};
  });
  return RunResult{std::move(records), ledger.summary(), {}, std::nullopt};
}

// --- cost reporting ---

struct CostRow {
  std::string mode;
  std::string phase;
  std::string formula;
  double unit_total = 0.0;
  std::optional<double> counter_total;  // absent for formula-only views
};

// Emits, per phase: the symbolic formula, its numeric value under the
// configured unit costs, and the counter-derived actual.
inline std::vector<CostRow> cost_report(const CostSummary& s, EvalMode mode) {
  const double v = s.costs.v, t = s.costs.t, F = s.costs.F;
  const double N = static_cast<double>(s.n_images);
  const double M = static_cast<double>(s.n_queries);
  const double K = static_cast<double>(s.sample_size);
  const double P = static_cast<double>(s.n_prompts);
  const std::string mode_name = to_string(mode);
  std::vector<CostRow> rows;

  auto row = [&](std::string phase, std::string formula, double unit,
                 std::optional<double> counter) {
    rows.push_back(CostRow{mode_name, std::move(phase), std::move(formula), unit, counter});
  };

  switch (mode) {
    case EvalMode::baseline: {
      row("preprocess", "N*v", N * v, static_cast<double>(s.preprocess.image_embed_calls) * v);
      row("per_query", "t", t,
          M > 0 ? static_cast<double>(s.query.text_embed_calls) * t / M : 0.0);
      row("total", "N*v + M*t", N * v + M * t,
          static_cast<double>(s.preprocess.image_embed_calls) * v +
              static_cast<double>(s.query.text_embed_calls) * t);
      break;
    }
    case EvalMode::prompted_gt: {
      double nf_sum = 0.0;
      for (const auto& [facet, n] : s.facet_pool_sizes) nf_sum += static_cast<double>(n);
      row("preprocess", "sum_f(N_f*F)", nf_sum * F,
          static_cast<double>(s.preprocess.prompted_embed_calls) * F);
      row("per_query", "F", F,
          M > 0 ? static_cast<double>(s.query.text_embed_calls) * F / M : 0.0);
      row("naive_per_query", "N*F + F", (N + 1.0) * F, std::nullopt);
      row("total", "sum_f(N_f*F) + M*F", nf_sum * F + M * F,
          static_cast<double>(s.preprocess.prompted_embed_calls) * F +
              static_cast<double>(s.query.text_embed_calls) * F);
      break;
    }
    case EvalMode::preprocessed_selected: {
      row("preprocess", "P*N*F", P * N * F,
          static_cast<double>(s.preprocess.prompted_embed_calls) * F);
      row("per_query", "F", F,
          M > 0 ? static_cast<double>(s.query.text_embed_calls) * F / M : 0.0);
      row("selector_per_query", "1 call", 1.0,
          M > 0 ? static_cast<double>(s.query.selector_calls) / M : 0.0);
      row("total", "P*N*F + M*F", P * N * F + M * F,
          static_cast<double>(s.preprocess.prompted_embed_calls) * F +
              static_cast<double>(s.query.text_embed_calls) * F);
      break;
    }
    case EvalMode::linear_approx: {
      const double n_facets = static_cast<double>(s.facet_pool_sizes.size());
      row("preprocess", "N*v", N * v, static_cast<double>(s.preprocess.image_embed_calls) * v);
      row("per_query_formula", "K*F + F", (K + 1.0) * F, std::nullopt);
      row("per_query_amortized", "(n_facets*K*F + M*F) / M",
          M > 0 ? (n_facets * K * F + M * F) / M : 0.0,
          M > 0 ? (static_cast<double>(s.query.prompted_embed_calls) * F +
                   static_cast<double>(s.query.text_embed_calls) * F) /
                      M
                : 0.0);
      row("total_amortized", "N*v + n_facets*K*F + M*F", N * v + n_facets * K * F + M * F,
          static_cast<double>(s.preprocess.image_embed_calls) * v +
              static_cast<double>(s.query.prompted_embed_calls) * F +
              static_cast<double>(s.query.text_embed_calls) * F);
      break;
    }
  }
  return rows;
}

inline void write_cost_csv(std::span<const CostRow> rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw IoError("cost csv: cannot open " + path.string());
  }
  out << "mode,phase,formula,unit_total,counter_total\n";
  for (const auto& r : rows) {
    out << r.mode << "," << r.phase << ",\"" << r.formula << "\","
        << detail::format_double(r.unit_total) << ",";
    if (r.counter_total.has_value()) out << detail::format_double(*r.counter_total);
    out << "\n";
  }
  if (!out) {
    throw IoError("cost csv: write failed for " + path.string());
  }
}

// --- run manifest ---

struct RunManifest {
  std::string mode;
  std::string benchmark_path;
  std::string provider_id;
  std::string registry_path;
  std::uint64_t seed = 0;
  std::vector<std::size_t> ks;
  std::vector<std::string> outputs;
  std::string timestamp;  // ISO 8601 UTC
};

inline std::string utc_timestamp_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return std::string(buf);
}

inline void write_manifest(const RunManifest& manifest, const std::filesystem::path& path) {
  nlohmann::json j = {{"mode", manifest.mode},
                      {"benchmark", manifest.benchmark_path},
                      {"provider", manifest.provider_id},
                      {"registry", manifest.registry_path},
                      {"seed", manifest.seed},
                      {"ks", manifest.ks},
                      {"outputs", manifest.outputs},
                      {"timestamp", manifest.timestamp}};
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw IoError("manifest: cannot open " + path.string());
  }
  out << j.dump(2) << "\n";
}

}  // namespace facet
