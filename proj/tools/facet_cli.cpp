// Command-line surface for the retrieval engine: synthetic fixture
// generation, index building, prompt tooling, evaluation runs, K sweeps and
// report merging.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "facet/approx.hpp"
#include "facet/benchmark.hpp"
#include "facet/errors.hpp"
#include "facet/harness.hpp"
#include "facet/http.hpp"
#include "facet/prompts.hpp"
#include "facet/providers.hpp"
#include "facet/search.hpp"
#include "facet/store.hpp"
#include "facet/synthgen.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct AppConfig {
  facet::GeneratorConfig gen;
  std::size_t workers = std::thread::hardware_concurrency();
  facet::CostConfig costs;
};

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw facet::IoError("cannot open config " + path.string());
  }
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::exception& e) {
    throw facet::FormatError("config " + path.string() + ": " + e.what());
  }
}

void apply_world_section(const json& j, facet::SyntheticWorldConfig& world) {
  world.n_facets = j.value("n_facets", world.n_facets);
  world.values_per_facet = j.value("values_per_facet", world.values_per_facet);
  world.n_images = j.value("n_images", world.n_images);
  world.salience_low = j.value("salience_low", world.salience_low);
  world.salience_high = j.value("salience_high", world.salience_high);
  world.dominant_fraction = j.value("dominant_fraction", world.dominant_fraction);
  world.query_blend_mu = j.value("query_blend_mu", world.query_blend_mu);
  world.prompt_boost_gamma = j.value("prompt_boost_gamma", world.prompt_boost_gamma);
  world.noise_scale = j.value("noise_scale", world.noise_scale);
  world.seed = j.value("seed", world.seed);
}

void apply_benchmark_section(const json& j, facet::GeneratorConfig& gen) {
  gen.default_cases = j.value("default_cases", gen.default_cases);
  gen.negatives_per_case = j.value("negatives_per_case", gen.negatives_per_case);
  gen.seed = j.value("seed", gen.seed);
  if (j.contains("cases_per_facet")) {
    for (const auto& [facet, count] : j["cases_per_facet"].items()) {
      gen.cases_per_facet[facet] = count.get<std::size_t>();
    }
  }
  if (j.contains("ordinal_margins")) {
    gen.ordinal_margins.clear();
    for (const auto& [facet, margin] : j["ordinal_margins"].items()) {
      gen.ordinal_margins[facet] = margin.get<int>();
    }
  }
  if (j.contains("exclusivity")) {
    gen.exclusivity.clear();
    for (const auto& [facet, pairs] : j["exclusivity"].items()) {
      for (const auto& pair : pairs) {
        gen.exclusivity[facet].emplace_back(pair.at(0).get<int>(), pair.at(1).get<int>());
      }
    }
  }
  if (j.contains("default_positive_policy")) {
    gen.default_positive_policy =
        facet::positive_policy_from_string(j["default_positive_policy"].get<std::string>());
  }
  if (j.contains("positive_policy")) {
    for (const auto& [facet, policy] : j["positive_policy"].items()) {
      gen.positive_policy[facet] = facet::positive_policy_from_string(policy.get<std::string>());
    }
  }
}

AppConfig load_config(const std::string& path) {
  AppConfig cfg;
  cfg.gen = facet::GeneratorConfig::defaults();
  if (path.empty()) return cfg;
  const json j = read_json_file(path);
  if (j.contains("world")) apply_world_section(j["world"], cfg.gen.world);
  if (j.contains("benchmark")) apply_benchmark_section(j["benchmark"], cfg.gen);
  if (j.contains("eval")) {
    cfg.workers = j["eval"].value("workers", cfg.workers);
  }
  if (j.contains("costs")) {
    cfg.costs.v = j["costs"].value("v", cfg.costs.v);
    cfg.costs.t = j["costs"].value("t", cfg.costs.t);
    cfg.costs.F = j["costs"].value("F", cfg.costs.F);
  }
  return cfg;
}

json config_to_json(const AppConfig& cfg) {
  const auto& w = cfg.gen.world;
  json jw = {{"n_facets", w.n_facets},
             {"values_per_facet", w.values_per_facet},
             {"n_images", w.n_images},
             {"salience_low", w.salience_low},
             {"salience_high", w.salience_high},
             {"dominant_fraction", w.dominant_fraction},
             {"query_blend_mu", w.query_blend_mu},
             {"prompt_boost_gamma", w.prompt_boost_gamma},
             {"noise_scale", w.noise_scale},
             {"seed", w.seed}};
  json jb = {{"default_cases", cfg.gen.default_cases},
             {"negatives_per_case", cfg.gen.negatives_per_case},
             {"seed", cfg.gen.seed},
             {"default_positive_policy", facet::to_string(cfg.gen.default_positive_policy)}};
  jb["cases_per_facet"] = json::object();
  for (const auto& [facet, count] : cfg.gen.cases_per_facet) {
    jb["cases_per_facet"][facet] = count;
  }
  jb["ordinal_margins"] = json::object();
  for (const auto& [facet, margin] : cfg.gen.ordinal_margins) {
    jb["ordinal_margins"][facet] = margin;
  }
  jb["exclusivity"] = json::object();
  for (const auto& [facet, pairs] : cfg.gen.exclusivity) {
    json arr = json::array();
    for (const auto& [a, b] : pairs) arr.push_back(json::array({a, b}));
    jb["exclusivity"][facet] = arr;
  }
  jb["positive_policy"] = json::object();
  for (const auto& [facet, policy] : cfg.gen.positive_policy) {
    jb["positive_policy"][facet] = facet::to_string(policy);
  }
  return json{{"world", jw},
              {"benchmark", jb},
              {"eval", {{"workers", cfg.workers}}},
              {"costs", {{"v", cfg.costs.v}, {"t", cfg.costs.t}, {"F", cfg.costs.F}}}};
}

facet::PromptRegistry resolve_registry(const std::string& spec) {
  if (spec.empty() || spec == "gpt") return facet::default_registry();
  if (spec == "human") return facet::human_registry();
  return facet::PromptRegistry::load(spec);
}

struct SynthFixture {
  std::shared_ptr<facet::SyntheticWorld> world;
  facet::BenchmarkSet bench;
  std::unique_ptr<facet::SyntheticProvider> provider;
  facet::PromptRegistry registry;
};

SynthFixture build_synth_fixture(const AppConfig& cfg, const std::string& registry_spec) {
  auto world = facet::generate_world(cfg.gen.world);
  auto bench = facet::generate_benchmark(*world, cfg.gen);
  auto registry = facet::registry_for_benchmark(resolve_registry(registry_spec), bench);
  auto provider = std::make_unique<facet::SyntheticProvider>(world);
  return SynthFixture{world, std::move(bench), std::move(provider), std::move(registry)};
}

struct ProviderBundle {
  std::unique_ptr<facet::EmbedderProvider> provider;
  std::optional<facet::BenchmarkSet> bench;  // synth provider regenerates it
};

ProviderBundle make_provider(const std::string& kind, const AppConfig& cfg,
                             const std::string& store_dir, std::size_t http_dim) {
  if (kind == "synth") {
    auto world = facet::generate_world(cfg.gen.world);
    auto bench = facet::generate_benchmark(*world, cfg.gen);
    return ProviderBundle{std::make_unique<facet::SyntheticProvider>(world), std::move(bench)};
  }
  if (kind == "files") {
    if (store_dir.empty()) {
      throw facet::InvalidArgumentError("--store-dir is required for the files provider");
    }
    const fs::path dir(store_dir);
    std::optional<facet::EmbeddingStore> general;
    std::optional<facet::EmbeddingStore> queries;
    std::map<std::string, facet::EmbeddingStore> prompted;
    if (fs::exists(dir / "general.fcte")) {
      general = facet::EmbeddingStore::load(dir / "general.fcte");
    }
    if (fs::exists(dir / "queries.fcte")) {
      queries = facet::EmbeddingStore::load(dir / "queries.fcte");
    }
    for (const auto& entry : fs::directory_iterator(dir)) {
      const std::string name = entry.path().filename().string();
      if (name.rfind("prompt_", 0) == 0 && entry.path().extension() == ".fcte") {
        const std::string prompt_id = name.substr(7, name.size() - 7 - 5);
        prompted.emplace(prompt_id, facet::EmbeddingStore::load(entry.path()));
      }
    }
    return ProviderBundle{std::make_unique<facet::FileBackedProvider>(
                              std::move(general), std::move(queries), std::move(prompted)),
                          std::nullopt};
  }
  if (kind == "http") {
    if (http_dim == 0) {
      throw facet::InvalidArgumentError("--dim is required for the http provider");
    }
    auto provider = facet::HttpEmbedderProvider::from_env(http_dim);
    if (!provider) {
      throw facet::ConfigInvalidError(std::string(facet::kEmbedderUrlEnv) +
                                      " must be set for the http provider");
    }
    return ProviderBundle{std::move(provider), std::nullopt};
  }
  throw facet::InvalidArgumentError("unknown provider kind: " + kind);
}

void write_selection_csv(const facet::RunResult& result, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw facet::IoError("selection csv: cannot open " + path.string());
  out << "facet,selection_accuracy\n";
  for (const auto& [facet, acc] : result.selection_accuracy_per_facet) {
    out << facet << "," << facet::detail::format_double(acc) << "\n";
  }
  if (result.selection_accuracy.has_value()) {
    out << "overall," << facet::detail::format_double(*result.selection_accuracy) << "\n";
  }
}

facet::Report mean_report(const std::vector<facet::Report>& reports) {
  facet::Report out = reports.front();
  for (auto& row : out.rows) {
    double sum = 0.0;
    for (const auto& r : reports) {
      for (const auto& other : r.rows) {
        if (other.facet == row.facet && other.k == row.k) {
          sum += other.recall;
          break;
        }
      }
    }
    row.recall = sum / static_cast<double>(reports.size());
  }
  for (auto& [k, v] : out.macro_average) {
    double sum = 0.0;
    for (const auto& r : reports) sum += r.macro_average.at(k);
    v = sum / static_cast<double>(reports.size());
  }
  for (auto& [k, v] : out.case_weighted_average) {
    double sum = 0.0;
    for (const auto& r : reports) sum += r.case_weighted_average.at(k);
    v = sum / static_cast<double>(reports.size());
  }
  return out;
}

int cmd_synth_gen(const AppConfig& cfg, const std::string& out_dir,
                  const std::string& registry_spec) {
  const fs::path dir(out_dir);
  fs::create_directories(dir);
  SynthFixture fixture = build_synth_fixture(cfg, registry_spec);

  fixture.bench.save(dir / "benchmark.jsonl");
  fixture.registry.save(dir / "registry.json");
  {
    std::ofstream out(dir / "config.json", std::ios::trunc);
    out << config_to_json(cfg).dump(2) << "\n";
  }

  const auto pool = fixture.bench.candidate_union();
  facet::EmbeddingStore general("general", fixture.provider->dim());
  for (const auto& id : pool) general.add(id, fixture.provider->embed_image_general(id));
  general.save(dir / "general.fcte");

  facet::EmbeddingStore queries("queries", fixture.provider->dim());
  for (const auto& tc : fixture.bench.cases()) {
    queries.add(tc.case_id, fixture.provider->embed_query(
                                facet::QueryRef{tc.case_id, tc.query_text, tc.facet}));
  }
  queries.save(dir / "queries.fcte");

  for (const auto& prompt : fixture.registry.prompts()) {
    facet::EmbeddingStore store(prompt.prompt_id, fixture.provider->dim());
    for (const auto& id : pool) {
      store.add(id, fixture.provider->embed_image_prompted(id, prompt));
    }
    store.save(dir / ("prompt_" + prompt.prompt_id + ".fcte"));
  }

  std::cout << "wrote " << fixture.bench.cases().size() << " cases over " << pool.size()
            << " images to " << dir.string() << "\n";
  return 0;
}

int cmd_index_build(const AppConfig& cfg, const std::string& provider_kind,
                    const std::string& benchmark_path, const std::string& out_path,
                    bool general, const std::string& prompt_id,
                    const std::string& registry_spec, const std::string& store_dir,
                    std::size_t http_dim) {
  if (general == !prompt_id.empty()) {
    throw facet::InvalidArgumentError("pass exactly one of --general or --prompt");
  }
  ProviderBundle bundle = make_provider(provider_kind, cfg, store_dir, http_dim);
  facet::BenchmarkSet bench =
      bundle.bench.has_value() ? *bundle.bench : facet::BenchmarkSet::load(benchmark_path);
  const auto pool = bench.candidate_union();
  if (general) {
    facet::EmbeddingStore store("general", bundle.provider->dim());
    for (const auto& id : pool) store.add(id, bundle.provider->embed_image_general(id));
    store.save(out_path);
  } else {
    const auto registry = resolve_registry(registry_spec);
    const facet::PromptSpec& prompt = registry.by_id(prompt_id);
    facet::EmbeddingStore store(prompt.prompt_id, bundle.provider->dim());
    for (const auto& id : pool) {
      store.add(id, bundle.provider->embed_image_prompted(id, prompt));
    }
    store.save(out_path);
  }
  std::cout << "wrote " << pool.size() << " rows to " << out_path << "\n";
  return 0;
}

int cmd_eval_run(const AppConfig& cfg, const std::string& mode_name,
                 const std::string& provider_kind, const std::string& benchmark_path,
                 const std::string& store_dir, std::size_t http_dim,
                 const std::string& registry_spec, std::size_t k_sample, std::uint64_t seed,
                 std::size_t n_seeds, const std::string& out_dir, bool external_selector,
                 bool fallback_lexical, const std::string& fit_facet, bool least_squares) {
  const facet::EvalMode mode = facet::eval_mode_from_string(mode_name);
  const fs::path dir(out_dir);
  fs::create_directories(dir);

  ProviderBundle bundle = make_provider(provider_kind, cfg, store_dir, http_dim);
  facet::BenchmarkSet bench =
      bundle.bench.has_value() ? *bundle.bench : facet::BenchmarkSet::load(benchmark_path);
  if (bundle.bench.has_value() && !benchmark_path.empty()) {
    const auto loaded = facet::BenchmarkSet::load(benchmark_path);
    if (!(loaded == bench)) {
      throw facet::InvariantViolationError(
          "benchmark file does not match the one regenerated from --config");
    }
  }

  facet::EvalOptions options;
  options.workers = cfg.workers;
  options.costs = cfg.costs;

  std::unique_ptr<facet::TextGenClient> llm;
  if (external_selector) {
    llm = facet::HttpTextGenClient::from_env();
    if (!llm) {
      throw facet::ConfigInvalidError(std::string(facet::kLlmUrlEnv) +
                                      " must be set for --external");
    }
  }

  std::vector<facet::Report> reports;
  std::optional<facet::RunResult> last;
  const std::size_t runs = mode == facet::EvalMode::linear_approx ? std::max<std::size_t>(n_seeds, 1) : 1;
  for (std::size_t i = 0; i < runs; ++i) {
    facet::RunResult result;
    switch (mode) {
      case facet::EvalMode::baseline:
        result = facet::run_baseline(bench, *bundle.provider, options);
        break;
      case facet::EvalMode::prompted_gt: {
        const auto registry = facet::registry_for_benchmark(resolve_registry(registry_spec), bench);
        result = facet::run_prompted_gt(bench, *bundle.provider, registry, options);
        break;
      }
      case facet::EvalMode::preprocessed_selected: {
        const auto registry = facet::registry_for_benchmark(resolve_registry(registry_spec), bench);
        facet::SelectedRunOptions sel;
        sel.selector.client = llm.get();
        sel.selector.fallback_to_lexical = fallback_lexical;
        result = facet::run_preprocessed_selected(bench, *bundle.provider, registry, sel, options);
        break;
      }
      case facet::EvalMode::linear_approx: {
        if (k_sample == 0) {
          throw facet::InvalidArgumentError("--k-sample must be >= 1 for approx mode");
        }
        const auto registry = facet::registry_for_benchmark(resolve_registry(registry_spec), bench);
        result = facet::run_linear_approx(
            bench, *bundle.provider, registry, k_sample, seed + i, options,
            least_squares ? facet::FitMethod::least_squares : facet::FitMethod::outer_product,
            fit_facet);
        break;
      }
    }
    auto report = facet::per_facet_report(result.records, bench, options.report_ks);
    if (runs > 1) {
      facet::write_report_csv(report, dir / ("report_seed" + std::to_string(seed + i) + ".csv"));
    }
    reports.push_back(std::move(report));
    last = std::move(result);
  }

  const facet::Report merged = runs > 1 ? mean_report(reports) : reports.front();
  facet::write_report_csv(merged, dir / "report.csv");
  facet::write_report_json(merged, dir / "report.json");
  const auto cost_rows = facet::cost_report(last->cost, mode);
  facet::write_cost_csv(cost_rows, dir / "cost.csv");
  if (mode == facet::EvalMode::preprocessed_selected) {
    write_selection_csv(*last, dir / "selection.csv");
  }

  facet::RunManifest manifest;
  manifest.mode = facet::to_string(mode);
  manifest.benchmark_path = benchmark_path;
  manifest.provider_id = bundle.provider->id();
  manifest.registry_path = registry_spec.empty() ? "gpt" : registry_spec;
  manifest.seed = seed;
  if (mode == facet::EvalMode::linear_approx) manifest.ks = {k_sample};
  manifest.outputs = {(dir / "report.csv").string(), (dir / "report.json").string(),
                      (dir / "cost.csv").string()};
  manifest.timestamp = facet::utc_timestamp_now();
  facet::write_manifest(manifest, dir / "manifest.json");

  for (std::size_t k : options.report_ks) {
    std::cout << "recall@" << k << " macro_average "
              << facet::detail::format_double(merged.macro_average.at(k)) << "\n";
  }
  if (last->selection_accuracy.has_value()) {
    std::cout << "selection_accuracy " << facet::detail::format_double(*last->selection_accuracy)
              << "\n";
  }
  return 0;
}

int cmd_sweep(const AppConfig& cfg, const std::string& provider_kind,
              const std::string& benchmark_path, const std::string& store_dir,
              std::size_t http_dim, const std::string& registry_spec,
              const std::vector<std::size_t>& ks, std::uint64_t seed, std::size_t n_seeds,
              const std::string& out_dir, bool least_squares) {
  const fs::path dir(out_dir);
  fs::create_directories(dir);
  ProviderBundle bundle = make_provider(provider_kind, cfg, store_dir, http_dim);
  facet::BenchmarkSet bench =
      bundle.bench.has_value() ? *bundle.bench : facet::BenchmarkSet::load(benchmark_path);
  const auto registry = facet::registry_for_benchmark(resolve_registry(registry_spec), bench);

  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < std::max<std::size_t>(n_seeds, 1); ++i) seeds.push_back(seed + i);
  const auto table =
      facet::k_sweep(*bundle.provider, bench, registry, ks, seeds,
                     least_squares ? facet::FitMethod::least_squares
                                   : facet::FitMethod::outer_product);
  facet::write_sweep_csv(table, dir / "sweep.csv");

  facet::RunManifest manifest;
  manifest.mode = "sweep";
  manifest.benchmark_path = benchmark_path;
  manifest.provider_id = bundle.provider->id();
  manifest.registry_path = registry_spec.empty() ? "gpt" : registry_spec;
  manifest.seed = seed;
  manifest.ks = ks;
  manifest.outputs = {(dir / "sweep.csv").string()};
  manifest.timestamp = facet::utc_timestamp_now();
  facet::write_manifest(manifest, dir / "manifest.json");

  std::cout << "wrote " << table.cells.size() << " sweep cells to "
            << (dir / "sweep.csv").string() << "\n";
  return 0;
}

int cmd_report_merge(const std::vector<std::string>& inputs, const std::string& out_path) {
  if (inputs.empty()) {
    throw facet::InvalidArgumentError("report merge: no inputs");
  }
  std::ofstream out(out_path, std::ios::trunc);
  if (!out) throw facet::IoError("report merge: cannot open " + out_path);
  out << "facet,k,recall,n_cases,mode\n";
  for (const auto& input : inputs) {
    const json j = read_json_file(input);
    for (const auto& row : j.at("per_facet")) {
      out << row.at("facet").get<std::string>() << "," << row.at("k").get<std::size_t>() << ","
          << facet::detail::format_double(row.at("recall").get<double>()) << ","
          << row.at("n_cases").get<std::size_t>() << "," << row.at("mode").get<std::string>()
          << "\n";
    }
  }
  std::cout << "merged " << inputs.size() << " reports into " << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"attribute-focused text-to-image retrieval engine"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path, "JSON config with world/benchmark/eval/costs sections");

  // synth gen
  auto* synth = app.add_subcommand("synth", "synthetic world and benchmark tooling");
  synth->fallthrough();
  auto* synth_gen = synth->add_subcommand("gen", "generate world, benchmark and fixture stores");
  synth_gen->fallthrough();
  std::string out_dir;
  std::string registry_spec;
  std::optional<std::uint64_t> seed_override;
  std::optional<int> images_override, facets_override, values_override;
  std::optional<std::size_t> cases_override, negatives_override;
  synth_gen->add_option("--out", out_dir, "output directory")->required();
  synth_gen->add_option("--registry", registry_spec, "gpt, human, or a registry JSON path");
  synth_gen->add_option("--seed", seed_override, "world seed override");
  synth_gen->add_option("--images", images_override, "number of images");
  synth_gen->add_option("--facets", facets_override, "number of facets");
  synth_gen->add_option("--values", values_override, "values per facet");
  synth_gen->add_option("--cases", cases_override, "cases per facet");
  synth_gen->add_option("--negatives", negatives_override, "negatives per case");

  // index build
  auto* index = app.add_subcommand("index", "embedding store tooling");
  index->fallthrough();
  auto* index_build = index->add_subcommand("build", "build a general or prompted store");
  index_build->fallthrough();
  std::string ib_provider = "synth", ib_benchmark, ib_out, ib_prompt, ib_store_dir;
  bool ib_general = false;
  std::size_t ib_dim = 0;
  index_build->add_option("--provider", ib_provider, "synth|files|http");
  index_build->add_option("--benchmark", ib_benchmark, "benchmark JSONL path");
  index_build->add_option("--out", ib_out, "output store path")->required();
  index_build->add_flag("--general", ib_general, "build the general store");
  index_build->add_option("--prompt", ib_prompt, "prompt id for a prompted store");
  index_build->add_option("--registry", registry_spec, "gpt, human, or a registry JSON path");
  index_build->add_option("--store-dir", ib_store_dir, "store directory (files provider)");
  index_build->add_option("--dim", ib_dim, "embedding dim (http provider)");

  // prompt gen / select
  auto* prompt = app.add_subcommand("prompt", "question generation and prompt selection");
  prompt->fallthrough();
  auto* prompt_gen = prompt->add_subcommand("gen", "generate a facet question");
  prompt_gen->fallthrough();
  std::string pg_facet;
  std::vector<std::string> pg_answers;
  bool pg_external = false;
  prompt_gen->add_option("--facet", pg_facet, "facet name")->required();
  prompt_gen->add_option("--answers", pg_answers, "example answers")->delimiter(',');
  prompt_gen->add_flag("--external", pg_external, "use the FACET_LLM_URL service");

  auto* prompt_select = prompt->add_subcommand("select", "select the prompt for a query");
  prompt_select->fallthrough();
  std::string ps_query;
  bool ps_external = false, ps_fallback = false;
  prompt_select->add_option("--query", ps_query, "query text")->required();
  prompt_select->add_option("--registry", registry_spec, "gpt, human, or a registry JSON path");
  prompt_select->add_flag("--external", ps_external, "use the FACET_LLM_URL service");
  prompt_select->add_flag("--fallback-lexical", ps_fallback,
                          "fall back to lexical selection on failure");

  // eval run
  auto* eval = app.add_subcommand("eval", "evaluation runs");
  eval->fallthrough();
  auto* eval_run = eval->add_subcommand("run", "run one evaluation mode");
  eval_run->fallthrough();
  std::string er_mode, er_provider = "files", er_benchmark, er_store_dir, er_out;
  std::size_t er_dim = 0, er_k = 100, er_seeds = 1;
  std::uint64_t er_seed = 7;
  bool er_external = false, er_fallback = false;
  eval_run->add_option("--mode", er_mode, "baseline|prompted|selected|approx")->required();
  eval_run->add_option("--provider", er_provider, "files|synth|http");
  eval_run->add_option("--benchmark", er_benchmark, "benchmark JSONL path");
  eval_run->add_option("--store-dir", er_store_dir, "store directory (files provider)");
  eval_run->add_option("--dim", er_dim, "embedding dim (http provider)");
  eval_run->add_option("--registry", registry_spec, "gpt, human, or a registry JSON path");
  eval_run->add_option("--k-sample", er_k, "sample size K for approx mode");
  eval_run->add_option("--seed", er_seed, "sampling seed");
  eval_run->add_option("--seeds", er_seeds, "number of seeds (approx mode)");
  eval_run->add_option("--out-dir", er_out, "output directory")->required();
  eval_run->add_flag("--external", er_external, "use the FACET_LLM_URL selector");
  eval_run->add_flag("--fallback-lexical", er_fallback, "lexical fallback on selector failure");
  std::string er_fit_facet;
  bool er_lsq = false;
  eval_run->add_option("--fit-facet", er_fit_facet,
                       "approx mode: fit every map from this facet's pool");
  eval_run->add_flag("--least-squares", er_lsq, "approx mode: ridge least-squares fitter");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "sample-size sweep for the linear approximation");
  sweep->fallthrough();
  std::string sw_provider = "files", sw_benchmark, sw_store_dir, sw_out;
  std::size_t sw_dim = 0, sw_seeds = 5;
  std::uint64_t sw_seed = 7;
  std::vector<std::size_t> sw_ks;
  bool sw_lsq = false;
  sweep->add_option("--provider", sw_provider, "files|synth|http");
  sweep->add_option("--benchmark", sw_benchmark, "benchmark JSONL path");
  sweep->add_option("--store-dir", sw_store_dir, "store directory (files provider)");
  sweep->add_option("--dim", sw_dim, "embedding dim (http provider)");
  sweep->add_option("--registry", registry_spec, "gpt, human, or a registry JSON path");
  sweep->add_option("--ks", sw_ks, "sample sizes, ascending")->delimiter(',')->required();
  sweep->add_option("--seed", sw_seed, "base seed");
  sweep->add_option("--seeds", sw_seeds, "number of seeds");
  sweep->add_option("--out-dir", sw_out, "output directory")->required();
  sweep->add_flag("--least-squares", sw_lsq, "use the ridge least-squares fitter");

  // report merge
  auto* report = app.add_subcommand("report", "report tooling");
  report->fallthrough();
  auto* report_merge = report->add_subcommand("merge", "merge report JSONs into one CSV");
  report_merge->fallthrough();
  std::vector<std::string> rm_inputs;
  std::string rm_out;
  report_merge->add_option("--inputs", rm_inputs, "report.json files")->delimiter(',')->required();
  report_merge->add_option("--out", rm_out, "merged CSV path")->required();

  try {
    app.parse(argc, argv);

    AppConfig cfg = load_config(config_path);
    if (seed_override) cfg.gen.world.seed = *seed_override;
    if (images_override) cfg.gen.world.n_images = *images_override;
    if (facets_override) {
      cfg.gen.world.n_facets = *facets_override;
      cfg.gen = [&] {
        auto base = cfg.gen;
        auto fresh = facet::GeneratorConfig::defaults();
        fresh.world = base.world;
        fresh.default_cases = base.default_cases;
        fresh.negatives_per_case = base.negatives_per_case;
        fresh.seed = base.seed;
        const auto names = facet::standard_facet_names(
            static_cast<std::size_t>(fresh.world.n_facets));
        fresh.ordinal_margins.clear();
        fresh.exclusivity.clear();
        for (const auto& name : names) {
          if (name == "count_of_people") fresh.ordinal_margins[name] = 3;
          if (name == "weathers") fresh.exclusivity[name].emplace_back(0, 1);
        }
        return fresh;
      }();
    }
    if (values_override) cfg.gen.world.values_per_facet = *values_override;
    if (cases_override) cfg.gen.default_cases = *cases_override;
    if (negatives_override) cfg.gen.negatives_per_case = *negatives_override;

    if (synth_gen->parsed()) return cmd_synth_gen(cfg, out_dir, registry_spec);
    if (index_build->parsed()) {
      return cmd_index_build(cfg, ib_provider, ib_benchmark, ib_out, ib_general, ib_prompt,
                             registry_spec, ib_store_dir, ib_dim);
    }
    if (prompt_gen->parsed()) {
      std::unique_ptr<facet::TextGenClient> llm;
      if (pg_external) {
        llm = facet::HttpTextGenClient::from_env();
        if (!llm) {
          throw facet::ConfigInvalidError(std::string(facet::kLlmUrlEnv) +
                                          " must be set for --external");
        }
      }
      std::vector<std::string> answers = pg_answers;
      if (answers.size() < 2) answers = {"first", "second"};
      std::cout << facet::generate_question(pg_facet, answers, llm.get()) << "\n";
      return 0;
    }
    if (prompt_select->parsed()) {
      const auto registry = resolve_registry(registry_spec);
      std::unique_ptr<facet::TextGenClient> llm;
      if (ps_external) {
        llm = facet::HttpTextGenClient::from_env();
        if (!llm) {
          throw facet::ConfigInvalidError(std::string(facet::kLlmUrlEnv) +
                                          " must be set for --external");
        }
      }
      facet::SelectorOptions options;
      options.client = llm.get();
      options.fallback_to_lexical = ps_fallback;
      const auto outcome = facet::select_prompt(ps_query, registry, options);
      std::cout << outcome.chosen << "\t" << facet::to_string(outcome.method) << "\n";
      return 0;
    }
    if (eval_run->parsed()) {
      return cmd_eval_run(cfg, er_mode, er_provider, er_benchmark, er_store_dir, er_dim,
                          registry_spec, er_k, er_seed, er_seeds, er_out, er_external,
                          er_fallback, er_fit_facet, er_lsq);
    }
    if (sweep->parsed()) {
      return cmd_sweep(cfg, sw_provider, sw_benchmark, sw_store_dir, sw_dim, registry_spec,
                       sw_ks, sw_seed, sw_seeds, sw_out, sw_lsq);
    }
    if (report_merge->parsed()) return cmd_report_merge(rm_inputs, rm_out);
    std::cerr << "no subcommand given\n";
    return 1;
  } catch (const CLI::ParseError& e) {
    if (e.get_name() == "CallForHelp" || e.get_name() == "CallForAllHelp") {
      return app.exit(e);
    }
    std::cerr << e.what() << "\n";
    return 1;
  } catch (const facet::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const facet::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 2;
  }
}
