#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "facet/benchmark.hpp"
#include "facet/embedding.hpp"
#include "facet/errors.hpp"
#include "facet/providers.hpp"
#include "facet/search.hpp"

namespace facet {

// Dense row-major double matrix. Embeddings are stored as 32-bit floats, but
// the fitted map and everything derived from it accumulate in 64-bit.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double& at(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double at(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(data_.data() + i * cols_, cols_);
  }
  const std::vector<double>& data() const { return data_; }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
    return m;
  }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// K sampled (general, prompted) embedding pairs; column i of A and B belong
// to the same image.
struct SamplePairs {
  Matrix A;  // dim x K, general embeddings
  Matrix B;  // dim x K, prompted embeddings
  std::vector<ItemId> image_ids;
  std::string prompt_id;
  std::uint64_t seed = 0;

  std::size_t dim() const { return A.rows(); }
  std::size_t count() const { return A.cols(); }
};

struct LinearMap {
  Matrix W;  // dim x dim
  std::size_t sample_count = 0;
  std::string prompt_id;
  std::uint64_t seed = 0;
};

// Uniformly samples K images without replacement (K > |pool| clamps with a
// warning) and embeds each both ways. Deterministic given (pool, seed).
inline SamplePairs sample_pairs(EmbedderProvider& provider, std::span<const ItemId> image_pool,
                                const PromptSpec& prompt, std::size_t k, std::uint64_t seed) {
  if (k == 0) {
    throw InvalidArgumentError("sample_pairs: K must be >= 1");
  }
  if (image_pool.empty()) {
    throw EmptyPoolError("sample_pairs: image pool is empty");
  }
  if (!provider.supports(Capability::image_general) ||
      !provider.supports(Capability::image_prompted)) {
    throw UnsupportedError("sample_pairs: provider must embed images with and without prompts");
  }
  if (k > image_pool.size()) {
    std::cerr << "warning: sample size " << k << " exceeds pool size " << image_pool.size()
              << "; clamping\n";
    k = image_pool.size();
  }

  std::vector<std::size_t> indices(image_pool.size());
  for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, indices.size() - 1);
    std::swap(indices[i], indices[pick(rng)]);
  }

  const std::size_t dim = provider.dim();
  SamplePairs pairs;
  pairs.A = Matrix(dim, k);
  pairs.B = Matrix(dim, k);
  pairs.prompt_id = prompt.prompt_id;
  pairs.seed = seed;
  pairs.image_ids.reserve(k);
  for (std::size_t c = 0; c < k; ++c) {
    const ItemId& id = image_pool[indices[c]];
    const EmbeddingVector a = provider.embed_image_general(id);
    const EmbeddingVector b = provider.embed_image_prompted(id, prompt);
    if (a.dim() != dim || b.dim() != dim) {
      throw DimMismatchError("sample_pairs: provider returned wrong dim for " + id);
    }
    for (std::size_t r = 0; r < dim; ++r) {
      pairs.A.at(r, c) = a[r];
      pairs.B.at(r, c) = b[r];
    }
    pairs.image_ids.push_back(id);
  }
  return pairs;
}

namespace detail {

inline void validate_pairs(const SamplePairs& pairs) {
  if (pairs.count() == 0 || pairs.dim() == 0) {
    throw InvalidArgumentError("fit: empty sample pairs");
  }
  if (pairs.B.rows() != pairs.A.rows() || pairs.B.cols() != pairs.A.cols()) {
    throw DimMismatchError("fit: A and B shapes differ");
  }
  for (std::size_t c = 0; c < pairs.count(); ++c) {
    double na = 0.0, nb = 0.0;
    for (std::size_t r = 0; r < pairs.dim(); ++r) {
      na += pairs.A.at(r, c) * pairs.A.at(r, c);
      nb += pairs.B.at(r, c) * pairs.B.at(r, c);
    }
    if (std::abs(std::sqrt(na) - 1.0) > kNormToleranceLoad) {
      throw NormError("fit: column " + std::to_string(c) + " of A is not unit norm");
    }
    if (std::abs(std::sqrt(nb) - 1.0) > kNormToleranceLoad) {
      throw NormError("fit: column " + std::to_string(c) + " of B is not unit norm");
    }
  }
}

// Cholesky solve of G X = C for symmetric positive definite G; overwrites
// nothing, returns X.
inline Matrix cholesky_solve(const Matrix& g, const Matrix& c) {
  const std::size_t n = g.rows();
  Matrix l(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double sum = g.at(i, j);
      for (std::size_t k = 0; k < j; ++k) sum -= l.at(i, k) * l.at(j, k);
      if (i == j) {
        if (sum <= 0.0) {
          throw InvalidArgumentError("cholesky: matrix not positive definite");
        }
        l.at(i, i) = std::sqrt(sum);
      } else {
        l.at(i, j) = sum / l.at(j, j);
      }
    }
  }
  Matrix x(n, c.cols());
  std::vector<double> y(n);
  for (std::size_t col = 0; col < c.cols(); ++col) {
    for (std::size_t i = 0; i < n; ++i) {
      double sum = c.at(i, col);
      for (std::size_t k = 0; k < i; ++k) sum -= l.at(i, k) * y[k];
      y[i] = sum / l.at(i, i);
    }
    for (std::size_t ii = n; ii-- > 0;) {
      double sum = y[ii];
      for (std::size_t k = ii + 1; k < n; ++k) sum -= l.at(k, ii) * x.at(k, col);
      x.at(ii, col) = sum / l.at(ii, ii);
    }
  }
  return x;
}

}  // namespace detail

// W = B A^T, summed over the K sampled pairs. No re-scaling and no
// orthogonalization; the map is applied on the query side and the result is
// normalized there, so a global scale cannot matter.
inline LinearMap fit_linear_map(const SamplePairs& pairs) {
  detail::validate_pairs(pairs);
  const std::size_t d = pairs.dim();
  LinearMap map;
  map.W = Matrix(d, d);
  map.sample_count = pairs.count();
  map.prompt_id = pairs.prompt_id;
  map.seed = pairs.seed;
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      double acc = 0.0;
      for (std::size_t c = 0; c < pairs.count(); ++c) {
        acc += pairs.B.at(i, c) * pairs.A.at(j, c);
      }
      map.W.at(i, j) = acc;
    }
  }
  return map;
}

// Ridge-regularized least-squares alternative, W = B A^T (A A^T + ridge I)^-1,
// kept behind a flag so the gap to the plain outer-product estimator stays
// measurable.
inline LinearMap fit_linear_map_lsq(const SamplePairs& pairs, double ridge = 1e-6) {
  detail::validate_pairs(pairs);
  const std::size_t d = pairs.dim();
  Matrix gram(d, d);  // A A^T + ridge I
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double acc = 0.0;
      for (std::size_t c = 0; c < pairs.count(); ++c) {
        acc += pairs.A.at(i, c) * pairs.A.at(j, c);
      }
      gram.at(i, j) = acc;
      gram.at(j, i) = acc;
    }
    gram.at(i, i) += ridge;
  }
  LinearMap outer = fit_linear_map(pairs);
  // Solve (A A^T + ridge I) X = (B A^T)^T, then W = X^T.
  Matrix ct(d, d);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) ct.at(i, j) = outer.W.at(j, i);
  }
  const Matrix x = detail::cholesky_solve(gram, ct);
  LinearMap map;
  map.W = Matrix(d, d);
  map.sample_count = pairs.count();
  map.prompt_id = pairs.prompt_id;
  map.seed = pairs.seed;
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) map.W.at(i, j) = x.at(j, i);
  }
  return map;
}

enum class FitMethod { outer_product, least_squares };

inline LinearMap fit(const SamplePairs& pairs, FitMethod method) {
  return method == FitMethod::outer_product ? fit_linear_map(pairs) : fit_linear_map_lsq(pairs);
}

// normalize(W^T q): scoring store rows a against the result reproduces the
// ranking of W a against q, since (W a) . q = a . (W^T q).
inline EmbeddingVector transform_query(const LinearMap& map, const EmbeddingVector& q) {
  const std::size_t d = map.W.rows();
  if (q.dim() != d) {
    throw DimMismatchError("transform_query: query dim mismatch");
  }
  std::vector<double> out(d, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    const double qi = q[i];
    const auto row = map.W.row(i);
    for (std::size_t j = 0; j < d; ++j) out[j] += row[j] * qi;
  }
  if (l2_norm(std::span<const double>(out)) < kZeroNormThreshold) {
    throw ZeroVectorError("transform_query: W^T q is numerically zero (degenerate fit)");
  }
  return normalize(std::span<const double>(out));
}

// --- K sweep ---

struct SweepCell {
  std::string facet;
  std::size_t k_sample;
  std::uint64_t seed;
  double recall_at_1;
  double recall_at_5;
};

struct SweepAggregate {
  std::string facet;
  std::size_t k_sample;
  double mean_recall_at_1;
  double stderr_recall_at_1;
  double mean_recall_at_5;
  double stderr_recall_at_5;
};

struct SweepTable {
  std::vector<SweepCell> cells;
  std::vector<SweepAggregate> aggregates;
};

namespace detail {

// Standard error: sample standard deviation divided by sqrt(number of runs).
inline std::pair<double, double> mean_stderr(std::span<const double> xs) {
  const double n = static_cast<double>(xs.size());
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= n;
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  return {mean, sd / std::sqrt(n)};
}

}  // namespace detail

// For each (facet, K, seed): fit a fresh map from that facet's candidate
// pool and evaluate the facet's cases with transformed queries against the
// general store. Aggregates mean and standard error over seeds.
inline SweepTable k_sweep(EmbedderProvider& provider, const BenchmarkSet& bench,
                          const PromptRegistry& registry, std::span<const std::size_t> ks,
                          std::span<const std::uint64_t> seeds,
                          FitMethod method = FitMethod::outer_product) {
  if (ks.empty()) {
    throw InvalidArgumentError("k_sweep: Ks must be non-empty");
  }
  for (std::size_t i = 0; i + 1 < ks.size(); ++i) {
    if (ks[i] >= ks[i + 1]) {
      throw InvalidArgumentError("k_sweep: Ks must be sorted ascending and distinct");
    }
  }
  if (seeds.empty()) {
    throw InvalidArgumentError("k_sweep: need at least one seed");
  }

  const auto pool = bench.candidate_union();
  EmbeddingStore general("general", provider.dim());
  for (const auto& id : pool) general.add(id, provider.embed_image_general(id));

  SweepTable table;
  for (std::size_t f = 0; f < bench.facets().size(); ++f) {
    const std::string& facet_name = bench.facets()[f].name;
    const PromptSpec& prompt = registry.by_facet(facet_name);
    const auto facet_pool = bench.candidate_union(facet_name);
    if (facet_pool.empty()) continue;

    std::vector<const TestCase*> cases;
    for (const auto& tc : bench.cases()) {
      if (tc.facet == facet_name) cases.push_back(&tc);
    }
    std::vector<EmbeddingVector> queries;
    queries.reserve(cases.size());
    for (const TestCase* tc : cases) {
      queries.push_back(provider.embed_query(QueryRef{tc->case_id, tc->query_text, tc->facet}));
    }

    for (std::size_t k : ks) {
      std::vector<double> r1s, r5s;
      for (std::uint64_t seed : seeds) {
        const std::uint64_t cell_seed = detail::mix_seed(seed, f);
        const auto pairs = sample_pairs(provider, facet_pool, prompt, k, cell_seed);
        const LinearMap map = fit(pairs, method);
        std::size_t hit1 = 0, hit5 = 0;
        for (std::size_t c = 0; c < cases.size(); ++c) {
          const EmbeddingVector tq = transform_query(map, queries[c]);
          const auto candidates = cases[c]->candidates();
          const RankResult rank = rank_of(general, candidates, tq, cases[c]->positive);
          if (rank.rank <= 1) ++hit1;
          if (rank.rank <= 5) ++hit5;
        }
        const double n = static_cast<double>(cases.size());
        table.cells.push_back(SweepCell{facet_name, k, seed,
                                        static_cast<double>(hit1) / n,
                                        static_cast<double>(hit5) / n});
        r1s.push_back(static_cast<double>(hit1) / n);
        r5s.push_back(static_cast<double>(hit5) / n);
      }
      const auto [m1, se1] = detail::mean_stderr(r1s);
      const auto [m5, se5] = detail::mean_stderr(r5s);
      table.aggregates.push_back(SweepAggregate{facet_name, k, m1, se1, m5, se5});
    }
  }
  return table;
}

inline void write_sweep_csv(const SweepTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw IoError("sweep csv: cannot open " + path.string());
  }
  out << "facet,k_sample,seed,recall_at_1,recall_at_5\n";
  for (const auto& cell : table.cells) {
    out << cell.facet << "," << cell.k_sample << "," << cell.seed << ","
        << detail::format_double(cell.recall_at_1) << ","
        << detail::format_double(cell.recall_at_5) << "\n";
  }
  for (const auto& agg : table.aggregates) {
    out << agg.facet << "," << agg.k_sample << ",mean,"
        << detail::format_double(agg.mean_recall_at_1) << ","
        << detail::format_double(agg.mean_recall_at_5) << "\n";
    out << agg.facet << "," << agg.k_sample << ",stderr,"
        << detail::format_double(agg.stderr_recall_at_1) << ","
        << detail::format_double(agg.stderr_recall_at_5) << "\n";
  }
  if (!out) {
    throw IoError("sweep csv: write failed for " + path.string());
  }
}

}  // namespace facet
