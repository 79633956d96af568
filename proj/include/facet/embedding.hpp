#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "facet/errors.hpp"

namespace facet {

// Opaque image or query identifier. Dataset-provided numeric ids and
// synthetic ids share this representation.
using ItemId = std::string;

inline void validate_item_id(const ItemId& id) {
  if (id.empty()) {
    throw InvariantViolationError("item id must be non-empty");
  }
  if (id.find('\n') != std::string::npos) {
    throw InvariantViolationError("item id must not contain a newline: " + id);
  }
}

// Norm tolerance for freshly constructed vectors.
inline constexpr double kNormTolerance = 1e-5;
// Looser tolerance applied when re-validating rows read back from disk,
// absorbing 32-bit serialization.
inline constexpr double kNormToleranceLoad = 1e-4;
// Below this a vector is treated as degenerate (zero).
inline constexpr double kZeroNormThreshold = 1e-12;

// 64-bit accumulation for all norm and dot-product computations; values
// themselves are stored as 32-bit floats.
inline double l2_norm(std::span<const float> v) {
  double acc = 0.0;
  for (float x : v) acc += static_cast<double>(x) * static_cast<double>(x);
  return std::sqrt(acc);
}

inline double l2_norm(std::span<const double> v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc);
}

// Unit-norm dense vector. Houses general image embeddings, promptable image
// embeddings, and query embeddings alike.
class EmbeddingVector {
 public:
  EmbeddingVector() = default;
  explicit EmbeddingVector(std::vector<float> values) : values_(std::move(values)) {}

  std::size_t dim() const { return values_.size(); }
  const std::vector<float>& values() const { return values_; }
  float operator[](std::size_t i) const { return values_[i]; }
  std::span<const float> span() const { return values_; }

  bool operator==(const EmbeddingVector&) const = default;

 private:
  std::vector<float> values_;
};

inline double dot(std::span<const float> a, std::span<const float> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  }
  return acc;
}

inline double dot(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim()) {
    throw DimMismatchError("dot: dims " + std::to_string(a.dim()) + " vs " +
                           std::to_string(b.dim()));
  }
  return dot(a.span(), b.span());
}

// v / ||v||. A zero vector signals a degenerate embedding and is an error;
// callers must not silently substitute.
inline EmbeddingVector normalize(std::span<const double> raw) {
  if (raw.empty()) {
    throw InvalidArgumentError("normalize: empty vector");
  }
  const double norm = l2_norm(raw);
  if (norm < kZeroNormThreshold) {
    throw ZeroVectorError("normalize: vector norm below 1e-12");
  }
  std::vector<float> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    out[i] = static_cast<float>(raw[i] / norm);
  }
  return EmbeddingVector(std::move(out));
}

inline EmbeddingVector normalize(std::span<const float> raw) {
  std::vector<double> tmp(raw.begin(), raw.end());
  return normalize(std::span<const double>(tmp));
}

inline EmbeddingVector normalize(const EmbeddingVector& v) { return normalize(v.span()); }

inline void check_unit_norm(std::span<const float> v, double tolerance,
                            const std::string& context) {
  const double norm = l2_norm(v);
  if (std::abs(norm - 1.0) > tolerance) {
    throw NormError(context + ": norm " + std::to_string(norm) + " is not unit");
  }
}

}  // namespace facet
