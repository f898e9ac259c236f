#pragma once
// Dispersion of k sample embeddings around their centroid, used as the
// uncertainty surrogate for each SumAsk stage:
//
//   u = 1/(k-1) * sum_i d(z_i, mean(z))

#include <cmath>
#include <span>
#include <string_view>
#include <vector>

#include "sumask/errors.hpp"

namespace sumask {

enum class Distance { euclidean, cosine };

inline std::string_view to_string(Distance d) { return d == Distance::euclidean ? "euclidean" : "cosine"; }

inline Distance distance_from_string(std::string_view s) {
  if (s == "euclidean") return Distance::euclidean;
  if (s == "cosine") return Distance::cosine;
  throw ValidationError("distance", "unknown distance '" + std::string(s) + "'");
}

// Cosine distance is 1 - cos(a, b). When a norm is zero the angle is
// undefined: two zero vectors are at distance 0, a zero and a non-zero
// vector at distance 1.
inline double vector_distance(std::span<const double> a, std::span<const double> b, Distance kind) {
  if (a.size() != b.size()) throw DimensionError("distance between vectors of different dimension");
  if (kind == Distance::euclidean) {
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double diff = a[i] - b[i];
      sum += diff * diff;
    }
    return std::sqrt(sum);
  }
  double na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return (na == 0.0 && nb == 0.0) ? 0.0 : 1.0;
  // 1 - cos equals half the squared distance between the unit vectors; this
  // form keeps full relative precision for nearly parallel vectors.
  const double la = std::sqrt(na), lb = std::sqrt(nb);
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] / la - b[i] / lb;
    sum += diff * diff;
  }
  return 0.5 * sum;
}

inline std::vector<double> centroid(const std::vector<std::vector<double>>& vectors) {
  if (vectors.empty()) throw DimensionError("centroid of no vectors");
  const auto dim = vectors.front().size();
  std::vector<double> m(dim, 0.0);
  for (const auto& v : vectors) {
    if (v.size() != dim) throw DimensionError("ragged vectors");
    for (std::size_t i = 0; i < dim; ++i) m[i] += v[i];
  }
  for (auto& x : m) x /= static_cast<double>(vectors.size());
  return m;
}

inline double dispersion(const std::vector<std::vector<double>>& vectors, Distance kind) {
  if (vectors.size() < 2) throw ValidationError("k", "dispersion needs at least two samples");
  // Summing k equal vectors can round, so identical samples short-circuit to
  // an exact zero.
  bool identical = true;
  for (std::size_t i = 1; i < vectors.size() && identical; ++i) identical = vectors[i] == vectors.front();
  if (identical) {
    if (vectors.front().empty()) throw DimensionError("zero-dimensional vectors");
    return 0.0;
  }
  const auto m = centroid(vectors);
  double total = 0.0;
  for (const auto& v : vectors) total += vector_distance(v, m, kind);
  return total / static_cast<double>(vectors.size() - 1);
}

}  // namespace sumask
