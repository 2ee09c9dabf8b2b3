// baselines.hpp
//
// Comparison dropout methods: vanilla elementwise dropout, SpatialDropout
// (whole feature columns), DropInstance (bag-level instance removal before
// the network), and a MIL adaptation of AttentionDropout (hard threshold on
// max-normalized APBA weights). The multiplier variants feed the model's
// dropout hooks; the matrix variants are the methods themselves.

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "milpdl/data.hpp"
#include "milpdl/matrix.hpp"
#include "milpdl/pdl.hpp"
#include "milpdl/rng.hpp"

namespace milpdl {

enum class BaselineKind { Vanilla, Spatial, DropInstance, AttentionDrop };

inline void check_drop_rate(double p, const char* who) {
  if (!(p >= 0.0 && p < 1.0))
    throw std::invalid_argument(std::string(who) + ": rate must lie in [0, 1)");
}

// Each entry independently zeroed with probability p, survivors scaled by
// 1/(1-p).
inline Matrix vanilla_dropout_multiplier(std::size_t rows, std::size_t cols,
                                         double p, Rng& rng) {
  check_drop_rate(p, "vanilla_dropout");
  const double scale = 1.0 / (1.0 - p);
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.uniform01() < p ? 0.0 : scale;
  return m;
}

inline Matrix vanilla_dropout(const Matrix& features, double p, Rng& rng) {
  return hadamard(features,
                  vanilla_dropout_multiplier(features.rows(), features.cols(), p, rng));
}

// Whole feature columns zeroed with probability p, kept columns scaled.
inline Matrix spatial_dropout_multiplier(std::size_t rows, std::size_t cols,
                                         double p, Rng& rng) {
  check_drop_rate(p, "spatial_dropout");
  const double scale = 1.0 / (1.0 - p);
  std::vector<double> col_mult(cols);
  for (double& v : col_mult) v = rng.uniform01() < p ? 0.0 : scale;
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = m.row_ptr(r);
    for (std::size_t c = 0; c < cols; ++c) row[c] = col_mult[c];
  }
  return m;
}

inline Matrix spatial_dropout(const Matrix& features, double p, Rng& rng) {
  return hadamard(features,
                  spatial_dropout_multiplier(features.rows(), features.cols(), p, rng));
}

// Removes round(fraction * K) uniformly chosen instances before the network;
// no rescaling. Never removes every instance: in that case one uniformly
// chosen instance survives.
inline Bag drop_instance(const Bag& bag, double fraction, Rng& rng) {
  check_drop_rate(fraction, "drop_instance");
  const std::size_t k = bag.size();
  if (k == 0) throw std::invalid_argument("drop_instance: empty bag");
  std::size_t n_drop = static_cast<std::size_t>(
      std::lround(fraction * static_cast<double>(k)));
  if (n_drop >= k) n_drop = k - 1;
  if (n_drop == 0) return bag;

  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  std::vector<std::size_t> keep(order.begin() + n_drop, order.end());
  std::sort(keep.begin(), keep.end());

  Bag out;
  out.id = bag.id;
  out.label = bag.label;
  out.instances = Matrix(keep.size(), bag.instances.cols());
  if (!bag.instance_labels.empty()) out.instance_labels.resize(keep.size());
  for (std::size_t i = 0; i < keep.size(); ++i) {
    const double* src = bag.instances.row_ptr(keep[i]);
    std::copy(src, src + bag.instances.cols(), out.instances.row_ptr(i));
    if (!bag.instance_labels.empty())
      out.instance_labels[i] = bag.instance_labels[keep[i]];
  }
  return out;
}

// APBA weights normalized by their max; instances whose normalized weight
// exceeds the threshold are zeroed outright (no rescaling). If the rule
// would drop every instance, none are dropped.
inline std::vector<std::uint8_t> attention_dropout_keep(const Matrix& embeddings,
                                                        double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0))
    throw std::invalid_argument("attention_dropout: threshold must lie in (0, 1)");
  const auto weights = apba(embeddings);
  const double wmax = *std::max_element(weights.begin(), weights.end());
  std::vector<std::uint8_t> keep(weights.size(), 1);
  std::size_t kept = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    keep[i] = (weights[i] / wmax) > threshold ? 0 : 1;
    kept += keep[i];
  }
  if (kept == 0) std::fill(keep.begin(), keep.end(), 1);
  return keep;
}

inline Matrix attention_dropout_multiplier(const Matrix& embeddings,
                                           double threshold) {
  const auto keep = attention_dropout_keep(embeddings, threshold);
  Matrix m(embeddings.rows(), embeddings.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double* row = m.row_ptr(r);
    const double v = keep[r] ? 1.0 : 0.0;
    for (std::size_t c = 0; c < m.cols(); ++c) row[c] = v;
  }
  return m;
}

inline Matrix attention_dropout(const Matrix& embeddings, double threshold,
                                Rng& /*rng*/) {
  return hadamard(embeddings, attention_dropout_multiplier(embeddings, threshold));
}

}  // namespace milpdl
