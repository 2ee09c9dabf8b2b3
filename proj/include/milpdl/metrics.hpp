// metrics.hpp
//
// Classification metrics. AUC is the Mann-Whitney rank statistic with
// tie-averaged ranks, computed over integer doubled ranks so the result is
// bit-identical to the O(n^2) pairwise count.

#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <vector>

namespace milpdl {

// AUC of scores against binary labels; nullopt when only one class present.
inline std::optional<double> auc_rank(const std::vector<double>& scores,
                                      const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw std::invalid_argument("auc_rank: scores/labels length mismatch");
  const std::size_t n = scores.size();
  std::int64_t n_pos = 0;
  for (int y : labels) {
    if (y != 0 && y != 1)
      throw std::invalid_argument("auc_rank: labels must be 0 or 1");
    n_pos += y;
  }
  const std::int64_t n_neg = static_cast<std::int64_t>(n) - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Doubled average rank of a tie group spanning sorted positions [i, j) is
  // (i+1) + j, an integer; summing doubled ranks keeps everything exact.
  std::int64_t rank2_pos_sum = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const std::int64_t rank2 = static_cast<std::int64_t>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t)
      if (labels[order[t]] == 1) rank2_pos_sum += rank2;
    i = j;
  }
  const std::int64_t numer2 = rank2_pos_sum - n_pos * (n_pos + 1);
  return static_cast<double>(numer2) / static_cast<double>(2 * n_pos * n_neg);
}

// Fraction of correct predictions at probability threshold 0.5 (>= predicts 1).
inline double accuracy_at_half(const std::vector<double>& probs,
                               const std::vector<int>& labels) {
  if (probs.size() != labels.size() || probs.empty())
    throw std::invalid_argument("accuracy_at_half: bad inputs");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < probs.size(); ++i)
    if ((probs[i] >= 0.5 ? 1 : 0) == labels[i]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(probs.size());
}

struct Metrics {
  double accuracy = 0.0;
  std::optional<double> auc;
  std::size_t count = 0;
};

}  // namespace milpdl
