// pdl.hpp
//
// Progressive Dropout Layer: average-pooling-based attention (APBA) over the
// instances of a bag, non-linear interpolation of per-instance drop rates,
// attention-ranked rate assignment, whole-instance Bernoulli masking with
// inverted-dropout scaling, and the epoch scheduler that raises the global
// cap from 0 to P_max over training.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "milpdl/matrix.hpp"
#include "milpdl/rng.hpp"

namespace milpdl {

enum class InterpMethod { Log, Cos, Exp };

struct Interpolation {
  InterpMethod method = InterpMethod::Log;
  double g = 10.0;  // log/exp base
  double e = 0.5;   // log spacing exponent
  double b = 0.5;   // exp range parameter

  void validate() const {
    if (g <= 1.0) throw std::invalid_argument("Interpolation: G must be > 1");
    if (e <= 0.0) throw std::invalid_argument("Interpolation: E must be > 0");
    if (b <= 0.0) throw std::invalid_argument("Interpolation: B must be > 0");
  }
};

inline InterpMethod interp_method_from_name(const std::string& name) {
  if (name == "log") return InterpMethod::Log;
  if (name == "cos") return InterpMethod::Cos;
  if (name == "exp") return InterpMethod::Exp;
  throw std::invalid_argument("unknown interpolation method: " + name);
}

inline const char* interp_method_name(InterpMethod m) {
  switch (m) {
    case InterpMethod::Log: return "log";
    case InterpMethod::Cos: return "cos";
    case InterpMethod::Exp: return "exp";
  }
  return "?";
}

namespace detail {

// num evenly spaced samples over [lo, hi]; a single sample is defined as [lo],
// which is what makes one-instance bags never drop their only instance.
inline std::vector<double> linspace(double lo, double hi, std::size_t num) {
  if (num == 0) throw std::invalid_argument("linspace: num must be >= 1");
  std::vector<double> out(num);
  if (num == 1) {
    out[0] = lo;
    return out;
  }
  const double step = (hi - lo) / static_cast<double>(num - 1);
  for (std::size_t i = 0; i < num; ++i) out[i] = lo + step * static_cast<double>(i);
  out[num - 1] = hi;
  return out;
}

}  // namespace detail

// K drop rates rising from 0 to P.
//   LOG: P/E * log_G(linspace(0, G^E - 1, K) + 1)   (dense near P)
//   COS: P * 0.5 * (1 - cos(linspace(0, pi, K)))    (dense at both ends)
//   EXP: P/B * (G^linspace(0, log_G(B + 1), K) - 1) (dense near 0)
// Endpoints are snapped to exactly 0 and P so that the argmax-attention
// instance receives exactly the global rate.
inline std::vector<double> interpolate_rates(const Interpolation& interp, double p,
                                             std::size_t k) {
  interp.validate();
  if (!(p >= 0.0 && p < 1.0))
    throw std::invalid_argument("interpolate_rates: P must lie in [0, 1)");
  if (k == 0) throw std::invalid_argument("interpolate_rates: K must be >= 1");

  std::vector<double> rates(k);
  switch (interp.method) {
    case InterpMethod::Log: {
      const double span = std::pow(interp.g, interp.e) - 1.0;
      const auto xs = detail::linspace(0.0, span, k);
      const double log_g = std::log(interp.g);
      for (std::size_t i = 0; i < k; ++i)
        rates[i] = p / interp.e * (std::log(xs[i] + 1.0) / log_g);
      break;
    }
    case InterpMethod::Cos: {
      const auto xs = detail::linspace(0.0, 3.14159265358979323846, k);
      for (std::size_t i = 0; i < k; ++i)
        rates[i] = p * 0.5 * (1.0 - std::cos(xs[i]));
      break;
    }
    case InterpMethod::Exp: {
      const double hi = std::log(interp.b + 1.0) / std::log(interp.g);
      const auto xs = detail::linspace(0.0, hi, k);
      for (std::size_t i = 0; i < k; ++i)
        rates[i] = p / interp.b * (std::pow(interp.g, xs[i]) - 1.0);
      break;
    }
  }
  rates[0] = 0.0;
  if (k >= 2) rates[k - 1] = p;
  return rates;
}

// Attention over instances: softmax of the per-instance mean across the
// embedding dimension. Parameter-free, recomputed at every PDL layer.
inline std::vector<double> apba(const Matrix& embeddings) {
  if (embeddings.rows() == 0 || embeddings.cols() == 0)
    throw std::invalid_argument("apba: empty embedding matrix");
  std::vector<double> pooled(embeddings.rows());
  for (std::size_t kk = 0; kk < embeddings.rows(); ++kk) {
    const double* row = embeddings.row_ptr(kk);
    double s = 0.0;
    for (std::size_t c = 0; c < embeddings.cols(); ++c) s += row[c];
    pooled[kk] = s / static_cast<double>(embeddings.cols());
  }
  return stable_softmax(pooled);
}

// Pairs attention ranks with rates: the instance ranked r-th by descending
// attention receives the r-th largest rate, so the argmax instance gets
// exactly max(rates). Ties broken by ascending original index.
inline std::vector<double> assign_rates(const std::vector<double>& attention,
                                        const std::vector<double>& rates) {
  if (attention.size() != rates.size())
    throw std::invalid_argument("assign_rates: attention/rates length mismatch");
  const std::size_t k = attention.size();
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return attention[a] > attention[b];
  });
  std::vector<double> sorted_rates = rates;
  std::sort(sorted_rates.begin(), sorted_rates.end(), std::greater<double>());
  std::vector<double> assigned(k);
  for (std::size_t r = 0; r < k; ++r) assigned[order[r]] = sorted_rates[r];
  return assigned;
}

// Per-instance mask and inverted-dropout scale for one PDL application.
// scale[k] is 1/(1 - p'_k) when the instance is kept and 0 when dropped.
struct PdlLayerState {
  std::vector<double> attention;
  std::vector<double> assigned_rates;
  std::vector<std::uint8_t> mask;
  std::vector<double> scale;

  bool empty() const { return mask.empty(); }

  // Combined per-row multiplier: mask * scale.
  std::vector<double> row_multiplier() const {
    std::vector<double> m(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) m[i] = mask[i] ? scale[i] : 0.0;
    return m;
  }
};

inline void sample_mask(const std::vector<double>& p_prime, Rng& rng,
                        PdlLayerState& state) {
  state.mask.resize(p_prime.size());
  state.scale.resize(p_prime.size());
  for (std::size_t i = 0; i < p_prime.size(); ++i) {
    if (!(p_prime[i] >= 0.0 && p_prime[i] < 1.0))
      throw std::invalid_argument("sample_mask: drop rate must lie in [0, 1)");
    const bool keep = rng.uniform01() >= p_prime[i];
    state.mask[i] = keep ? 1 : 0;
    state.scale[i] = keep ? 1.0 / (1.0 - p_prime[i]) : 0.0;
  }
}

// Epoch-indexed global drop rate cap. T epochs map onto the T-element
// interpolated vector, anchoring P(0) = 0 and P(T-1) = P_max.
struct ScheduleState {
  std::size_t t = 0;
  std::size_t horizon = 2;
  double p_max = 0.45;
  Interpolation interp{};

  void validate() const {
    interp.validate();
    if (horizon < 2) throw std::invalid_argument("ScheduleState: T must be >= 2");
    if (t >= horizon) throw std::invalid_argument("ScheduleState: t out of range");
    if (!(p_max >= 0.0 && p_max < 1.0))
      throw std::invalid_argument("ScheduleState: P_max must lie in [0, 1)");
  }
};

inline double scheduler_value(const ScheduleState& state) {
  state.validate();
  return interpolate_rates(state.interp, state.p_max, state.horizon)[state.t];
}

// APBA -> rate vector at the given cap -> ranked assignment -> sampled mask.
inline PdlLayerState pdl_layer_state(const Matrix& embeddings, double global_rate,
                                     const Interpolation& interp, Rng& rng) {
  PdlLayerState layer;
  layer.attention = apba(embeddings);
  const auto rates = interpolate_rates(interp, global_rate, embeddings.rows());
  layer.assigned_rates = assign_rates(layer.attention, rates);
  sample_mask(layer.assigned_rates, rng, layer);
  return layer;
}

// One PDL application: APBA -> rate vector at the scheduled cap -> ranked
// assignment -> instance mask -> row-wise multiply-and-scale. Eval mode is
// the identity with an empty state.
inline std::pair<Matrix, PdlLayerState> pdl_forward(const Matrix& embeddings,
                                                    const ScheduleState& state,
                                                    Rng& rng, bool train) {
  if (!train) return {embeddings, PdlLayerState{}};
  PdlLayerState layer =
      pdl_layer_state(embeddings, scheduler_value(state), state.interp, rng);
  Matrix out = embeddings;
  for (std::size_t kk = 0; kk < out.rows(); ++kk) {
    const double m = layer.mask[kk] ? layer.scale[kk] : 0.0;
    double* row = out.row_ptr(kk);
    for (std::size_t c = 0; c < out.cols(); ++c) row[c] *= m;
  }
  return {std::move(out), std::move(layer)};
}

}  // namespace milpdl
