// model.hpp
//
// The MIL network: an instance-level projector (fully connected stack with
// ReLU activations and optional dropout hooks after each activation), an
// attention-based aggregator (plain or gated), and a sigmoid bag classifier.
// Forward retains a full trace; backward produces exact BCE gradients for
// every parameter with dropout multipliers treated as constants.

#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "milpdl/matrix.hpp"
#include "milpdl/rng.hpp"

namespace milpdl {

struct ProjectorLayer {
  Matrix weight;             // out x in
  std::vector<double> bias;  // out
};

struct ProjectorParams {
  std::vector<ProjectorLayer> layers;

  std::size_t output_dim(std::size_t input_dim) const {
    return layers.empty() ? input_dim : layers.back().weight.rows();
  }
};

struct AggregatorParams {
  Matrix w1;                         // D x 1
  Matrix w2;                         // D x L
  Matrix u2;                         // D x L, empty unless gated
  std::vector<double> classifier_w;  // L
  double classifier_b = 0.0;

  bool gated() const { return u2.size() > 0; }
};

struct ModelParams {
  ProjectorParams projector;
  AggregatorParams aggregator;
};

// Gradients share the parameter layout.
using ModelGrads = ModelParams;

struct ModelConfig {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_dims{256, 128, 64};
  std::size_t attention_dim = 128;
  bool gated = false;
};

// Weights ~ N(0, 2/fan_in), biases zero.
inline ModelParams init_params(const ModelConfig& cfg, Rng& rng) {
  if (cfg.input_dim == 0) throw std::invalid_argument("init_params: input_dim is 0");
  ModelParams p;
  std::size_t in = cfg.input_dim;
  for (std::size_t out : cfg.hidden_dims) {
    ProjectorLayer layer;
    layer.weight = Matrix(out, in);
    const double std_w = std::sqrt(2.0 / static_cast<double>(in));
    for (double& w : layer.weight.data()) w = rng.gaussian(0.0, std_w);
    layer.bias.assign(out, 0.0);
    p.projector.layers.push_back(std::move(layer));
    in = out;
  }
  const std::size_t l = in;
  const std::size_t d = cfg.attention_dim;
  if (d == 0) throw std::invalid_argument("init_params: attention_dim is 0");
  p.aggregator.w1 = Matrix(d, 1);
  for (double& w : p.aggregator.w1.data()) w = rng.gaussian(0.0, std::sqrt(2.0 / d));
  p.aggregator.w2 = Matrix(d, l);
  for (double& w : p.aggregator.w2.data()) w = rng.gaussian(0.0, std::sqrt(2.0 / l));
  if (cfg.gated) {
    p.aggregator.u2 = Matrix(d, l);
    for (double& w : p.aggregator.u2.data()) w = rng.gaussian(0.0, std::sqrt(2.0 / l));
  }
  p.aggregator.classifier_w.resize(l);
  for (double& w : p.aggregator.classifier_w) w = rng.gaussian(0.0, std::sqrt(2.0 / l));
  p.aggregator.classifier_b = 0.0;
  return p;
}

// A hook maps a post-activation K x C matrix to an elementwise multiplier of
// the same shape (mask times scale). An empty matrix means identity.
using DropoutHook = std::function<Matrix(const Matrix&, Rng&)>;

struct ForwardTrace {
  Matrix input;
  std::vector<Matrix> pre;          // per layer, before ReLU
  std::vector<Matrix> post;         // per layer, after ReLU
  std::vector<Matrix> multiplier;   // per layer hook multiplier; empty = identity
  std::vector<Matrix> hooked;       // per layer, after the hook
  Matrix tanh_act;                  // K x D
  Matrix gate_act;                  // K x D, gated only
  std::vector<double> scores;       // K
  std::vector<double> alpha;        // K, sums to 1
  std::vector<double> bag_embedding;  // L
  double logit = 0.0;
  double prob = 0.5;
};

namespace detail {

inline Matrix apply_multiplier(const Matrix& m, const Matrix& mult) {
  if (mult.size() == 0) return m;
  return hadamard(m, mult);
}

// multiplier_for(layer_index, post_activation) -> Matrix (empty = identity)
template <typename MultiplierFn>
std::vector<Matrix> project_core(const Matrix& instances,
                                 const ProjectorParams& projector,
                                 MultiplierFn&& multiplier_for,
                                 ForwardTrace* trace) {
  if (instances.rows() == 0)
    throw std::invalid_argument("project: bag has no instances");
  std::vector<Matrix> outputs;
  Matrix h = instances;
  for (std::size_t i = 0; i < projector.layers.size(); ++i) {
    const auto& layer = projector.layers[i];
    if (layer.weight.cols() != h.cols())
      throw std::invalid_argument("project: layer input dimension mismatch");
    if (layer.bias.size() != layer.weight.rows())
      throw std::invalid_argument("project: bias length mismatch");
    Matrix pre = matmul_nt(h, layer.weight);
    for (std::size_t r = 0; r < pre.rows(); ++r) {
      double* row = pre.row_ptr(r);
      for (std::size_t c = 0; c < pre.cols(); ++c) row[c] += layer.bias[c];
    }
    Matrix post = pre;
    for (double& v : post.data()) v = v > 0.0 ? v : 0.0;
    Matrix mult = multiplier_for(i, post);
    if (mult.size() != 0 && !mult.same_shape(post))
      throw std::invalid_argument("project: hook multiplier shape mismatch");
    Matrix hooked = apply_multiplier(post, mult);
    if (trace) {
      trace->pre.push_back(pre);
      trace->post.push_back(post);
      trace->multiplier.push_back(mult);
      trace->hooked.push_back(hooked);
    }
    h = hooked;
    outputs.push_back(std::move(hooked));
  }
  return outputs;
}

}  // namespace detail

// Per-layer embeddings (post-activation, post-hook in train mode). Eval mode
// bypasses every hook.
inline std::vector<Matrix> project(const Matrix& instances,
                                   const ProjectorParams& projector,
                                   const std::vector<DropoutHook>& hooks,
                                   bool train, Rng& rng) {
  if (hooks.size() > projector.layers.size())
    throw std::invalid_argument("project: more hooks than layers");
  return detail::project_core(
      instances, projector,
      [&](std::size_t i, const Matrix& post) -> Matrix {
        if (!train || i >= hooks.size() || !hooks[i]) return Matrix();
        return hooks[i](post, rng);
      },
      nullptr);
}

// alpha_k = softmax_k(w1^T tanh(w2 v_k^T)); bag embedding = sum alpha_k v_k.
// Fills tanh/gate activations and scores into the trace when given.
inline std::pair<std::vector<double>, std::vector<double>> attention_pool_traced(
    const Matrix& embeddings, const AggregatorParams& agg, ForwardTrace* trace) {
  const std::size_t k = embeddings.rows();
  if (k == 0) throw std::invalid_argument("attention_pool: empty bag");
  if (agg.w2.cols() != embeddings.cols())
    throw std::invalid_argument("attention_pool: w2/embedding dimension mismatch");
  if (agg.w1.rows() != agg.w2.rows() || agg.w1.cols() != 1)
    throw std::invalid_argument("attention_pool: w1 must be D x 1");

  Matrix t = matmul_nt(embeddings, agg.w2);  // K x D
  for (double& v : t.data()) v = std::tanh(v);
  Matrix gate;
  const Matrix* score_in = &t;
  Matrix gated_act;
  if (agg.gated()) {
    if (!agg.u2.same_shape(agg.w2))
      throw std::invalid_argument("attention_pool: u2/w2 shape mismatch");
    gate = matmul_nt(embeddings, agg.u2);
    for (double& v : gate.data()) v = sigmoid(v);
    gated_act = hadamard(t, gate);
    score_in = &gated_act;
  }
  std::vector<double> scores(k);
  for (std::size_t r = 0; r < k; ++r) {
    const double* row = score_in->row_ptr(r);
    double s = 0.0;
    for (std::size_t dd = 0; dd < agg.w1.rows(); ++dd) s += row[dd] * agg.w1(dd, 0);
    scores[r] = s;
  }
  std::vector<double> alpha = stable_softmax(scores);
  std::vector<double> z(embeddings.cols(), 0.0);
  for (std::size_t r = 0; r < k; ++r) {
    const double* row = embeddings.row_ptr(r);
    for (std::size_t c = 0; c < embeddings.cols(); ++c) z[c] += alpha[r] * row[c];
  }
  if (trace) {
    trace->tanh_act = std::move(t);
    trace->gate_act = std::move(gate);
    trace->scores = scores;
  }
  return {std::move(z), std::move(alpha)};
}

inline std::pair<std::vector<double>, std::vector<double>> attention_pool(
    const Matrix& embeddings, const AggregatorParams& agg) {
  if (agg.gated())
    throw std::invalid_argument("attention_pool: params carry a gate, use gated_attention_pool");
  return attention_pool_traced(embeddings, agg, nullptr);
}

inline std::pair<std::vector<double>, std::vector<double>> gated_attention_pool(
    const Matrix& embeddings, const AggregatorParams& agg) {
  if (!agg.gated())
    throw std::invalid_argument("gated_attention_pool: params carry no gate");
  return attention_pool_traced(embeddings, agg, nullptr);
}

// BCE of a sigmoid output, computed from the logit for stability.
inline double bce_loss(double logit, int label) {
  const double y = static_cast<double>(label);
  return std::max(logit, 0.0) - logit * y + std::log1p(std::exp(-std::abs(logit)));
}

namespace detail {

template <typename MultiplierFn>
ForwardTrace forward_core(const Matrix& instances, const ModelParams& params,
                          MultiplierFn&& multiplier_for) {
  ForwardTrace trace;
  trace.input = instances;
  detail::project_core(instances, params.projector,
                       std::forward<MultiplierFn>(multiplier_for), &trace);
  const Matrix& v = trace.hooked.empty() ? trace.input : trace.hooked.back();
  auto [z, alpha] = attention_pool_traced(v, params.aggregator, &trace);
  if (params.aggregator.classifier_w.size() != z.size())
    throw std::invalid_argument("forward: classifier dimension mismatch");
  trace.bag_embedding = std::move(z);
  trace.alpha = std::move(alpha);
  trace.logit = dot(params.aggregator.classifier_w, trace.bag_embedding) +
                params.aggregator.classifier_b;
  trace.prob = sigmoid(trace.logit);
  return trace;
}

}  // namespace detail

inline ForwardTrace forward(const Matrix& instances, const ModelParams& params,
                            const std::vector<DropoutHook>& hooks, bool train,
                            Rng& rng) {
  if (hooks.size() > params.projector.layers.size())
    throw std::invalid_argument("forward: more hooks than layers");
  return detail::forward_core(
      instances, params, [&](std::size_t i, const Matrix& post) -> Matrix {
        if (!train || i >= hooks.size() || !hooks[i]) return Matrix();
        return hooks[i](post, rng);
      });
}

// Re-runs the forward pass with the multipliers frozen from a previous trace.
// This is what makes finite-difference checks of the masked network possible.
inline ForwardTrace forward_with_multipliers(const Matrix& instances,
                                             const ModelParams& params,
                                             const std::vector<Matrix>& multipliers) {
  if (multipliers.size() != params.projector.layers.size())
    throw std::invalid_argument("forward_with_multipliers: multiplier count mismatch");
  return detail::forward_core(instances, params,
                              [&](std::size_t i, const Matrix&) -> Matrix {
                                return multipliers[i];
                              });
}

inline ModelGrads zero_grads_like(const ModelParams& p) {
  ModelGrads g;
  for (const auto& layer : p.projector.layers) {
    ProjectorLayer gl;
    gl.weight = Matrix(layer.weight.rows(), layer.weight.cols());
    gl.bias.assign(layer.bias.size(), 0.0);
    g.projector.layers.push_back(std::move(gl));
  }
  g.aggregator.w1 = Matrix(p.aggregator.w1.rows(), 1);
  g.aggregator.w2 = Matrix(p.aggregator.w2.rows(), p.aggregator.w2.cols());
  if (p.aggregator.gated())
    g.aggregator.u2 = Matrix(p.aggregator.u2.rows(), p.aggregator.u2.cols());
  g.aggregator.classifier_w.assign(p.aggregator.classifier_w.size(), 0.0);
  g.aggregator.classifier_b = 0.0;
  return g;
}

// Exact BCE gradients for every parameter. Dropout multipliers recorded in
// the trace are constants.
inline ModelGrads backward(const ModelParams& params, const ForwardTrace& trace,
                           int label) {
  const std::size_t n_layers = params.projector.layers.size();
  if (trace.pre.size() != n_layers || trace.alpha.empty())
    throw std::invalid_argument("backward: trace is missing intermediates");

  ModelGrads grads = zero_grads_like(params);
  const Matrix& v = trace.hooked.empty() ? trace.input : trace.hooked.back();
  const std::size_t k = v.rows();
  const std::size_t l = v.cols();
  const std::size_t d = params.aggregator.w1.rows();

  const double dlogit = trace.prob - static_cast<double>(label);
  for (std::size_t c = 0; c < l; ++c)
    grads.aggregator.classifier_w[c] = dlogit * trace.bag_embedding[c];
  grads.aggregator.classifier_b = dlogit;

  std::vector<double> dz(l);
  for (std::size_t c = 0; c < l; ++c)
    dz[c] = dlogit * params.aggregator.classifier_w[c];

  // Through z = sum_k alpha_k v_k.
  std::vector<double> dalpha(k);
  Matrix dv(k, l, 0.0);
  for (std::size_t r = 0; r < k; ++r) {
    const double* vrow = v.row_ptr(r);
    double s = 0.0;
    double* dvrow = dv.row_ptr(r);
    for (std::size_t c = 0; c < l; ++c) {
      s += dz[c] * vrow[c];
      dvrow[c] += trace.alpha[r] * dz[c];
    }
    dalpha[r] = s;
  }

  // Softmax jacobian: ds_k = alpha_k (dalpha_k - sum_j alpha_j dalpha_j).
  double weighted = 0.0;
  for (std::size_t r = 0; r < k; ++r) weighted += trace.alpha[r] * dalpha[r];
  std::vector<double> ds(k);
  for (std::size_t r = 0; r < k; ++r)
    ds[r] = trace.alpha[r] * (dalpha[r] - weighted);

  const bool gated = params.aggregator.gated();
  // score input rows: tanh activations, times the gate when present
  Matrix dt(k, d, 0.0);
  Matrix du2_pre;  // gradient at u2 v^T, gated only
  if (gated) du2_pre = Matrix(k, d, 0.0);
  for (std::size_t r = 0; r < k; ++r) {
    const double* trow = trace.tanh_act.row_ptr(r);
    const double* grow = gated ? trace.gate_act.row_ptr(r) : nullptr;
    double* dtrow = dt.row_ptr(r);
    for (std::size_t dd = 0; dd < d; ++dd) {
      const double score_in = gated ? trow[dd] * grow[dd] : trow[dd];
      grads.aggregator.w1(dd, 0) += ds[r] * score_in;
      const double dh = ds[r] * params.aggregator.w1(dd, 0);
      if (gated) {
        dtrow[dd] = dh * grow[dd];
        du2_pre(r, dd) = dh * trow[dd] * grow[dd] * (1.0 - grow[dd]);
      } else {
        dtrow[dd] = dh;
      }
    }
  }
  // Through tanh.
  for (std::size_t r = 0; r < k; ++r) {
    const double* trow = trace.tanh_act.row_ptr(r);
    double* dtrow = dt.row_ptr(r);
    for (std::size_t dd = 0; dd < d; ++dd) dtrow[dd] *= 1.0 - trow[dd] * trow[dd];
  }
  grads.aggregator.w2 = matmul_tn(dt, v);
  {
    Matrix dv_att = matmul(dt, params.aggregator.w2);  // K x L
    for (std::size_t i = 0; i < dv.size(); ++i) dv.data()[i] += dv_att.data()[i];
  }
  if (gated) {
    grads.aggregator.u2 = matmul_tn(du2_pre, v);
    Matrix dv_gate = matmul(du2_pre, params.aggregator.u2);
    for (std::size_t i = 0; i < dv.size(); ++i) dv.data()[i] += dv_gate.data()[i];
  }

  // Back through the projector stack.
  Matrix dh = std::move(dv);
  for (std::size_t li = n_layers; li-- > 0;) {
    const auto& layer = params.projector.layers[li];
    const Matrix& mult = trace.multiplier[li];
    Matrix dpost = mult.size() == 0 ? dh : hadamard(dh, mult);
    const Matrix& pre = trace.pre[li];
    for (std::size_t i = 0; i < dpost.size(); ++i)
      if (pre.data()[i] <= 0.0) dpost.data()[i] = 0.0;
    const Matrix& below = li == 0 ? trace.input : trace.hooked[li - 1];
    grads.projector.layers[li].weight = matmul_tn(dpost, below);
    auto& db = grads.projector.layers[li].bias;
    for (std::size_t r = 0; r < dpost.rows(); ++r) {
      const double* row = dpost.row_ptr(r);
      for (std::size_t c = 0; c < dpost.cols(); ++c) db[c] += row[c];
    }
    dh = matmul(dpost, layer.weight);
  }
  return grads;
}

// Flat parameter order: projector (weight, bias per layer), w1, w2, u2 when
// gated, classifier weights, classifier bias.
inline std::size_t param_count(const ModelParams& p) {
  std::size_t n = 0;
  for (const auto& layer : p.projector.layers)
    n += layer.weight.size() + layer.bias.size();
  n += p.aggregator.w1.size() + p.aggregator.w2.size() + p.aggregator.u2.size();
  n += p.aggregator.classifier_w.size() + 1;
  return n;
}

inline std::vector<double> flatten_params(const ModelParams& p) {
  std::vector<double> out;
  out.reserve(param_count(p));
  auto append = [&out](const std::vector<double>& v) {
    out.insert(out.end(), v.begin(), v.end());
  };
  for (const auto& layer : p.projector.layers) {
    append(layer.weight.data());
    append(layer.bias);
  }
  append(p.aggregator.w1.data());
  append(p.aggregator.w2.data());
  if (p.aggregator.gated()) append(p.aggregator.u2.data());
  append(p.aggregator.classifier_w);
  out.push_back(p.aggregator.classifier_b);
  return out;
}

inline void unflatten_params(ModelParams& p, const std::vector<double>& flat) {
  if (flat.size() != param_count(p))
    throw std::invalid_argument("unflatten_params: length mismatch");
  std::size_t pos = 0;
  auto take = [&](std::vector<double>& v) {
    std::copy(flat.begin() + pos, flat.begin() + pos + v.size(), v.begin());
    pos += v.size();
  };
  for (auto& layer : p.projector.layers) {
    take(layer.weight.data());
    take(layer.bias);
  }
  take(p.aggregator.w1.data());
  take(p.aggregator.w2.data());
  if (p.aggregator.gated()) take(p.aggregator.u2.data());
  take(p.aggregator.classifier_w);
  p.aggregator.classifier_b = flat[pos];
}

}  // namespace milpdl
