// optim.hpp
//
// Adam with either L2-coupled weight decay (Adam) or decoupled weight decay
// (AdamW), operating on flat parameter vectors.

#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace milpdl {

enum class OptimizerKind { Adam, AdamW };

inline OptimizerKind optimizer_from_name(const std::string& name) {
  if (name == "adam") return OptimizerKind::Adam;
  if (name == "adamw") return OptimizerKind::AdamW;
  throw std::invalid_argument("unknown optimizer: " + name);
}

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::AdamW;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;

  void validate() const {
    if (!(lr >= 0.0)) throw std::invalid_argument("OptimizerConfig: lr must be >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
      throw std::invalid_argument("OptimizerConfig: betas must lie in [0, 1)");
    if (!(weight_decay >= 0.0))
      throw std::invalid_argument("OptimizerConfig: weight_decay must be >= 0");
  }
};

class AdamOptimizer {
 public:
  explicit AdamOptimizer(OptimizerConfig cfg) : cfg_(cfg) { cfg_.validate(); }

  void step(std::vector<double>& params, const std::vector<double>& grads) {
    if (params.size() != grads.size())
      throw std::invalid_argument("AdamOptimizer: param/grad length mismatch");
    if (m_.empty()) {
      m_.assign(params.size(), 0.0);
      v_.assign(params.size(), 0.0);
    } else if (m_.size() != params.size()) {
      throw std::invalid_argument("AdamOptimizer: parameter count changed");
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      double g = grads[i];
      if (cfg_.kind == OptimizerKind::Adam) g += cfg_.weight_decay * params[i];
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
      v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = m_[i] / bc1;
      const double vhat = v_[i] / bc2;
      double update = cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      if (cfg_.kind == OptimizerKind::AdamW)
        update += cfg_.lr * cfg_.weight_decay * params[i];
      params[i] -= update;
    }
  }

  const OptimizerConfig& config() const { return cfg_; }

 private:
  OptimizerConfig cfg_;
  std::vector<double> m_, v_;
  long t_ = 0;
};

}  // namespace milpdl
