// trainer.hpp
//
// Optimization loop wiring the progressive scheduler to epochs, regularizer
// hooks, metrics, localization scoring, and the repeated cross-validation
// harness. Every run derives its random streams from (seed, labels), so
// results are identical whether folds run serially or on a worker pool.

#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "milpdl/baselines.hpp"
#include "milpdl/data.hpp"
#include "milpdl/metrics.hpp"
#include "milpdl/model.hpp"
#include "milpdl/optim.hpp"
#include "milpdl/pdl.hpp"

namespace milpdl {

struct RegularizerConfig {
  enum class Kind { None, Pdl, Vanilla, Spatial, DropInstance, AttentionDrop };
  Kind kind = Kind::None;
  double rate = 0.2;        // vanilla / spatial / drop_instance
  double threshold = 0.65;  // attention_drop
  // PDL
  double p_max = 0.45;
  Interpolation rate_interp{};
  Interpolation sched_interp{};
  bool progressive = true;
};

inline RegularizerConfig::Kind regularizer_from_name(const std::string& name) {
  using Kind = RegularizerConfig::Kind;
  if (name == "none") return Kind::None;
  if (name == "pdl") return Kind::Pdl;
  if (name == "vanilla") return Kind::Vanilla;
  if (name == "spatial") return Kind::Spatial;
  if (name == "drop_instance") return Kind::DropInstance;
  if (name == "attention_drop") return Kind::AttentionDrop;
  throw std::invalid_argument("unknown regularizer: " + name);
}

inline const char* regularizer_name(RegularizerConfig::Kind k) {
  using Kind = RegularizerConfig::Kind;
  switch (k) {
    case Kind::None: return "none";
    case Kind::Pdl: return "pdl";
    case Kind::Vanilla: return "vanilla";
    case Kind::Spatial: return "spatial";
    case Kind::DropInstance: return "drop_instance";
    case Kind::AttentionDrop: return "attention_drop";
  }
  return "?";
}

struct TrainConfig {
  std::size_t epochs = 40;
  OptimizerConfig optim{};
  RegularizerConfig reg{};
  std::uint64_t seed = 0;

  void validate() const {
    optim.validate();
    if (epochs == 0) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
    if (reg.kind == RegularizerConfig::Kind::Pdl && reg.progressive && epochs < 2)
      throw std::invalid_argument("TrainConfig: progressive PDL needs >= 2 epochs");
  }
};

// Global PDL rate at epoch t: the scheduler value, or the constant cap in
// fixed-threshold mode.
inline double pdl_global_rate(const RegularizerConfig& reg, std::size_t t,
                              std::size_t horizon) {
  if (!reg.progressive) return reg.p_max;
  ScheduleState st;
  st.t = t;
  st.horizon = horizon;
  st.p_max = reg.p_max;
  st.interp = reg.sched_interp;
  return scheduler_value(st);
}

inline DropoutHook make_regularizer_hook(const RegularizerConfig& reg,
                                         double pdl_rate) {
  using Kind = RegularizerConfig::Kind;
  switch (reg.kind) {
    case Kind::None:
    case Kind::DropInstance:
      return nullptr;
    case Kind::Pdl:
      return [interp = reg.rate_interp, pdl_rate](const Matrix& act, Rng& rng) {
        const PdlLayerState ls = pdl_layer_state(act, pdl_rate, interp, rng);
        Matrix m(act.rows(), act.cols());
        for (std::size_t r = 0; r < act.rows(); ++r) {
          const double v = ls.mask[r] ? ls.scale[r] : 0.0;
          double* row = m.row_ptr(r);
          for (std::size_t c = 0; c < act.cols(); ++c) row[c] = v;
        }
        return m;
      };
    case Kind::Vanilla:
      return [p = reg.rate](const Matrix& act, Rng& rng) {
        return vanilla_dropout_multiplier(act.rows(), act.cols(), p, rng);
      };
    case Kind::Spatial:
      return [p = reg.rate](const Matrix& act, Rng& rng) {
        return spatial_dropout_multiplier(act.rows(), act.cols(), p, rng);
      };
    case Kind::AttentionDrop:
      return [thr = reg.threshold](const Matrix& act, Rng&) {
        return attention_dropout_multiplier(act, thr);
      };
  }
  return nullptr;
}

class TrainingDiverged : public std::runtime_error {
 public:
  explicit TrainingDiverged(const std::string& what) : std::runtime_error(what) {}
};

struct EpochStats {
  double mean_loss = 0.0;
  double global_rate = 0.0;  // P(t) for PDL, nominal rate otherwise
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
};

// Per-bag updates: shuffle, forward in train mode, BCE backward, optimizer
// step. Dropout masks are resampled per bag from a stream keyed by
// (seed, epoch, bag index), independent of shuffle order.
inline TrainHistory train(ModelParams& params, const std::vector<const Bag*>& bags,
                          const TrainConfig& cfg) {
  cfg.validate();
  if (bags.empty()) throw std::invalid_argument("train: empty dataset");
  using Kind = RegularizerConfig::Kind;

  AdamOptimizer opt(cfg.optim);
  Rng root(cfg.seed);
  std::vector<double> flat = flatten_params(params);
  const std::size_t n_layers = params.projector.layers.size();
  TrainHistory hist;
  hist.epochs.reserve(cfg.epochs);

  for (std::size_t t = 0; t < cfg.epochs; ++t) {
    double rate = 0.0;
    if (cfg.reg.kind == Kind::Pdl) rate = pdl_global_rate(cfg.reg, t, cfg.epochs);
    else if (cfg.reg.kind == Kind::Vanilla || cfg.reg.kind == Kind::Spatial ||
             cfg.reg.kind == Kind::DropInstance)
      rate = cfg.reg.rate;
    else if (cfg.reg.kind == Kind::AttentionDrop)
      rate = cfg.reg.threshold;

    std::vector<DropoutHook> hooks;
    if (DropoutHook hook = make_regularizer_hook(cfg.reg, rate); hook)
      hooks.assign(n_layers, hook);

    Rng epoch_rng = root.fork("epoch", t);
    std::vector<std::size_t> order(bags.size());
    std::iota(order.begin(), order.end(), 0);
    {
      Rng shuffle_rng = epoch_rng.fork("shuffle");
      shuffle_rng.shuffle(order);
    }

    double loss_sum = 0.0;
    for (std::size_t bi : order) {
      const Bag* bag = bags[bi];
      Rng bag_rng = epoch_rng.fork("bag", bi);
      Bag reduced;
      const Matrix* x = &bag->instances;
      if (cfg.reg.kind == Kind::DropInstance) {
        reduced = drop_instance(*bag, cfg.reg.rate, bag_rng);
        x = &reduced.instances;
      }
      ForwardTrace trace = forward(*x, params, hooks, /*train=*/true, bag_rng);
      const double loss = bce_loss(trace.logit, bag->label);
      if (!std::isfinite(loss))
        throw TrainingDiverged("non-finite loss at epoch " + std::to_string(t) +
                               ", bag '" + bag->id + "', logit " +
                               std::to_string(trace.logit));
      loss_sum += loss;
      const ModelGrads grads = backward(params, trace, bag->label);
      const std::vector<double> gflat = flatten_params(grads);
      opt.step(flat, gflat);
      unflatten_params(params, flat);
    }
    hist.epochs.push_back({loss_sum / static_cast<double>(bags.size()), rate});
  }
  return hist;
}

// Eval-mode metrics: accuracy at threshold 0.5 and rank AUC.
inline Metrics evaluate(const ModelParams& params,
                        const std::vector<const Bag*>& bags) {
  if (bags.empty()) throw std::invalid_argument("evaluate: empty dataset");
  Rng unused(0);
  std::vector<double> probs;
  std::vector<int> labels;
  probs.reserve(bags.size());
  labels.reserve(bags.size());
  for (const Bag* bag : bags) {
    const ForwardTrace trace = forward(bag->instances, params, {}, false, unused);
    probs.push_back(trace.prob);
    labels.push_back(bag->label);
  }
  Metrics m;
  m.accuracy = accuracy_at_half(probs, labels);
  m.auc = auc_rank(probs, labels);
  m.count = bags.size();
  return m;
}

// AUC of final-aggregator attention against instance labels, pooled over all
// labeled instances of positive bags. nullopt when undefined.
inline std::optional<double> localization_score(const ModelParams& params,
                                                const std::vector<const Bag*>& bags) {
  Rng unused(0);
  std::vector<double> attention;
  std::vector<int> labels;
  for (const Bag* bag : bags) {
    if (bag->label != 1 || bag->instance_labels.empty()) continue;
    const ForwardTrace trace = forward(bag->instances, params, {}, false, unused);
    for (std::size_t k = 0; k < bag->size(); ++k) {
      if (bag->instance_labels[k] == kLabelUnknown) continue;
      attention.push_back(trace.alpha[k]);
      labels.push_back(bag->instance_labels[k]);
    }
  }
  if (attention.empty()) return std::nullopt;
  return auc_rank(attention, labels);
}

// Runs fn(0..n_tasks) on a bounded pool; exceptions are rethrown after join.
inline void parallel_for(std::size_t n_tasks, std::size_t workers,
                         const std::function<void(std::size_t)>& fn) {
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, n_tasks);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n_tasks; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n_tasks) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

// One train/evaluate run on explicit train/test index sets. Standardization
// stats are fitted on the training bags only.
struct SingleRunResult {
  ModelParams params;
  TrainHistory history;
  Metrics test;
  Metrics train_set;
  std::optional<double> test_localization;
};

inline SingleRunResult run_single(const BagDataset& ds,
                                  const std::vector<std::size_t>& train_idx,
                                  const std::vector<std::size_t>& test_idx,
                                  ModelConfig model_cfg, TrainConfig train_cfg,
                                  bool standardize, bool want_localization) {
  std::vector<Bag> train_bags, test_bags;
  train_bags.reserve(train_idx.size());
  test_bags.reserve(test_idx.size());
  if (standardize) {
    const FeatureStats stats = fit_feature_stats(ds, train_idx);
    for (std::size_t i : train_idx) train_bags.push_back(standardize_bag(ds.bags[i], stats));
    for (std::size_t i : test_idx) test_bags.push_back(standardize_bag(ds.bags[i], stats));
  } else {
    for (std::size_t i : train_idx) train_bags.push_back(ds.bags[i]);
    for (std::size_t i : test_idx) test_bags.push_back(ds.bags[i]);
  }
  auto ptrs = [](const std::vector<Bag>& bags) {
    std::vector<const Bag*> p;
    p.reserve(bags.size());
    for (const Bag& b : bags) p.push_back(&b);
    return p;
  };
  const auto train_ptrs = ptrs(train_bags);
  const auto test_ptrs = ptrs(test_bags);

  model_cfg.input_dim = ds.feature_dim;
  Rng init_rng = Rng(train_cfg.seed).fork("init");
  SingleRunResult out;
  out.params = init_params(model_cfg, init_rng);
  out.history = train(out.params, train_ptrs, train_cfg);
  out.train_set = evaluate(out.params, train_ptrs);
  if (!test_ptrs.empty()) {
    out.test = evaluate(out.params, test_ptrs);
    if (want_localization)
      out.test_localization = localization_score(out.params, test_ptrs);
  }
  return out;
}

// Stratified single holdout split.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>>
stratified_holdout(const BagDataset& ds, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw std::invalid_argument("stratified_holdout: fraction must lie in (0, 1)");
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < ds.bags.size(); ++i)
    (ds.bags[i].label == 1 ? pos : neg).push_back(i);
  Rng rng(seed);
  {
    Rng rp = rng.fork("holdout/pos");
    rp.shuffle(pos);
    Rng rn = rng.fork("holdout/neg");
    rn.shuffle(neg);
  }
  std::vector<std::size_t> train, test;
  auto deal = [&](const std::vector<std::size_t>& cls) {
    std::size_t n_test = static_cast<std::size_t>(
        std::lround(test_fraction * static_cast<double>(cls.size())));
    if (n_test == cls.size() && n_test > 0) --n_test;
    for (std::size_t i = 0; i < cls.size(); ++i)
      (i < n_test ? test : train).push_back(cls[i]);
  };
  deal(pos);
  deal(neg);
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  if (train.empty() || test.empty())
    throw std::invalid_argument("stratified_holdout: degenerate split");
  return {train, test};
}

struct RunRecord {
  std::size_t run_id = 0;
  std::size_t repeat = 0;
  std::size_t fold = 0;
  std::uint64_t seed = 0;
  double final_train_loss = 0.0;
  Metrics test;
  std::optional<double> test_localization;
  std::vector<double> loss_curve;
  std::vector<double> rate_curve;
};

struct CvSummary {
  std::vector<RunRecord> runs;
  std::size_t folds = 0;
  std::size_t repeats = 0;
  double acc_mean = 0.0;
  double acc_std_all = 0.0;          // std over all fold runs
  double acc_std_repeat_means = 0.0; // std over per-repeat mean accuracies
  std::optional<double> auc_mean;
  std::optional<double> auc_std_all;
};

namespace detail {

inline double sample_std(const std::vector<double>& xs, double mean) {
  if (xs.size() < 2) return 0.0;
  double s = 0.0;
  for (double x : xs) s += (x - mean) * (x - mean);
  return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

}  // namespace detail

inline CvSummary summarize_runs(std::vector<RunRecord> runs, std::size_t k,
                                std::size_t repeats) {
  CvSummary s;
  s.runs = std::move(runs);
  s.folds = k;
  s.repeats = repeats;
  std::vector<double> accs;
  std::vector<double> aucs;
  for (const auto& r : s.runs) {
    accs.push_back(r.test.accuracy);
    if (r.test.auc) aucs.push_back(*r.test.auc);
  }
  if (!accs.empty()) {
    s.acc_mean = std::accumulate(accs.begin(), accs.end(), 0.0) / accs.size();
    s.acc_std_all = detail::sample_std(accs, s.acc_mean);
  }
  std::vector<double> repeat_means;
  for (std::size_t r = 0; r < repeats; ++r) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& run : s.runs)
      if (run.repeat == r) {
        sum += run.test.accuracy;
        ++n;
      }
    if (n > 0) repeat_means.push_back(sum / static_cast<double>(n));
  }
  if (!repeat_means.empty()) {
    const double rm =
        std::accumulate(repeat_means.begin(), repeat_means.end(), 0.0) /
        repeat_means.size();
    s.acc_std_repeat_means = detail::sample_std(repeat_means, rm);
  }
  if (!aucs.empty()) {
    const double am = std::accumulate(aucs.begin(), aucs.end(), 0.0) / aucs.size();
    s.auc_mean = am;
    s.auc_std_all = detail::sample_std(aucs, am);
  }
  return s;
}

// repeats x k runs with fresh stratified folds per repeat and per-run derived
// seeds. Fold tasks may execute on a worker pool; records come back in run
// order either way.
inline CvSummary run_cv_experiment(const BagDataset& ds, const ModelConfig& model_cfg,
                                   const TrainConfig& train_cfg, std::size_t k = 10,
                                   std::size_t repeats = 5, bool standardize = true,
                                   std::size_t workers = 1,
                                   bool want_localization = false) {
  if (repeats == 0) throw std::invalid_argument("run_cv_experiment: repeats must be >= 1");
  Rng base(train_cfg.seed);
  std::vector<std::vector<std::pair<std::vector<std::size_t>, std::vector<std::size_t>>>>
      folds_by_repeat;
  folds_by_repeat.reserve(repeats);
  for (std::size_t r = 0; r < repeats; ++r)
    folds_by_repeat.push_back(kfold_split(ds, k, base.fork("folds", r).seed()));

  const std::size_t n_runs = repeats * k;
  std::vector<RunRecord> records(n_runs);
  parallel_for(n_runs, workers, [&](std::size_t run_id) {
    const std::size_t r = run_id / k;
    const std::size_t f = run_id % k;
    const auto& [train_idx, test_idx] = folds_by_repeat[r][f];
    TrainConfig run_cfg = train_cfg;
    run_cfg.seed = base.fork("run", run_id).seed();
    const SingleRunResult res = run_single(ds, train_idx, test_idx, model_cfg,
                                           run_cfg, standardize, want_localization);
    RunRecord rec;
    rec.run_id = run_id;
    rec.repeat = r;
    rec.fold = f;
    rec.seed = run_cfg.seed;
    rec.final_train_loss = res.history.epochs.back().mean_loss;
    rec.test = res.test;
    rec.test_localization = res.test_localization;
    for (const auto& e : res.history.epochs) {
      rec.loss_curve.push_back(e.mean_loss);
      rec.rate_curve.push_back(e.global_rate);
    }
    records[run_id] = std::move(rec);
  });
  return summarize_runs(std::move(records), k, repeats);
}

}  // namespace milpdl
