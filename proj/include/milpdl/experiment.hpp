// experiment.hpp
//
// Experiment configuration (flat key=value files with dotted keys, CLI
// overridable) and the command implementations behind the CLI: train, eval,
// compare-dropouts, scheduler-ablation, sweep-interpolation and
// export-attention. Every command derives all randomness from (config, seed)
// and writes a manifest with the config hash, so reruns are byte-identical.

#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "milpdl/data.hpp"
#include "milpdl/pdl.hpp"
#include "milpdl/serialize.hpp"
#include "milpdl/trainer.hpp"
#include "milpdl/version.hpp"

namespace milpdl {

struct ExperimentConfig {
  // data
  std::string data_source = "synth";  // synth | csv
  std::string csv_path;
  SynthConfig synth{};
  bool standardize = true;
  // model
  std::string aggregator = "abmil";  // abmil | abmil_gated
  std::vector<std::size_t> hidden_dims{256, 128, 64};
  std::size_t attention_dim = 128;
  // training
  TrainConfig train{};
  // protocol
  std::string protocol = "fit";  // fit | cv
  std::size_t cv_folds = 10;
  std::size_t cv_repeats = 5;
  double holdout_fraction = 0.5;
  std::size_t eval_seeds = 5;
  std::size_t workers = 0;  // 0 = logical cores
  // io
  std::string output_dir = "out";
  std::string params_path;
  std::vector<std::string> compare_methods{"none",          "vanilla",
                                           "spatial",       "drop_instance",
                                           "attention_drop", "pdl"};

  ModelConfig model_config(std::size_t input_dim) const {
    ModelConfig m;
    m.input_dim = input_dim;
    m.hidden_dims = hidden_dims;
    m.attention_dim = attention_dim;
    if (aggregator == "abmil") m.gated = false;
    else if (aggregator == "abmil_gated") m.gated = true;
    else throw std::invalid_argument("unknown aggregator: " + aggregator);
    return m;
  }
};

namespace detail {

inline bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("expected boolean, got '" + v + "'");
}

inline std::size_t parse_size(const std::string& v) {
  std::size_t pos = 0;
  const unsigned long long n = std::stoull(v, &pos);
  if (pos != v.size()) throw std::invalid_argument("expected integer, got '" + v + "'");
  return static_cast<std::size_t>(n);
}

inline double parse_real(const std::string& v) {
  std::size_t pos = 0;
  const double x = std::stod(v, &pos);
  if (pos != v.size()) throw std::invalid_argument("expected number, got '" + v + "'");
  return x;
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : v) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

inline std::string join_sizes(const std::vector<std::size_t>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(xs[i]);
  }
  return out;
}

inline std::string join_strings(const std::vector<std::string>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    out += xs[i];
  }
  return out;
}

inline std::string fmt_real(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

inline std::string fmt_metric(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", x);
  return buf;
}

inline std::string fmt_metric_opt(const std::optional<double>& x) {
  return x ? fmt_metric(*x) : std::string("NA");
}

inline std::string fmt_curve(const std::vector<double>& xs) {
  std::string out;
  char buf[32];
  for (std::size_t i = 0; i < xs.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.6g", xs[i]);
    if (i) out += ';';
    out += buf;
  }
  return out;
}

}  // namespace detail

// One entry per configurable key; keeps file parsing, flag overrides and the
// canonical manifest dump in lockstep.
inline void set_config_value(ExperimentConfig& cfg, const std::string& key,
                             const std::string& value) {
  using detail::parse_bool;
  using detail::parse_real;
  using detail::parse_size;
  if (key == "data.source") {
    if (value != "synth" && value != "csv")
      throw std::invalid_argument("data.source must be synth or csv");
    cfg.data_source = value;
  } else if (key == "data.csv_path") {
    cfg.csv_path = value;
  } else if (key == "data.standardize") {
    cfg.standardize = parse_bool(value);
  } else if (key == "synth.n_bags") {
    cfg.synth.n_bags = parse_size(value);
  } else if (key == "synth.feature_dim") {
    cfg.synth.feature_dim = parse_size(value);
  } else if (key == "synth.mean_bag_size") {
    cfg.synth.mean_bag_size = parse_real(value);
  } else if (key == "synth.bag_size_std") {
    cfg.synth.bag_size_std = parse_real(value);
  } else if (key == "synth.witness_rate") {
    cfg.synth.witness_rate = parse_real(value);
  } else if (key == "synth.positive_mean") {
    cfg.synth.positive_mean = parse_real(value);
  } else if (key == "synth.negative_mean") {
    cfg.synth.negative_mean = parse_real(value);
  } else if (key == "synth.covariance_scale") {
    cfg.synth.covariance_scale = parse_real(value);
  } else if (key == "synth.seed") {
    cfg.synth.seed = parse_size(value);
  } else if (key == "model.aggregator") {
    if (value != "abmil" && value != "abmil_gated")
      throw std::invalid_argument("model.aggregator must be abmil or abmil_gated");
    cfg.aggregator = value;
  } else if (key == "model.hidden_dims") {
    cfg.hidden_dims.clear();
    for (const auto& tok : detail::split_list(value))
      cfg.hidden_dims.push_back(parse_size(tok));
  } else if (key == "model.attention_dim") {
    cfg.attention_dim = parse_size(value);
  } else if (key == "train.epochs") {
    cfg.train.epochs = parse_size(value);
  } else if (key == "train.lr") {
    cfg.train.optim.lr = parse_real(value);
  } else if (key == "train.weight_decay") {
    cfg.train.optim.weight_decay = parse_real(value);
  } else if (key == "train.optimizer") {
    cfg.train.optim.kind = optimizer_from_name(value);
  } else if (key == "train.seed") {
    cfg.train.seed = parse_size(value);
  } else if (key == "reg.kind") {
    cfg.train.reg.kind = regularizer_from_name(value);
  } else if (key == "reg.rate") {
    cfg.train.reg.rate = parse_real(value);
  } else if (key == "reg.threshold") {
    cfg.train.reg.threshold = parse_real(value);
  } else if (key == "pdl.p_max") {
    cfg.train.reg.p_max = parse_real(value);
  } else if (key == "pdl.rate_interp") {
    cfg.train.reg.rate_interp.method = interp_method_from_name(value);
  } else if (key == "pdl.sched_interp") {
    cfg.train.reg.sched_interp.method = interp_method_from_name(value);
  } else if (key == "pdl.progressive") {
    cfg.train.reg.progressive = parse_bool(value);
  } else if (key == "pdl.g") {
    cfg.train.reg.rate_interp.g = cfg.train.reg.sched_interp.g = parse_real(value);
  } else if (key == "pdl.e") {
    cfg.train.reg.rate_interp.e = cfg.train.reg.sched_interp.e = parse_real(value);
  } else if (key == "pdl.b") {
    cfg.train.reg.rate_interp.b = cfg.train.reg.sched_interp.b = parse_real(value);
  } else if (key == "experiment.protocol") {
    if (value != "fit" && value != "cv")
      throw std::invalid_argument("experiment.protocol must be fit or cv");
    cfg.protocol = value;
  } else if (key == "experiment.cv_folds") {
    cfg.cv_folds = parse_size(value);
  } else if (key == "experiment.cv_repeats") {
    cfg.cv_repeats = parse_size(value);
  } else if (key == "experiment.holdout_fraction") {
    cfg.holdout_fraction = parse_real(value);
  } else if (key == "experiment.eval_seeds") {
    cfg.eval_seeds = parse_size(value);
  } else if (key == "experiment.workers") {
    cfg.workers = parse_size(value);
  } else if (key == "output.dir") {
    cfg.output_dir = value;
  } else if (key == "eval.params_path") {
    cfg.params_path = value;
  } else if (key == "compare.methods") {
    cfg.compare_methods = detail::split_list(value);
  } else {
    throw std::invalid_argument("unknown config key: " + key);
  }
}

// Every key with its effective value, sorted; the manifest embeds this and
// hashes it.
inline std::string canonical_config_text(const ExperimentConfig& cfg) {
  std::map<std::string, std::string> kv;
  kv["data.source"] = cfg.data_source;
  kv["data.csv_path"] = cfg.csv_path;
  kv["data.standardize"] = cfg.standardize ? "true" : "false";
  kv["synth.n_bags"] = std::to_string(cfg.synth.n_bags);
  kv["synth.feature_dim"] = std::to_string(cfg.synth.feature_dim);
  kv["synth.mean_bag_size"] = detail::fmt_real(cfg.synth.mean_bag_size);
  kv["synth.bag_size_std"] = detail::fmt_real(cfg.synth.bag_size_std);
  kv["synth.witness_rate"] = detail::fmt_real(cfg.synth.witness_rate);
  kv["synth.positive_mean"] = detail::fmt_real(cfg.synth.positive_mean);
  kv["synth.negative_mean"] = detail::fmt_real(cfg.synth.negative_mean);
  kv["synth.covariance_scale"] = detail::fmt_real(cfg.synth.covariance_scale);
  kv["synth.seed"] = std::to_string(cfg.synth.seed);
  kv["model.aggregator"] = cfg.aggregator;
  kv["model.hidden_dims"] = detail::join_sizes(cfg.hidden_dims);
  kv["model.attention_dim"] = std::to_string(cfg.attention_dim);
  kv["train.epochs"] = std::to_string(cfg.train.epochs);
  kv["train.lr"] = detail::fmt_real(cfg.train.optim.lr);
  kv["train.weight_decay"] = detail::fmt_real(cfg.train.optim.weight_decay);
  kv["train.optimizer"] =
      cfg.train.optim.kind == OptimizerKind::AdamW ? "adamw" : "adam";
  kv["train.seed"] = std::to_string(cfg.train.seed);
  kv["reg.kind"] = regularizer_name(cfg.train.reg.kind);
  kv["reg.rate"] = detail::fmt_real(cfg.train.reg.rate);
  kv["reg.threshold"] = detail::fmt_real(cfg.train.reg.threshold);
  kv["pdl.p_max"] = detail::fmt_real(cfg.train.reg.p_max);
  kv["pdl.rate_interp"] = interp_method_name(cfg.train.reg.rate_interp.method);
  kv["pdl.sched_interp"] = interp_method_name(cfg.train.reg.sched_interp.method);
  kv["pdl.progressive"] = cfg.train.reg.progressive ? "true" : "false";
  kv["pdl.g"] = detail::fmt_real(cfg.train.reg.rate_interp.g);
  kv["pdl.e"] = detail::fmt_real(cfg.train.reg.rate_interp.e);
  kv["pdl.b"] = detail::fmt_real(cfg.train.reg.rate_interp.b);
  kv["experiment.protocol"] = cfg.protocol;
  kv["experiment.cv_folds"] = std::to_string(cfg.cv_folds);
  kv["experiment.cv_repeats"] = std::to_string(cfg.cv_repeats);
  kv["experiment.holdout_fraction"] = detail::fmt_real(cfg.holdout_fraction);
  kv["experiment.eval_seeds"] = std::to_string(cfg.eval_seeds);
  kv["experiment.workers"] = std::to_string(cfg.workers);
  kv["output.dir"] = cfg.output_dir;
  kv["eval.params_path"] = cfg.params_path;
  kv["compare.methods"] = detail::join_strings(cfg.compare_methods);
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

inline void apply_config_line(ExperimentConfig& cfg, const std::string& line,
                              std::size_t line_no) {
  std::string s = line;
  if (const auto hash = s.find('#'); hash != std::string::npos) s.resize(hash);
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return;
  const auto last = s.find_last_not_of(" \t\r");
  s = s.substr(first, last - first + 1);
  const auto eq = s.find('=');
  if (eq == std::string::npos)
    throw std::invalid_argument("config line " + std::to_string(line_no) +
                                ": expected key=value, got '" + s + "'");
  auto trim = [](std::string t) {
    const auto b = t.find_first_not_of(" \t");
    if (b == std::string::npos) return std::string();
    const auto e = t.find_last_not_of(" \t");
    return t.substr(b, e - b + 1);
  };
  try {
    set_config_value(cfg, trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
  } catch (const std::exception& e) {
    throw std::invalid_argument("config line " + std::to_string(line_no) + ": " +
                                e.what());
  }
}

inline ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  ExperimentConfig cfg;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) apply_config_line(cfg, line, ++line_no);
  return cfg;
}

inline BagDataset load_experiment_dataset(const ExperimentConfig& cfg) {
  if (cfg.data_source == "csv") {
    if (cfg.csv_path.empty())
      throw std::invalid_argument("data.source=csv requires data.csv_path");
    return load_bags_csv(cfg.csv_path);
  }
  Rng rng(cfg.synth.seed);
  return synth_bags(cfg.synth, rng);
}

namespace detail {

inline void write_manifest(const ExperimentConfig& cfg, const std::string& command) {
  const std::string text = canonical_config_text(cfg);
  char hash[32];
  std::snprintf(hash, sizeof(hash), "%016llx",
                static_cast<unsigned long long>(fnv1a(text)));
  std::ofstream out(cfg.output_dir + "/manifest.txt");
  if (!out) throw std::runtime_error("cannot write manifest in " + cfg.output_dir);
  out << "command=" << command << "\n";
  out << "version=" << kVersion << "\n";
  out << "seed=" << cfg.train.seed << "\n";
  out << "config_hash=" << hash << "\n";
  out << "config:\n" << text;
}

inline std::string run_record_line(const RunRecord& rec, const std::string& scope) {
  std::ostringstream os;
  os << "run=" << rec.run_id << " repeat=" << rec.repeat << " fold=" << rec.fold
     << " seed=" << rec.seed << " scope=" << scope
     << " final_train_loss=" << fmt_metric(rec.final_train_loss)
     << " acc=" << fmt_metric(rec.test.accuracy)
     << " auc=" << fmt_metric_opt(rec.test.auc)
     << " loc=" << fmt_metric_opt(rec.test_localization)
     << " loss_curve=" << fmt_curve(rec.loss_curve)
     << " rate_curve=" << fmt_curve(rec.rate_curve);
  return os.str();
}

}  // namespace detail

// Single holdout-protocol run shared by the comparison commands. The split
// and the run seed depend only on (base seed, seed index), never on the
// method, so methods are compared paired: identical split, identical
// initialization and shuffle order, masks as the only difference. It also
// means a method's row does not depend on which other methods run alongside.
struct ProtocolRun {
  Metrics test;
  std::optional<double> localization;
  TrainHistory history;
};

inline ProtocolRun run_paired_holdout(const BagDataset& ds,
                                      const ExperimentConfig& cfg,
                                      const RegularizerConfig& reg,
                                      std::size_t seed_index,
                                      bool want_localization) {
  const Rng base(cfg.train.seed);
  const auto [train_idx, test_idx] = stratified_holdout(
      ds, cfg.holdout_fraction, base.fork("split", seed_index).seed());
  TrainConfig tcfg = cfg.train;
  tcfg.reg = reg;
  tcfg.seed = base.fork("run", seed_index).seed();
  const SingleRunResult res =
      run_single(ds, train_idx, test_idx, cfg.model_config(ds.feature_dim), tcfg,
                 cfg.standardize, want_localization);
  return {res.test, res.test_localization, res.history};
}

// ---------------------------------------------------------------------------
// Commands. Each returns 0 on success and writes its artifacts plus a
// manifest into cfg.output_dir.
// ---------------------------------------------------------------------------

inline int cmd_train(const ExperimentConfig& cfg) {
  const BagDataset ds = load_experiment_dataset(cfg);
  std::filesystem::create_directories(cfg.output_dir);

  std::vector<std::string> record_lines;
  std::ostringstream summary;
  ModelParams final_params;

  if (cfg.protocol == "cv") {
    const bool has_labels = [&] {
      for (const Bag& b : ds.bags)
        if (!b.instance_labels.empty()) return true;
      return false;
    }();
    const CvSummary cv = run_cv_experiment(
        ds, cfg.model_config(ds.feature_dim), cfg.train, cfg.cv_folds,
        cfg.cv_repeats, cfg.standardize, cfg.workers, has_labels);
    for (const auto& rec : cv.runs)
      record_lines.push_back(detail::run_record_line(rec, "test"));
    summary << "protocol=cv\n";
    summary << "runs=" << cv.runs.size() << "\n";
    summary << "folds=" << cv.folds << "\n";
    summary << "repeats=" << cv.repeats << "\n";
    summary << "acc_mean=" << detail::fmt_metric(cv.acc_mean) << "\n";
    summary << "acc_std_all=" << detail::fmt_metric(cv.acc_std_all) << "\n";
    summary << "acc_std_repeat_means=" << detail::fmt_metric(cv.acc_std_repeat_means)
            << "\n";
    summary << "auc_mean=" << detail::fmt_metric_opt(cv.auc_mean) << "\n";
    summary << "auc_std_all=" << detail::fmt_metric_opt(cv.auc_std_all) << "\n";

    // Final fit on the full dataset provides the saved parameters.
    std::vector<std::size_t> all(ds.bags.size());
    std::iota(all.begin(), all.end(), 0);
    TrainConfig fit_cfg = cfg.train;
    fit_cfg.seed = Rng(cfg.train.seed).fork("final-fit").seed();
    const SingleRunResult fit = run_single(ds, all, {}, cfg.model_config(ds.feature_dim),
                                           fit_cfg, cfg.standardize, false);
    final_params = fit.params;
    summary << "final_fit_train_acc=" << detail::fmt_metric(fit.train_set.accuracy)
            << "\n";
  } else if (cfg.protocol == "fit") {
    std::vector<std::size_t> all(ds.bags.size());
    std::iota(all.begin(), all.end(), 0);
    const SingleRunResult fit = run_single(ds, all, {}, cfg.model_config(ds.feature_dim),
                                           cfg.train, cfg.standardize, false);
    final_params = fit.params;
    RunRecord rec;
    rec.seed = cfg.train.seed;
    rec.final_train_loss = fit.history.epochs.back().mean_loss;
    rec.test = fit.train_set;
    for (const auto& e : fit.history.epochs) {
      rec.loss_curve.push_back(e.mean_loss);
      rec.rate_curve.push_back(e.global_rate);
    }
    record_lines.push_back(detail::run_record_line(rec, "train"));
    summary << "protocol=fit\n";
    summary << "runs=1\n";
    summary << "acc_mean=" << detail::fmt_metric(fit.train_set.accuracy) << "\n";
    summary << "auc_mean=" << detail::fmt_metric_opt(fit.train_set.auc) << "\n";
    summary << "final_train_loss="
            << detail::fmt_metric(fit.history.epochs.back().mean_loss) << "\n";
  } else {
    throw std::invalid_argument("unknown protocol: " + cfg.protocol);
  }

  {
    std::ofstream rec(cfg.output_dir + "/records.txt");
    for (const auto& line : record_lines) rec << line << "\n";
  }
  {
    std::ofstream sum(cfg.output_dir + "/summary.txt");
    sum << summary.str();
  }
  save_params(final_params, cfg.output_dir + "/params.txt");
  detail::write_manifest(cfg, "train");
  return 0;
}

inline int cmd_eval(const ExperimentConfig& cfg) {
  if (cfg.params_path.empty())
    throw std::invalid_argument("eval requires eval.params_path");
  const BagDataset ds = load_experiment_dataset(cfg);
  const ModelParams params = load_params(cfg.params_path);
  std::filesystem::create_directories(cfg.output_dir);

  std::vector<Bag> bags;
  bags.reserve(ds.bags.size());
  if (cfg.standardize) {
    std::vector<std::size_t> all(ds.bags.size());
    std::iota(all.begin(), all.end(), 0);
    const FeatureStats st = fit_feature_stats(ds, all);
    for (const Bag& b : ds.bags) bags.push_back(standardize_bag(b, st));
  } else {
    bags = ds.bags;
  }
  std::vector<const Bag*> ptrs;
  for (const Bag& b : bags) ptrs.push_back(&b);

  const Metrics m = evaluate(params, ptrs);
  const auto loc = localization_score(params, ptrs);
  std::ofstream sum(cfg.output_dir + "/summary.txt");
  sum << "bags=" << m.count << "\n";
  sum << "acc=" << detail::fmt_metric(m.accuracy) << "\n";
  sum << "auc=" << detail::fmt_metric_opt(m.auc) << "\n";
  sum << "loc=" << detail::fmt_metric_opt(loc) << "\n";
  detail::write_manifest(cfg, "eval");
  return 0;
}

namespace detail {

struct MethodResult {
  std::string method;
  std::string param;  // best rate / threshold / "-" when not applicable
  std::vector<double> seed_accs;
  std::vector<std::optional<double>> seed_aucs;
  std::vector<std::optional<double>> seed_locs;

  double acc_mean() const {
    double s = 0.0;
    for (double a : seed_accs) s += a;
    return seed_accs.empty() ? 0.0 : s / static_cast<double>(seed_accs.size());
  }
  double acc_std() const {
    if (seed_accs.size() < 2) return 0.0;
    const double m = acc_mean();
    double s = 0.0;
    for (double a : seed_accs) s += (a - m) * (a - m);
    return std::sqrt(s / static_cast<double>(seed_accs.size() - 1));
  }
  std::optional<double> auc_mean() const {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& a : seed_aucs)
      if (a) {
        s += *a;
        ++n;
      }
    if (n == 0) return std::nullopt;
    return s / static_cast<double>(n);
  }
  std::optional<double> loc_mean() const {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& a : seed_locs)
      if (a) {
        s += *a;
        ++n;
      }
    if (n == 0) return std::nullopt;
    return s / static_cast<double>(n);
  }
};

inline std::string per_seed_column(const std::vector<double>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ';';
    out += fmt_metric(xs[i]);
  }
  return out;
}

}  // namespace detail

// The drop-rate comparison: {none, vanilla, spatial, drop_instance,
// attention_drop(0.65), pdl} on identical splits/seeds. Swept baselines try
// rates 0..0.4 in steps of 0.05 and report their best mean accuracy.
inline int cmd_compare_dropouts(const ExperimentConfig& cfg) {
  const BagDataset ds = load_experiment_dataset(cfg);
  std::filesystem::create_directories(cfg.output_dir);

  struct Task {
    std::string method;
    double rate;  // NaN when the method takes no rate
    std::size_t seed_index;
    RegularizerConfig reg;
  };
  const std::vector<double> rate_grid = [] {
    std::vector<double> g;
    for (int i = 0; i <= 8; ++i) g.push_back(0.05 * i);
    return g;
  }();

  std::vector<Task> tasks;
  for (const std::string& method : cfg.compare_methods) {
    const RegularizerConfig::Kind kind = regularizer_from_name(method);
    std::vector<double> rates;
    if (kind == RegularizerConfig::Kind::Vanilla ||
        kind == RegularizerConfig::Kind::Spatial ||
        kind == RegularizerConfig::Kind::DropInstance)
      rates = rate_grid;
    else
      rates = {std::numeric_limits<double>::quiet_NaN()};
    for (double rate : rates) {
      for (std::size_t s = 0; s < cfg.eval_seeds; ++s) {
        Task t;
        t.method = method;
        t.rate = rate;
        t.seed_index = s;
        t.reg = cfg.train.reg;
        t.reg.kind = kind;
        if (!std::isnan(rate)) t.reg.rate = rate;
        tasks.push_back(std::move(t));
      }
    }
  }

  std::vector<ProtocolRun> results(tasks.size());
  parallel_for(tasks.size(), cfg.workers, [&](std::size_t i) {
    const Task& t = tasks[i];
    results[i] = run_paired_holdout(ds, cfg, t.reg, t.seed_index,
                                    /*want_localization=*/false);
  });

  // Collapse to per-(method, rate) seed vectors, then pick each method's best
  // rate by mean accuracy (ties to the lower rate).
  std::vector<detail::MethodResult> rows;
  std::vector<std::string> record_lines;
  for (const std::string& method : cfg.compare_methods) {
    detail::MethodResult best;
    bool have_best = false;
    double best_mean = -1.0;
    // iterate grid in order; tasks are grouped by (method, rate, seed)
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      if (tasks[i].method != method || tasks[i].seed_index != 0) continue;
      detail::MethodResult cand;
      cand.method = method;
      cand.param = std::isnan(tasks[i].rate)
                       ? (method == "attention_drop"
                              ? detail::fmt_metric(cfg.train.reg.threshold)
                              : std::string("-"))
                       : detail::fmt_metric(tasks[i].rate);
      for (std::size_t j = i; j < tasks.size(); ++j) {
        if (tasks[j].method != method) break;
        if (std::isnan(tasks[i].rate) ? !std::isnan(tasks[j].rate)
                                      : tasks[j].rate != tasks[i].rate)
          continue;
        cand.seed_accs.push_back(results[j].test.accuracy);
        cand.seed_aucs.push_back(results[j].test.auc);
        record_lines.push_back(
            "method=" + method + " rate=" + cand.param +
            " seed_index=" + std::to_string(tasks[j].seed_index) +
            " acc=" + detail::fmt_metric(results[j].test.accuracy) +
            " auc=" + detail::fmt_metric_opt(results[j].test.auc));
      }
      if (!have_best || cand.acc_mean() > best_mean) {
        best = cand;
        best_mean = cand.acc_mean();
        have_best = true;
      }
    }
    if (have_best) rows.push_back(std::move(best));
  }

  {
    std::ofstream table(cfg.output_dir + "/comparison.csv");
    table << "method,param,acc_mean,acc_std,auc_mean,acc_per_seed\n";
    for (const auto& row : rows) {
      table << row.method << ',' << row.param << ','
            << detail::fmt_metric(row.acc_mean()) << ','
            << detail::fmt_metric(row.acc_std()) << ','
            << detail::fmt_metric_opt(row.auc_mean()) << ','
            << detail::per_seed_column(row.seed_accs) << "\n";
    }
  }
  {
    std::ofstream rec(cfg.output_dir + "/records.txt");
    for (const auto& line : record_lines) rec << line << "\n";
  }
  detail::write_manifest(cfg, "compare-dropouts");
  return 0;
}

// Fixed cap versus progressive schedule, same seeds, accuracy plus
// localization for both.
inline int cmd_scheduler_ablation(const ExperimentConfig& cfg) {
  const BagDataset ds = load_experiment_dataset(cfg);
  std::filesystem::create_directories(cfg.output_dir);

  struct Mode {
    const char* name;
    bool progressive;
  };
  const Mode modes[] = {{"fixed", false}, {"progressive", true}};

  std::vector<ProtocolRun> results(2 * cfg.eval_seeds);
  parallel_for(2 * cfg.eval_seeds, cfg.workers, [&](std::size_t i) {
    const Mode& mode = modes[i / cfg.eval_seeds];
    const std::size_t s = i % cfg.eval_seeds;
    RegularizerConfig reg = cfg.train.reg;
    reg.kind = RegularizerConfig::Kind::Pdl;
    reg.progressive = mode.progressive;
    results[i] = run_paired_holdout(ds, cfg, reg, s, /*want_localization=*/true);
  });

  std::ofstream table(cfg.output_dir + "/ablation.csv");
  table << "mode,acc_mean,acc_std,loc_mean,acc_per_seed,loc_per_seed\n";
  std::ofstream rec(cfg.output_dir + "/records.txt");
  for (std::size_t m = 0; m < 2; ++m) {
    detail::MethodResult row;
    row.method = modes[m].name;
    std::string loc_col;
    for (std::size_t s = 0; s < cfg.eval_seeds; ++s) {
      const ProtocolRun& run = results[m * cfg.eval_seeds + s];
      row.seed_accs.push_back(run.test.accuracy);
      row.seed_aucs.push_back(run.test.auc);
      row.seed_locs.push_back(run.localization);
      if (s) loc_col += ';';
      loc_col += detail::fmt_metric_opt(run.localization);
      std::vector<double> rate_curve;
      for (const auto& e : run.history.epochs) rate_curve.push_back(e.global_rate);
      rec << "mode=" << modes[m].name << " seed_index=" << s
          << " acc=" << detail::fmt_metric(run.test.accuracy)
          << " auc=" << detail::fmt_metric_opt(run.test.auc)
          << " loc=" << detail::fmt_metric_opt(run.localization)
          << " rate_curve=" << detail::fmt_curve(rate_curve) << "\n";
    }
    table << row.method << ',' << detail::fmt_metric(row.acc_mean()) << ','
          << detail::fmt_metric(row.acc_std()) << ','
          << detail::fmt_metric_opt(row.loc_mean()) << ','
          << detail::per_seed_column(row.seed_accs) << ',' << loc_col << "\n";
  }
  detail::write_manifest(cfg, "scheduler-ablation");
  return 0;
}

// 3x3 grid of scheduler kind x rate-assignment kind.
inline int cmd_sweep_interpolation(const ExperimentConfig& cfg) {
  const BagDataset ds = load_experiment_dataset(cfg);
  std::filesystem::create_directories(cfg.output_dir);

  const InterpMethod kinds[] = {InterpMethod::Log, InterpMethod::Cos,
                                InterpMethod::Exp};
  struct Cell {
    InterpMethod sched, rate;
  };
  std::vector<Cell> cells;
  for (auto sk : kinds)
    for (auto rk : kinds) cells.push_back({sk, rk});

  std::vector<ProtocolRun> results(cells.size() * cfg.eval_seeds);
  parallel_for(results.size(), cfg.workers, [&](std::size_t i) {
    const Cell& cell = cells[i / cfg.eval_seeds];
    const std::size_t s = i % cfg.eval_seeds;
    RegularizerConfig reg = cfg.train.reg;
    reg.kind = RegularizerConfig::Kind::Pdl;
    reg.progressive = true;
    reg.sched_interp.method = cell.sched;
    reg.rate_interp.method = cell.rate;
    results[i] = run_paired_holdout(ds, cfg, reg, s, false);
  });

  std::ofstream table(cfg.output_dir + "/interpolation.csv");
  table << "scheduler,rate_assignment,acc_mean,acc_std,auc_mean\n";
  for (std::size_t c = 0; c < cells.size(); ++c) {
    detail::MethodResult row;
    for (std::size_t s = 0; s < cfg.eval_seeds; ++s) {
      const ProtocolRun& run = results[c * cfg.eval_seeds + s];
      row.seed_accs.push_back(run.test.accuracy);
      row.seed_aucs.push_back(run.test.auc);
    }
    table << interp_method_name(cells[c].sched) << ','
          << interp_method_name(cells[c].rate) << ','
          << detail::fmt_metric(row.acc_mean()) << ','
          << detail::fmt_metric(row.acc_std()) << ','
          << detail::fmt_metric_opt(row.auc_mean()) << "\n";
  }
  detail::write_manifest(cfg, "sweep-interpolation");
  return 0;
}

// Per-instance export: final-aggregator attention, APBA weight at each
// projector layer, and the instance label when known.
inline int cmd_export_attention(const ExperimentConfig& cfg) {
  if (cfg.params_path.empty())
    throw std::invalid_argument("export-attention requires eval.params_path");
  const BagDataset ds = load_experiment_dataset(cfg);
  const ModelParams params = load_params(cfg.params_path);
  std::filesystem::create_directories(cfg.output_dir);

  std::vector<Bag> bags;
  if (cfg.standardize) {
    std::vector<std::size_t> all(ds.bags.size());
    std::iota(all.begin(), all.end(), 0);
    const FeatureStats st = fit_feature_stats(ds, all);
    for (const Bag& b : ds.bags) bags.push_back(standardize_bag(b, st));
  } else {
    bags = ds.bags;
  }

  const std::size_t n_layers = params.projector.layers.size();
  std::ofstream out(cfg.output_dir + "/attention.csv");
  out << "bag_id,instance_index,attention";
  for (std::size_t i = 0; i < n_layers; ++i) out << ",apba_l" << i;
  out << ",instance_label\n";

  Rng unused(0);
  for (const Bag& bag : bags) {
    const ForwardTrace trace = forward(bag.instances, params, {}, false, unused);
    std::vector<std::vector<double>> layer_apba;
    for (std::size_t i = 0; i < n_layers; ++i)
      layer_apba.push_back(apba(trace.post[i]));
    for (std::size_t k = 0; k < bag.size(); ++k) {
      out << bag.id << ',' << k << ',' << detail::fmt_real(trace.alpha[k]);
      for (std::size_t i = 0; i < n_layers; ++i)
        out << ',' << detail::fmt_real(layer_apba[i][k]);
      const int y = bag.instance_labels.empty() ? kLabelUnknown : bag.instance_labels[k];
      out << ',';
      if (y == kLabelUnknown) out << '?';
      else out << y;
      out << "\n";
    }
  }
  detail::write_manifest(cfg, "export-attention");
  return 0;
}

}  // namespace milpdl
