// data.hpp
//
// Bag datasets: the Bag/BagDataset types, a synthetic Gaussian-mixture
// generator with known instance labels, CSV ingestion and export, stratified
// k-fold splitting, and per-feature standardization.
//
// CSV schema (UTF-8, header required):
//   bag_id,instance_label,label,f0..f{D-1}
// instance_label may be '?' for unknown; label is the bag label repeated on
// every row; rows of one bag need not be contiguous.

#pragma once

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "milpdl/matrix.hpp"
#include "milpdl/rng.hpp"

namespace milpdl {

constexpr int kLabelUnknown = -1;

struct Bag {
  std::string id;
  Matrix instances;                 // K x D
  int label = 0;                    // 0|1
  std::vector<int> instance_labels; // size K, entries 0|1|kLabelUnknown

  std::size_t size() const { return instances.rows(); }
  bool fully_labeled() const {
    if (instance_labels.empty()) return false;
    for (int y : instance_labels)
      if (y == kLabelUnknown) return false;
    return true;
  }
};

struct BagDataset {
  std::vector<Bag> bags;
  std::size_t feature_dim = 0;
  std::string name;
};

// Eq-style bag label: 1 iff any instance label is 1.
inline int bag_label_oracle(const std::vector<int>& instance_labels) {
  if (instance_labels.empty())
    throw std::invalid_argument("bag_label_oracle: empty label vector");
  for (int y : instance_labels) {
    if (y != 0 && y != 1)
      throw std::invalid_argument("bag_label_oracle: labels must be 0 or 1");
    if (y == 1) return 1;
  }
  return 0;
}

struct SynthConfig {
  std::size_t n_bags = 500;
  std::size_t feature_dim = 20;
  double mean_bag_size = 20.0;
  double bag_size_std = 2.0;
  double witness_rate = 0.1;      // fraction of positive instances in positive bags
  double positive_mean = 1.0;     // per-dimension mean of the positive component
  double negative_mean = 0.0;
  double covariance_scale = 1.0;  // isotropic stddev of both components
  std::uint64_t seed = 0;

  void validate() const {
    if (n_bags == 0) throw std::invalid_argument("SynthConfig: n_bags must be >= 1");
    if (feature_dim == 0)
      throw std::invalid_argument("SynthConfig: feature_dim must be >= 1");
    if (mean_bag_size < 1.0)
      throw std::invalid_argument("SynthConfig: mean_bag_size must be >= 1");
    if (bag_size_std < 0.0)
      throw std::invalid_argument("SynthConfig: bag_size_std must be >= 0");
    if (!(witness_rate > 0.0 && witness_rate <= 1.0))
      throw std::invalid_argument("SynthConfig: witness_rate must lie in (0, 1]");
    if (covariance_scale <= 0.0)
      throw std::invalid_argument("SynthConfig: covariance_scale must be > 0");
  }
};

// Balanced dataset of Gaussian-mixture bags: odd-indexed bags are positive
// and carry ceil(witness_rate * K) positive instances at shuffled positions.
// Bag sizes are round(N(mean, std)) clamped to >= 1.
inline BagDataset synth_bags(const SynthConfig& cfg, Rng& rng) {
  cfg.validate();
  BagDataset ds;
  ds.feature_dim = cfg.feature_dim;
  ds.name = "synth";
  ds.bags.reserve(cfg.n_bags);
  for (std::size_t b = 0; b < cfg.n_bags; ++b) {
    const long rounded = std::lround(rng.gaussian(cfg.mean_bag_size, cfg.bag_size_std));
    const std::size_t k = rounded < 1 ? 1 : static_cast<std::size_t>(rounded);
    const bool positive = (b % 2) == 1;

    std::vector<int> labels(k, 0);
    if (positive) {
      const std::size_t n_wit = static_cast<std::size_t>(
          std::ceil(cfg.witness_rate * static_cast<double>(k)));
      std::vector<std::size_t> pos_of(k);
      std::iota(pos_of.begin(), pos_of.end(), 0);
      rng.shuffle(pos_of);
      for (std::size_t i = 0; i < n_wit && i < k; ++i) labels[pos_of[i]] = 1;
    }

    Bag bag;
    char idbuf[32];
    std::snprintf(idbuf, sizeof(idbuf), "synth-%04zu", b);
    bag.id = idbuf;
    bag.label = positive ? 1 : 0;
    bag.instance_labels = labels;
    bag.instances = Matrix(k, cfg.feature_dim);
    for (std::size_t i = 0; i < k; ++i) {
      const double mu = labels[i] == 1 ? cfg.positive_mean : cfg.negative_mean;
      double* row = bag.instances.row_ptr(i);
      for (std::size_t c = 0; c < cfg.feature_dim; ++c)
        row[c] = rng.gaussian(mu, cfg.covariance_scale);
    }
    ds.bags.push_back(std::move(bag));
  }
  return ds;
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  fields.push_back(cur);
  return fields;
}

inline double parse_double_field(const std::string& s, std::size_t line_no,
                                 const std::string& what) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(v))
    throw std::runtime_error("line " + std::to_string(line_no) + ": bad " + what +
                             " value '" + s + "'");
  return v;
}

}  // namespace detail

inline BagDataset load_bags_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset file: " + path);

  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error(path + ": empty file, header required");
  const auto header = detail::split_csv_line(line);
  if (header.size() < 4 || header[0] != "bag_id" || header[1] != "instance_label" ||
      header[2] != "label")
    throw std::runtime_error(path + ": header must be bag_id,instance_label,label,f0..");
  const std::size_t dim = header.size() - 3;
  for (std::size_t c = 0; c < dim; ++c)
    if (header[3 + c] != "f" + std::to_string(c))
      throw std::runtime_error(path + ": feature column " + std::to_string(c) +
                               " must be named f" + std::to_string(c));

  struct Row {
    int instance_label;
    std::vector<double> features;
  };
  std::vector<std::string> bag_order;
  std::map<std::string, std::vector<Row>> rows_by_bag;
  std::map<std::string, int> label_by_bag;

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != header.size())
      throw std::runtime_error("line " + std::to_string(line_no) + ": expected " +
                               std::to_string(header.size()) + " fields, got " +
                               std::to_string(fields.size()));
    const std::string& bag_id = fields[0];
    int inst_label;
    if (fields[1] == "?") inst_label = kLabelUnknown;
    else if (fields[1] == "0") inst_label = 0;
    else if (fields[1] == "1") inst_label = 1;
    else
      throw std::runtime_error("line " + std::to_string(line_no) +
                               ": instance_label must be 0, 1 or '?', got '" +
                               fields[1] + "'");
    int bag_label;
    if (fields[2] == "0") bag_label = 0;
    else if (fields[2] == "1") bag_label = 1;
    else
      throw std::runtime_error("line " + std::to_string(line_no) +
                               ": label must be 0 or 1, got '" + fields[2] + "'");

    auto it = label_by_bag.find(bag_id);
    if (it == label_by_bag.end()) {
      label_by_bag[bag_id] = bag_label;
      bag_order.push_back(bag_id);
    } else if (it->second != bag_label) {
      throw std::runtime_error("line " + std::to_string(line_no) + ": bag '" +
                               bag_id + "' has inconsistent labels");
    }
    Row row;
    row.instance_label = inst_label;
    row.features.resize(dim);
    for (std::size_t c = 0; c < dim; ++c)
      row.features[c] =
          detail::parse_double_field(fields[3 + c], line_no, "feature f" + std::to_string(c));
    rows_by_bag[bag_id].push_back(std::move(row));
  }
  if (bag_order.empty()) throw std::runtime_error(path + ": no data rows");

  BagDataset ds;
  ds.feature_dim = dim;
  {
    const auto slash = path.find_last_of("/\\");
    ds.name = slash == std::string::npos ? path : path.substr(slash + 1);
  }
  for (const auto& id : bag_order) {
    const auto& rows = rows_by_bag[id];
    Bag bag;
    bag.id = id;
    bag.label = label_by_bag[id];
    bag.instances = Matrix(rows.size(), dim);
    bag.instance_labels.resize(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      bag.instance_labels[r] = rows[r].instance_label;
      std::copy(rows[r].features.begin(), rows[r].features.end(),
                bag.instances.row_ptr(r));
    }
    if (bag.fully_labeled() && bag_label_oracle(bag.instance_labels) != bag.label)
      throw std::runtime_error("bag '" + id +
                               "': bag label contradicts instance labels");
    ds.bags.push_back(std::move(bag));
  }
  return ds;
}

inline void save_bags_csv(const BagDataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write dataset file: " + path);
  out << "bag_id,instance_label,label";
  for (std::size_t c = 0; c < ds.feature_dim; ++c) out << ",f" << c;
  out << "\n";
  char buf[64];
  for (const auto& bag : ds.bags) {
    for (std::size_t r = 0; r < bag.size(); ++r) {
      out << bag.id << ',';
      const int y = bag.instance_labels.empty() ? kLabelUnknown : bag.instance_labels[r];
      if (y == kLabelUnknown) out << '?';
      else out << y;
      out << ',' << bag.label;
      const double* row = bag.instances.row_ptr(r);
      for (std::size_t c = 0; c < ds.feature_dim; ++c) {
        std::snprintf(buf, sizeof(buf), "%.17g", row[c]);
        out << ',' << buf;
      }
      out << "\n";
    }
  }
}

// Stratified k-fold indices: (train, test) per fold, disjoint, seeded.
inline std::vector<std::pair<std::vector<std::size_t>, std::vector<std::size_t>>>
kfold_split(const BagDataset& ds, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("kfold_split: k must be >= 2");
  if (k > ds.bags.size())
    throw std::invalid_argument("kfold_split: k exceeds number of bags");
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < ds.bags.size(); ++i)
    (ds.bags[i].label == 1 ? pos : neg).push_back(i);
  Rng rng(seed);
  {
    Rng rp = rng.fork("kfold/pos");
    rp.shuffle(pos);
    Rng rn = rng.fork("kfold/neg");
    rn.shuffle(neg);
  }
  std::vector<std::vector<std::size_t>> fold_test(k);
  for (std::size_t i = 0; i < pos.size(); ++i) fold_test[i % k].push_back(pos[i]);
  for (std::size_t i = 0; i < neg.size(); ++i) fold_test[i % k].push_back(neg[i]);

  std::vector<std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> folds;
  folds.reserve(k);
  for (std::size_t f = 0; f < k; ++f) {
    std::vector<std::size_t> test = fold_test[f];
    std::sort(test.begin(), test.end());
    std::vector<std::size_t> train;
    train.reserve(ds.bags.size() - test.size());
    for (std::size_t g = 0; g < k; ++g)
      if (g != f) train.insert(train.end(), fold_test[g].begin(), fold_test[g].end());
    std::sort(train.begin(), train.end());
    folds.emplace_back(std::move(train), std::move(test));
  }
  return folds;
}

// Per-feature mean/std fitted on a subset of bags (the training folds).
struct FeatureStats {
  std::vector<double> mean;
  std::vector<double> stddev;
};

inline FeatureStats fit_feature_stats(const BagDataset& ds,
                                      const std::vector<std::size_t>& bag_indices) {
  FeatureStats st;
  st.mean.assign(ds.feature_dim, 0.0);
  st.stddev.assign(ds.feature_dim, 0.0);
  std::size_t n = 0;
  for (std::size_t bi : bag_indices) {
    const auto& m = ds.bags[bi].instances;
    for (std::size_t r = 0; r < m.rows(); ++r) {
      const double* row = m.row_ptr(r);
      for (std::size_t c = 0; c < ds.feature_dim; ++c) st.mean[c] += row[c];
      ++n;
    }
  }
  if (n == 0) throw std::invalid_argument("fit_feature_stats: no instances");
  for (double& v : st.mean) v /= static_cast<double>(n);
  for (std::size_t bi : bag_indices) {
    const auto& m = ds.bags[bi].instances;
    for (std::size_t r = 0; r < m.rows(); ++r) {
      const double* row = m.row_ptr(r);
      for (std::size_t c = 0; c < ds.feature_dim; ++c) {
        const double dv = row[c] - st.mean[c];
        st.stddev[c] += dv * dv;
      }
    }
  }
  for (double& v : st.stddev) v = std::max(std::sqrt(v / static_cast<double>(n)), 1e-8);
  return st;
}

inline Bag standardize_bag(const Bag& bag, const FeatureStats& st) {
  Bag out = bag;
  for (std::size_t r = 0; r < out.instances.rows(); ++r) {
    double* row = out.instances.row_ptr(r);
    for (std::size_t c = 0; c < out.instances.cols(); ++c)
      row[c] = (row[c] - st.mean[c]) / st.stddev[c];
  }
  return out;
}

}  // namespace milpdl
