#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "milpdl/data.hpp"
#include "milpdl/rng.hpp"

using namespace milpdl;

static const std::string kFixtures = MILPDL_FIXTURE_DIR;

TEST_CASE("bag_label_oracle is the OR of instance labels") {
  CHECK(bag_label_oracle({0, 0, 0}) == 0);
  CHECK(bag_label_oracle({0, 1, 0}) == 1);
  CHECK_THROWS_AS(bag_label_oracle({}), std::invalid_argument);
  CHECK_THROWS_AS(bag_label_oracle({0, 2}), std::invalid_argument);

  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> labels(30);
    int any = 0;
    for (int& y : labels) {
      y = rng.bernoulli(0.2) ? 1 : 0;
      any |= y;
    }
    CHECK(bag_label_oracle(labels) == any);
  }
}

TEST_CASE("synth_bags: witness rate 1 labels every instance of positive bags") {
  SynthConfig cfg;
  cfg.n_bags = 40;
  cfg.feature_dim = 5;
  cfg.witness_rate = 1.0;
  Rng rng(2);
  const BagDataset ds = synth_bags(cfg, rng);
  for (const Bag& bag : ds.bags) {
    if (bag.label != 1) continue;
    for (int y : bag.instance_labels) CHECK(y == 1);
  }
}

TEST_CASE("synth_bags satisfies the bag-label identity everywhere") {
  SynthConfig cfg;
  cfg.n_bags = 200;
  cfg.feature_dim = 4;
  cfg.witness_rate = 0.1;
  Rng rng(3);
  const BagDataset ds = synth_bags(cfg, rng);
  REQUIRE(ds.bags.size() == 200);
  std::set<std::string> ids;
  for (const Bag& bag : ds.bags) {
    REQUIRE(bag.size() >= 1);
    REQUIRE(bag.fully_labeled());
    CHECK(bag_label_oracle(bag.instance_labels) == bag.label);
    CHECK(bag.instances.all_finite());
    ids.insert(bag.id);
  }
  CHECK(ids.size() == ds.bags.size());
}

TEST_CASE("synth_bags mean bag size matches the configured mean") {
  SynthConfig cfg;
  cfg.n_bags = 2000;
  cfg.feature_dim = 2;
  cfg.mean_bag_size = 20.0;
  cfg.bag_size_std = 2.0;
  Rng rng(4);
  const BagDataset ds = synth_bags(cfg, rng);
  double sum = 0.0;
  for (const Bag& bag : ds.bags) sum += static_cast<double>(bag.size());
  CHECK(std::abs(sum / 2000.0 - 20.0) < 0.15);
}

TEST_CASE("synth_bags is seed-deterministic") {
  SynthConfig cfg;
  cfg.n_bags = 30;
  cfg.feature_dim = 3;
  Rng r1(55), r2(55);
  const BagDataset a = synth_bags(cfg, r1);
  const BagDataset b = synth_bags(cfg, r2);
  REQUIRE(a.bags.size() == b.bags.size());
  for (std::size_t i = 0; i < a.bags.size(); ++i) {
    CHECK(a.bags[i].id == b.bags[i].id);
    CHECK(a.bags[i].label == b.bags[i].label);
    CHECK(a.bags[i].instances.data() == b.bags[i].instances.data());
  }
}

TEST_CASE("synth_bags validates its config") {
  SynthConfig cfg;
  cfg.witness_rate = 0.0;
  Rng rng(5);
  CHECK_THROWS_AS(synth_bags(cfg, rng), std::invalid_argument);
  cfg = SynthConfig{};
  cfg.mean_bag_size = 0.0;
  CHECK_THROWS_AS(synth_bags(cfg, rng), std::invalid_argument);
}

TEST_CASE("load_bags_csv round-trips the toy fixture") {
  const BagDataset ds = load_bags_csv(kFixtures + "/toy_bags.csv");
  REQUIRE(ds.bags.size() == 2);
  REQUIRE(ds.feature_dim == 3);

  const Bag& a = ds.bags[0];
  CHECK(a.id == "bag-a");
  CHECK(a.label == 1);
  REQUIRE(a.size() == 2);
  CHECK(a.instances(0, 0) == 0.5);
  CHECK(a.instances(0, 1) == -1.25);
  CHECK(a.instances(0, 2) == 3.0);
  CHECK(a.instances(1, 0) == 2.5);
  CHECK(a.instances(1, 1) == 0.125);
  CHECK(a.instances(1, 2) == -4.0);
  CHECK(a.instance_labels == std::vector<int>{0, 1});

  const Bag& b = ds.bags[1];
  CHECK(b.id == "bag-b");
  CHECK(b.label == 0);
  REQUIRE(b.size() == 1);
  CHECK(b.instance_labels == std::vector<int>{0});
}

namespace {

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

}  // namespace

TEST_CASE("load_bags_csv reports the offending line on malformed input") {
  const std::string path = "bad_rows.csv";

  write_file(path, "bag_id,instance_label,label,f0,f1\na,0,0,1.0\n");
  try {
    load_bags_csv(path);
    FAIL("expected error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }

  write_file(path, "bag_id,instance_label,label,f0\na,0,0,1.0\na,0,0,oops\n");
  try {
    load_bags_csv(path);
    FAIL("expected error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }

  write_file(path, "bag_id,instance_label,label,f0\na,0,2,1.0\n");
  CHECK_THROWS_AS(load_bags_csv(path), std::runtime_error);

  write_file(path, "bag_id,instance_label,label,f0\na,maybe,1,1.0\n");
  CHECK_THROWS_AS(load_bags_csv(path), std::runtime_error);

  write_file(path, "bag_id,instance_label,label,f0\na,0,1,1.0\na,0,0,2.0\n");
  CHECK_THROWS_AS(load_bags_csv(path), std::runtime_error);

  // Eq-1 violation: positive bag whose known instance labels are all zero.
  write_file(path, "bag_id,instance_label,label,f0\na,0,1,1.0\n");
  CHECK_THROWS_AS(load_bags_csv(path), std::runtime_error);

  write_file(path, "wrong,header,here,f0\n");
  CHECK_THROWS_AS(load_bags_csv(path), std::runtime_error);

  CHECK_THROWS_AS(load_bags_csv("does_not_exist.csv"), std::runtime_error);
  std::remove(path.c_str());
}

TEST_CASE("save_bags_csv / load_bags_csv round-trip a synthetic dataset") {
  SynthConfig cfg;
  cfg.n_bags = 12;
  cfg.feature_dim = 4;
  Rng rng(6);
  const BagDataset ds = synth_bags(cfg, rng);
  const std::string path = "roundtrip.csv";
  save_bags_csv(ds, path);
  const BagDataset back = load_bags_csv(path);
  REQUIRE(back.bags.size() == ds.bags.size());
  for (std::size_t i = 0; i < ds.bags.size(); ++i) {
    CHECK(back.bags[i].id == ds.bags[i].id);
    CHECK(back.bags[i].label == ds.bags[i].label);
    CHECK(back.bags[i].instance_labels == ds.bags[i].instance_labels);
    CHECK(back.bags[i].instances.data() == ds.bags[i].instances.data());
  }
  std::remove(path.c_str());
}

TEST_CASE("kfold_split stratifies a tiny balanced dataset") {
  SynthConfig cfg;
  cfg.n_bags = 4;
  cfg.feature_dim = 2;
  Rng rng(7);
  const BagDataset ds = synth_bags(cfg, rng);
  const auto folds = kfold_split(ds, 2, 123);
  REQUIRE(folds.size() == 2);
  for (const auto& [train, test] : folds) {
    REQUIRE(test.size() == 2);
    int pos = 0;
    for (std::size_t i : test) pos += ds.bags[i].label;
    CHECK(pos == 1);
  }
}

TEST_CASE("kfold_split is a partition and is seed-deterministic") {
  SynthConfig cfg;
  cfg.n_bags = 37;
  cfg.feature_dim = 2;
  Rng rng(8);
  const BagDataset ds = synth_bags(cfg, rng);
  const auto folds = kfold_split(ds, 5, 99);
  std::set<std::size_t> seen;
  for (const auto& [train, test] : folds) {
    for (std::size_t i : test) {
      CHECK(seen.count(i) == 0);
      seen.insert(i);
    }
    std::set<std::size_t> train_set(train.begin(), train.end());
    for (std::size_t i : test) CHECK(train_set.count(i) == 0);
    CHECK(train.size() + test.size() == ds.bags.size());
  }
  CHECK(seen.size() == ds.bags.size());

  const auto again = kfold_split(ds, 5, 99);
  for (std::size_t f = 0; f < folds.size(); ++f) {
    CHECK(folds[f].first == again[f].first);
    CHECK(folds[f].second == again[f].second);
  }
  const auto other = kfold_split(ds, 5, 100);
  bool differs = false;
  for (std::size_t f = 0; f < folds.size(); ++f)
    differs |= folds[f].second != other[f].second;
  CHECK(differs);
}

TEST_CASE("kfold_split validates k") {
  SynthConfig cfg;
  cfg.n_bags = 4;
  cfg.feature_dim = 2;
  Rng rng(9);
  const BagDataset ds = synth_bags(cfg, rng);
  CHECK_THROWS_AS(kfold_split(ds, 1, 0), std::invalid_argument);
  CHECK_THROWS_AS(kfold_split(ds, 5, 0), std::invalid_argument);
}

TEST_CASE("feature standardization normalizes the fitted bags") {
  SynthConfig cfg;
  cfg.n_bags = 50;
  cfg.feature_dim = 6;
  cfg.positive_mean = 3.0;
  Rng rng(10);
  const BagDataset ds = synth_bags(cfg, rng);
  std::vector<std::size_t> idx(ds.bags.size());
  std::iota(idx.begin(), idx.end(), 0);
  const FeatureStats st = fit_feature_stats(ds, idx);

  double count = 0.0;
  std::vector<double> mean(6, 0.0), var(6, 0.0);
  for (std::size_t i : idx) {
    const Bag z = standardize_bag(ds.bags[i], st);
    for (std::size_t r = 0; r < z.size(); ++r)
      for (std::size_t c = 0; c < 6; ++c) {
        mean[c] += z.instances(r, c);
        var[c] += z.instances(r, c) * z.instances(r, c);
      }
    count += static_cast<double>(z.size());
  }
  for (std::size_t c = 0; c < 6; ++c) {
    CHECK(std::abs(mean[c] / count) < 1e-9);
    CHECK(std::abs(var[c] / count - 1.0) < 1e-9);
  }
}
