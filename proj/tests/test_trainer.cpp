#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "milpdl/metrics.hpp"
#include "milpdl/rng.hpp"
#include "milpdl/trainer.hpp"
#include "test_util.hpp"

using namespace milpdl;

namespace {

// O(n^2) pairwise comparison oracle, doubled counts to stay in integers.
std::optional<double> auc_pairwise(const std::vector<double>& scores,
                                   const std::vector<int>& labels) {
  std::int64_t numer2 = 0, n_pos = 0, n_neg = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] == 1) ++n_pos;
    else ++n_neg;
  }
  if (n_pos == 0 || n_neg == 0) return std::nullopt;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      if (scores[i] > scores[j]) numer2 += 2;
      else if (scores[i] == scores[j]) numer2 += 1;
    }
  }
  return static_cast<double>(numer2) / static_cast<double>(2 * n_pos * n_neg);
}

std::vector<const Bag*> bag_ptrs(const BagDataset& ds) {
  std::vector<const Bag*> out;
  for (const Bag& b : ds.bags) out.push_back(&b);
  return out;
}

}  // namespace

TEST_CASE("auc_rank: perfect, constant and degenerate predictors") {
  CHECK(*auc_rank({0.9, 0.8, 0.1, 0.2}, {1, 1, 0, 0}) == 1.0);
  CHECK(*auc_rank({0.5, 0.5, 0.5, 0.5}, {1, 0, 1, 0}) == 0.5);
  CHECK(!auc_rank({0.1, 0.9}, {1, 1}).has_value());
  CHECK(!auc_rank({0.1, 0.9}, {0, 0}).has_value());
  CHECK_THROWS_AS(auc_rank({0.1}, {2}), std::invalid_argument);
}

TEST_CASE("auc_rank equals the pairwise oracle exactly, ties included") {
  Rng rng(100);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 2 + rng.uniform_below(199);
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      // coarse grid forces plenty of ties
      scores[i] = static_cast<double>(rng.uniform_below(12)) / 11.0;
      labels[i] = rng.bernoulli(0.4) ? 1 : 0;
    }
    const auto fast = auc_rank(scores, labels);
    const auto slow = auc_pairwise(scores, labels);
    REQUIRE(fast.has_value() == slow.has_value());
    if (fast) CHECK(*fast == *slow);  // bit-identical
  }
}

TEST_CASE("train with zero learning rate leaves parameters untouched") {
  SynthConfig scfg;
  scfg.n_bags = 8;
  scfg.feature_dim = 5;
  Rng rng(1);
  const BagDataset ds = synth_bags(scfg, rng);

  ModelConfig mcfg;
  mcfg.input_dim = 5;
  mcfg.hidden_dims = {6, 4};
  mcfg.attention_dim = 4;
  Rng init(2);
  ModelParams params = init_params(mcfg, init);
  const auto before = flatten_params(params);

  TrainConfig tcfg;
  tcfg.epochs = 3;
  tcfg.optim.lr = 0.0;
  train(params, bag_ptrs(ds), tcfg);
  CHECK(flatten_params(params) == before);
}

TEST_CASE("a single small step on one bag reduces its loss") {
  SynthConfig scfg;
  scfg.n_bags = 2;
  scfg.feature_dim = 4;
  Rng rng(3);
  const BagDataset ds = synth_bags(scfg, rng);
  const Bag& bag = ds.bags[1];

  ModelConfig mcfg;
  mcfg.input_dim = 4;
  mcfg.hidden_dims = {5};
  mcfg.attention_dim = 3;
  Rng init(4);
  ModelParams params = init_params(mcfg, init);

  Rng fr(1);
  const double loss_before =
      bce_loss(forward(bag.instances, params, {}, false, fr).logit, bag.label);

  TrainConfig tcfg;
  tcfg.epochs = 1;
  tcfg.optim.lr = 1e-3;
  std::vector<const Bag*> one{&bag};
  const TrainHistory hist = train(params, one, tcfg);
  REQUIRE(hist.epochs.size() == 1);
  CHECK(hist.epochs[0].mean_loss == Catch::Approx(loss_before).epsilon(1e-12));

  const double loss_after =
      bce_loss(forward(bag.instances, params, {}, false, fr).logit, bag.label);
  CHECK(loss_after < loss_before);
}

TEST_CASE("training fits a separable synthetic dataset") {
  SynthConfig scfg;
  scfg.n_bags = 60;
  scfg.feature_dim = 8;
  scfg.mean_bag_size = 10.0;
  scfg.bag_size_std = 1.0;
  scfg.witness_rate = 0.5;
  scfg.positive_mean = 2.0;  // well separated
  Rng rng(5);
  const BagDataset ds = synth_bags(scfg, rng);

  ModelConfig mcfg;
  mcfg.input_dim = 8;
  mcfg.hidden_dims = {32, 16};
  mcfg.attention_dim = 16;
  Rng init(6);
  ModelParams params = init_params(mcfg, init);

  TrainConfig tcfg;
  tcfg.epochs = 40;
  tcfg.optim.lr = 5e-4;
  tcfg.seed = 7;
  train(params, bag_ptrs(ds), tcfg);
  const Metrics m = evaluate(params, bag_ptrs(ds));
  CHECK(m.accuracy >= 0.95);
}

TEST_CASE("PDL hooks follow the scheduler epoch by epoch") {
  SynthConfig scfg;
  scfg.n_bags = 6;
  scfg.feature_dim = 4;
  Rng rng(8);
  const BagDataset ds = synth_bags(scfg, rng);

  ModelConfig mcfg;
  mcfg.input_dim = 4;
  mcfg.hidden_dims = {5};
  mcfg.attention_dim = 3;
  Rng init(9);
  ModelParams params = init_params(mcfg, init);

  TrainConfig tcfg;
  tcfg.epochs = 10;
  tcfg.reg.kind = RegularizerConfig::Kind::Pdl;
  const TrainHistory hist = train(params, bag_ptrs(ds), tcfg);
  REQUIRE(hist.epochs.size() == 10);
  for (std::size_t t = 0; t < 10; ++t) {
    ScheduleState st;
    st.t = t;
    st.horizon = 10;
    st.p_max = tcfg.reg.p_max;
    st.interp = tcfg.reg.sched_interp;
    CHECK(hist.epochs[t].global_rate == scheduler_value(st));
  }
  CHECK(hist.epochs[0].global_rate == 0.0);
  CHECK(hist.epochs[9].global_rate == tcfg.reg.p_max);
}

TEST_CASE("fixed-threshold mode pins the global rate at P_max") {
  SynthConfig scfg;
  scfg.n_bags = 4;
  scfg.feature_dim = 3;
  Rng rng(10);
  const BagDataset ds = synth_bags(scfg, rng);
  ModelConfig mcfg;
  mcfg.input_dim = 3;
  mcfg.hidden_dims = {4};
  mcfg.attention_dim = 2;
  Rng init(11);
  ModelParams params = init_params(mcfg, init);

  TrainConfig tcfg;
  tcfg.epochs = 4;
  tcfg.reg.kind = RegularizerConfig::Kind::Pdl;
  tcfg.reg.progressive = false;
  const TrainHistory hist = train(params, bag_ptrs(ds), tcfg);
  for (const auto& e : hist.epochs) CHECK(e.global_rate == tcfg.reg.p_max);
}

TEST_CASE("non-finite loss aborts with a diagnostic") {
  SynthConfig scfg;
  scfg.n_bags = 2;
  scfg.feature_dim = 3;
  Rng rng(12);
  const BagDataset ds = synth_bags(scfg, rng);
  ModelConfig mcfg;
  mcfg.input_dim = 3;
  mcfg.hidden_dims = {4};
  mcfg.attention_dim = 2;
  Rng init(13);
  ModelParams params = init_params(mcfg, init);
  params.aggregator.classifier_b = std::numeric_limits<double>::quiet_NaN();

  TrainConfig tcfg;
  tcfg.epochs = 1;
  CHECK_THROWS_AS(train(params, bag_ptrs(ds), tcfg), TrainingDiverged);
}

TEST_CASE("train validates its inputs") {
  ModelConfig mcfg;
  mcfg.input_dim = 3;
  Rng init(14);
  ModelParams params = init_params(mcfg, init);
  TrainConfig tcfg;
  CHECK_THROWS_AS(train(params, {}, tcfg), std::invalid_argument);
  tcfg.epochs = 0;
  SynthConfig scfg;
  scfg.n_bags = 2;
  scfg.feature_dim = 3;
  Rng rng(15);
  const BagDataset ds = synth_bags(scfg, rng);
  CHECK_THROWS_AS(train(params, bag_ptrs(ds), tcfg), std::invalid_argument);
}

TEST_CASE("evaluate: constant predictor scores 0.5 on balanced data") {
  SynthConfig scfg;
  scfg.n_bags = 20;
  scfg.feature_dim = 4;
  Rng rng(16);
  const BagDataset ds = synth_bags(scfg, rng);
  ModelConfig mcfg;
  mcfg.input_dim = 4;
  mcfg.hidden_dims = {5};
  mcfg.attention_dim = 3;
  Rng init(17);
  ModelParams params = init_params(mcfg, init);
  std::fill(params.aggregator.classifier_w.begin(),
            params.aggregator.classifier_w.end(), 0.0);
  params.aggregator.classifier_b = 0.0;
  const Metrics m = evaluate(params, bag_ptrs(ds));
  CHECK(m.accuracy == 0.5);
  REQUIRE(m.auc.has_value());
  CHECK(*m.auc == 0.5);
}

TEST_CASE("evaluate: single-class dataset has undefined AUC") {
  SynthConfig scfg;
  scfg.n_bags = 6;
  scfg.feature_dim = 4;
  Rng rng(18);
  BagDataset ds = synth_bags(scfg, rng);
  std::vector<const Bag*> negatives;
  for (const Bag& b : ds.bags)
    if (b.label == 0) negatives.push_back(&b);
  ModelConfig mcfg;
  mcfg.input_dim = 4;
  mcfg.hidden_dims = {5};
  mcfg.attention_dim = 3;
  Rng init(19);
  const ModelParams params = init_params(mcfg, init);
  const Metrics m = evaluate(params, negatives);
  CHECK(!m.auc.has_value());
  CHECK(m.accuracy >= 0.0);
}

namespace {

// One-feature bags whose attention can be steered by hand-built weights.
BagDataset handmade_localization_dataset() {
  BagDataset ds;
  ds.feature_dim = 1;
  ds.name = "handmade";
  for (int b = 0; b < 4; ++b) {
    Bag bag;
    bag.id = "pos-" + std::to_string(b);
    bag.label = 1;
    bag.instances = Matrix(3, 1, {2.0, -2.0, -2.0});
    bag.instance_labels = {1, 0, 0};
    ds.bags.push_back(std::move(bag));
  }
  return ds;
}

ModelParams handmade_attention_model(double w1_value) {
  ModelParams p;
  p.aggregator.w1 = Matrix(1, 1, {w1_value});
  p.aggregator.w2 = Matrix(1, 1, {1.0});
  p.aggregator.classifier_w = {1.0};
  p.aggregator.classifier_b = 0.0;
  return p;
}

}  // namespace

TEST_CASE("localization_score: attention aligned with labels gives AUC 1") {
  const BagDataset ds = handmade_localization_dataset();
  const ModelParams p = handmade_attention_model(5.0);
  std::vector<const Bag*> ptrs;
  for (const Bag& b : ds.bags) ptrs.push_back(&b);
  const auto auc = localization_score(p, ptrs);
  REQUIRE(auc.has_value());
  CHECK(*auc == 1.0);
}

TEST_CASE("localization_score: uniform attention gives AUC 0.5") {
  const BagDataset ds = handmade_localization_dataset();
  const ModelParams p = handmade_attention_model(0.0);
  std::vector<const Bag*> ptrs;
  for (const Bag& b : ds.bags) ptrs.push_back(&b);
  const auto auc = localization_score(p, ptrs);
  REQUIRE(auc.has_value());
  CHECK(*auc == 0.5);
}

TEST_CASE("localization_score is undefined without labeled positive bags") {
  SynthConfig scfg;
  scfg.n_bags = 4;
  scfg.feature_dim = 2;
  Rng rng(20);
  BagDataset ds = synth_bags(scfg, rng);
  std::vector<const Bag*> negatives;
  for (const Bag& b : ds.bags)
    if (b.label == 0) negatives.push_back(&b);
  ModelConfig mcfg;
  mcfg.input_dim = 2;
  mcfg.hidden_dims = {3};
  mcfg.attention_dim = 2;
  Rng init(21);
  const ModelParams params = init_params(mcfg, init);
  CHECK(!localization_score(params, negatives).has_value());
}

TEST_CASE("stratified_holdout partitions and stratifies") {
  SynthConfig scfg;
  scfg.n_bags = 40;
  scfg.feature_dim = 2;
  Rng rng(22);
  const BagDataset ds = synth_bags(scfg, rng);
  const auto [train_idx, test_idx] = stratified_holdout(ds, 0.25, 5);
  CHECK(train_idx.size() + test_idx.size() == 40);
  int pos_test = 0;
  for (std::size_t i : test_idx) pos_test += ds.bags[i].label;
  CHECK(pos_test == 5);  // 25% of the 20 positives
  const auto again = stratified_holdout(ds, 0.25, 5);
  CHECK(again.first == train_idx);
  CHECK(again.second == test_idx);
}

TEST_CASE("run_cv_experiment: run accounting and determinism") {
  SynthConfig scfg;
  scfg.n_bags = 4;
  scfg.feature_dim = 3;
  scfg.mean_bag_size = 4.0;
  Rng rng(23);
  const BagDataset ds = synth_bags(scfg, rng);

  ModelConfig mcfg;
  mcfg.hidden_dims = {4};
  mcfg.attention_dim = 3;
  TrainConfig tcfg;
  tcfg.epochs = 2;
  tcfg.seed = 11;

  const CvSummary a = run_cv_experiment(ds, mcfg, tcfg, 2, 1);
  REQUIRE(a.runs.size() == 2);
  const CvSummary b = run_cv_experiment(ds, mcfg, tcfg, 2, 1);
  REQUIRE(b.runs.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(a.runs[i].seed == b.runs[i].seed);
    CHECK(a.runs[i].test.accuracy == b.runs[i].test.accuracy);
    CHECK(a.runs[i].loss_curve == b.runs[i].loss_curve);
  }
  CHECK(a.acc_mean == b.acc_mean);
}

TEST_CASE("run_cv_experiment gives identical results on a worker pool") {
  SynthConfig scfg;
  scfg.n_bags = 12;
  scfg.feature_dim = 3;
  scfg.mean_bag_size = 5.0;
  Rng rng(24);
  const BagDataset ds = synth_bags(scfg, rng);

  ModelConfig mcfg;
  mcfg.hidden_dims = {4};
  mcfg.attention_dim = 3;
  TrainConfig tcfg;
  tcfg.epochs = 2;
  tcfg.seed = 31;

  const CvSummary serial = run_cv_experiment(ds, mcfg, tcfg, 3, 2, true, 1);
  const CvSummary pooled = run_cv_experiment(ds, mcfg, tcfg, 3, 2, true, 2);
  REQUIRE(serial.runs.size() == pooled.runs.size());
  for (std::size_t i = 0; i < serial.runs.size(); ++i) {
    CHECK(serial.runs[i].test.accuracy == pooled.runs[i].test.accuracy);
    CHECK(serial.runs[i].loss_curve == pooled.runs[i].loss_curve);
  }
  CHECK(serial.acc_mean == pooled.acc_mean);
  CHECK(serial.acc_std_all == pooled.acc_std_all);
}
