#include "semu/metrics.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "semu/data.hpp"
#include "semu/errors.hpp"
#include "semu/nn.hpp"
#include "semu/rng.hpp"

using namespace semu;

namespace {

// Logits == inputs: dense layer with identity weight and zero bias.
Model passthrough_model(std::size_t num_classes) {
  LayerSpec spec;
  spec.kind = LayerKind::dense;
  spec.activation = Activation::none;
  spec.in_dim = num_classes;
  spec.out_dim = num_classes;
  Model m = init_model({spec}, num_classes, 0);
  m.layers[0].weight = Matrix::identity(num_classes);
  m.layers[0].bias.assign(num_classes, 0.0);
  return m;
}

Dataset one_hot_dataset(const std::vector<int>& labels, std::size_t num_classes) {
  Dataset d;
  d.num_classes = num_classes;
  d.x = Matrix(labels.size(), num_classes);
  d.y = labels;
  for (std::size_t i = 0; i < labels.size(); ++i)
    d.x(i, static_cast<std::size_t>(labels[i])) = 1.0;
  return d;
}

}  // namespace

TEST(Accuracy, HandCases) {
  Model m = passthrough_model(3);

  Dataset perfect = one_hot_dataset({0, 1, 2, 1}, 3);
  EXPECT_DOUBLE_EQ(accuracy(m, perfect), 100.0);

  // Shift every one-hot to the wrong class.
  Dataset wrong = perfect;
  wrong.y = {1, 2, 0, 2};
  EXPECT_DOUBLE_EQ(accuracy(m, wrong), 0.0);

  Dataset mixed = perfect;
  mixed.y = {0, 1, 2, 0};  // 3 of 4 correct
  EXPECT_DOUBLE_EQ(accuracy(m, mixed), 75.0);
}

TEST(Accuracy, TiesGoToLowestIndex) {
  Model m = passthrough_model(3);
  Dataset d;
  d.num_classes = 3;
  d.x = Matrix(2, 3);
  // Row 0 ties classes 0 and 1; row 1 ties all three.
  d.x(0, 0) = 1.0;
  d.x(0, 1) = 1.0;
  d.y = {0, 0};
  EXPECT_DOUBLE_EQ(accuracy(m, d), 100.0);
  d.y = {1, 1};
  EXPECT_DOUBLE_EQ(accuracy(m, d), 0.0);
}

TEST(Accuracy, EmptyAndMismatchedInputsThrow) {
  Model m = passthrough_model(2);
  Dataset empty;
  empty.num_classes = 2;
  empty.x = Matrix(0, 2);
  EXPECT_THROW(accuracy(m, empty), InvalidInputError);
  EXPECT_THROW(accuracy(m, Matrix(2, 2), std::vector<int>{0}), InvalidInputError);
}

TEST(ComputeUa, ComplementOfAccuracy) {
  Model m = passthrough_model(4);
  // 12 of 17 correct: accuracy is a non-terminating binary fraction.
  std::vector<int> labels(17, 0);
  Dataset d = one_hot_dataset(labels, 4);
  for (std::size_t i = 12; i < 17; ++i) d.y[i] = 1;  // mispredicted
  double acc = accuracy(m, d);
  double ua = compute_ua(m, d);
  EXPECT_DOUBLE_EQ(ua, 100.0 - acc);
  EXPECT_DOUBLE_EQ(ua + acc, 100.0);

  Dataset empty;
  empty.num_classes = 4;
  empty.x = Matrix(0, 4);
  EXPECT_THROW(compute_ua(m, empty), InvalidInputError);
}

TEST(ComputeUa, FormattingAnchor) {
  EXPECT_EQ(format_pct(100.0 - 73.53), "26.47");
  EXPECT_EQ(format_pct(0.0), "0.00");
  EXPECT_EQ(format_pct(100.0 * 29.0 / 5400.0), "0.54");
}

TEST(MiaAttacker, SeparatedPoolsAreClassifiedPerfectly) {
  std::vector<double> members, nonmembers;
  Rng rng(7);
  for (int i = 0; i < 60; ++i) members.push_back(0.1 + 0.02 * rng.normal());
  for (int i = 0; i < 60; ++i) nonmembers.push_back(2.0 + 0.02 * rng.normal());

  MiaAttacker a = train_mia_attacker(members, nonmembers);
  EXPECT_LT(a.weight, 0.0);  // higher loss means less likely member
  EXPECT_DOUBLE_EQ(a.balanced_accuracy(members, nonmembers), 100.0);
  EXPECT_TRUE(a.predicts_member(0.1));
  EXPECT_FALSE(a.predicts_member(2.0));
}

TEST(MiaAttacker, SymmetricPoolsPutBoundaryAtMidpoint) {
  // Mirror-image pools around 1.0: by symmetry the decision boundary sits at
  // the shared mean, so points just below it read member, just above read not.
  std::vector<double> members, nonmembers;
  for (int i = 0; i < 50; ++i) {
    double off = 0.5 + 0.004 * i;
    members.push_back(1.0 - off);
    nonmembers.push_back(1.0 + off);
  }
  MiaAttacker a = train_mia_attacker(members, nonmembers);
  EXPECT_NEAR(a.bias, 0.0, 1e-9);
  EXPECT_TRUE(a.predicts_member(0.9));
  EXPECT_FALSE(a.predicts_member(1.1));
}

TEST(MiaAttacker, DegenerateIdenticalPools) {
  std::vector<double> constant(20, 1.5);
  MiaAttacker a = train_mia_attacker(constant, constant);
  EXPECT_NEAR(a.weight, 0.0, 1e-12);
  EXPECT_NEAR(a.bias, 0.0, 1e-12);
  EXPECT_TRUE(a.predicts_member(1.5));  // 0.5 probability rounds to member
  EXPECT_DOUBLE_EQ(a.balanced_accuracy(constant, constant), 50.0);
}

TEST(MiaAttacker, BeatsCoinFlipOnOverlappingPools) {
  Rng rng(11);
  std::vector<double> members, nonmembers;
  for (int i = 0; i < 200; ++i) members.push_back(1.0 + 0.5 * rng.normal());
  for (int i = 0; i < 200; ++i) nonmembers.push_back(1.6 + 0.5 * rng.normal());
  MiaAttacker a = train_mia_attacker(members, nonmembers);
  EXPECT_GE(a.balanced_accuracy(members, nonmembers), 50.0);
  EXPECT_GT(a.balanced_accuracy(members, nonmembers), 60.0);  // real signal here
}

TEST(MiaAttacker, EmptyPoolThrows) {
  std::vector<double> some(3, 1.0);
  EXPECT_THROW(train_mia_attacker({}, some), InvalidInputError);
  EXPECT_THROW(train_mia_attacker(some, {}), InvalidInputError);
}

TEST(MiaScore, HandAnchors) {
  std::vector<double> members, nonmembers;
  Rng rng(3);
  for (int i = 0; i < 40; ++i) members.push_back(0.1 + 0.02 * rng.normal());
  for (int i = 0; i < 40; ++i) nonmembers.push_back(2.0 + 0.02 * rng.normal());

  std::vector<double> all_far = {2.1, 1.9, 2.0};
  EXPECT_DOUBLE_EQ(mia_score_from_features(members, nonmembers, all_far, 0), 100.0);

  std::vector<double> all_near = {0.1, 0.12, 0.08};
  EXPECT_DOUBLE_EQ(mia_score_from_features(members, nonmembers, all_near, 0), 0.0);

  std::vector<double> three_of_four = {0.1, 2.0, 2.0, 2.0};
  EXPECT_DOUBLE_EQ(mia_score_from_features(members, nonmembers, three_of_four, 0), 75.0);
}

TEST(MiaScore, BalancedSubsamplingIgnoresMajoritySkew) {
  // 500 members vs 10 nonmembers; identical distributions. A prior-following
  // attacker would call everything member (score 0 regardless of input); the
  // balanced one stays at coin-flip, calling the tied probability member.
  std::vector<double> members(500), nonmembers(10);
  Rng rng(5);
  for (auto& v : members) v = 1.0 + 0.3 * rng.normal();
  for (auto& v : nonmembers) v = 1.0 + 0.3 * rng.normal();
  double score = mia_score_from_features(members, nonmembers, {1.0, 1.0}, 1);
  EXPECT_GE(score, 0.0);
  EXPECT_LE(score, 100.0);

  // Determinism per seed.
  Rng rng2(99);
  std::vector<double> forget(30);
  for (auto& v : forget) v = 1.0 + 0.3 * rng2.normal();
  double s1 = mia_score_from_features(members, nonmembers, forget, 42);
  double s2 = mia_score_from_features(members, nonmembers, forget, 42);
  EXPECT_DOUBLE_EQ(s1, s2);
}

TEST(ComputeMia, GlueAndDeterminism) {
  BlobsDataset blobs = make_blobs(4, 40, 2, 6.0, 1.0, 21);
  ForgetSpec spec;
  spec.kind = ForgetKind::class_wise;
  spec.class_label = 1;
  DatasetSplit split = split_forget(blobs.train, blobs.test, spec, 3);

  LayerSpec l0, l1;
  l0.kind = LayerKind::dense;
  l0.activation = Activation::relu;
  l0.in_dim = 2;
  l0.out_dim = 16;
  l1.kind = LayerKind::dense;
  l1.activation = Activation::none;
  l1.in_dim = 16;
  l1.out_dim = 4;
  Model m = init_model({l0, l1}, 4, 1);
  TrainOptions opt;
  opt.epochs = 20;
  opt.lr = 0.01;
  opt.seed = 2;
  train(m, split.train.x, split.train.y, opt);

  double s1 = compute_mia(m, split.remain_set(), split.forget_set(), split.test, 7);
  double s2 = compute_mia(m, split.remain_set(), split.forget_set(), split.test, 7);
  EXPECT_DOUBLE_EQ(s1, s2);
  EXPECT_GE(s1, 0.0);
  EXPECT_LE(s1, 100.0);

  Dataset empty;
  empty.num_classes = 4;
  empty.x = Matrix(0, 2);
  EXPECT_THROW(compute_mia(m, empty, split.forget_set(), split.test, 7),
               InvalidInputError);
  EXPECT_THROW(compute_mia(m, split.remain_set(), empty, split.test, 7),
               InvalidInputError);
  EXPECT_THROW(compute_mia(m, split.remain_set(), split.forget_set(), empty, 7),
               InvalidInputError);
}

namespace {

struct ReportFixture {
  DatasetSplit split;
  Model model;

  ReportFixture() {
    BlobsDataset blobs = make_blobs(4, 40, 2, 6.0, 1.0, 33);
    ForgetSpec spec;
    spec.kind = ForgetKind::class_wise;
    spec.class_label = 2;
    split = split_forget(blobs.train, blobs.test, spec, 5);

    LayerSpec l0, l1;
    l0.kind = LayerKind::dense;
    l0.activation = Activation::relu;
    l0.in_dim = 2;
    l0.out_dim = 16;
    l1.kind = LayerKind::dense;
    l1.activation = Activation::none;
    l1.in_dim = 16;
    l1.out_dim = 4;
    model = init_model({l0, l1}, 4, 4);
    TrainOptions opt;
    opt.epochs = 15;
    opt.lr = 0.01;
    opt.seed = 6;
    train(model, split.train.x, split.train.y, opt);
  }
};

}  // namespace

TEST(Report, BuildPopulatesAllMetrics) {
  ReportFixture f;
  UnlearnReport r = build_report(f.model, f.split, 29, 5400, "semu", "class_wise",
                                 0.9, 42, 7);
  EXPECT_EQ(r.method, "semu");
  EXPECT_EQ(r.mode, "class_wise");
  EXPECT_DOUBLE_EQ(r.gamma, 0.9);
  EXPECT_EQ(r.seed, 42u);
  EXPECT_DOUBLE_EQ(r.metrics.tparams_pct, 100.0 * 29.0 / 5400.0);
  EXPECT_EQ(format_pct(r.metrics.tparams_pct), "0.54");
  for (double v : {r.metrics.ua, r.metrics.ra, r.metrics.ta, r.metrics.mia}) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 100.0);
  }
  EXPECT_DOUBLE_EQ(r.metrics.ua, 100.0 - accuracy(f.model, f.split.forget_set()));
  EXPECT_FALSE(r.deltas_vs_retrain.has_value());
}

TEST(Report, DeltasAgainstSelfAreZero) {
  ReportFixture f;
  UnlearnReport base = build_report(f.model, f.split, 29, 5400, "retrain",
                                    "class_wise", 0.9, 42, 7);
  UnlearnReport r = build_report(f.model, f.split, 29, 5400, "semu", "class_wise",
                                 0.9, 42, 7, &base);
  ASSERT_TRUE(r.deltas_vs_retrain.has_value());
  EXPECT_DOUBLE_EQ(r.deltas_vs_retrain->ua, 0.0);
  EXPECT_DOUBLE_EQ(r.deltas_vs_retrain->ra, 0.0);
  EXPECT_DOUBLE_EQ(r.deltas_vs_retrain->ta, 0.0);
  EXPECT_DOUBLE_EQ(r.deltas_vs_retrain->mia, 0.0);
  EXPECT_DOUBLE_EQ(r.deltas_vs_retrain->tparams_pct, 0.0);
  EXPECT_EQ(format_pct(r.deltas_vs_retrain->ua), "0.00");
}

TEST(Report, CountValidation) {
  ReportFixture f;
  EXPECT_THROW(build_report(f.model, f.split, 1, 0, "m", "x", 0.9, 1, 1), ConfigError);
  EXPECT_THROW(build_report(f.model, f.split, 10, 9, "m", "x", 0.9, 1, 1), ConfigError);
}

TEST(Report, JsonRoundTripAndDeterminism) {
  ReportFixture f;
  UnlearnReport base = build_report(f.model, f.split, 29, 5400, "retrain",
                                    "class_wise", 0.9, 42, 7);
  UnlearnReport r = build_report(f.model, f.split, 64, 5400, "semu", "class_wise",
                                 0.9, 42, 7, &base);
  std::string j1 = report_to_json(r);
  std::string j2 = report_to_json(build_report(f.model, f.split, 64, 5400, "semu",
                                               "class_wise", 0.9, 42, 7, &base));
  EXPECT_EQ(j1, j2);  // byte-identical rerun

  UnlearnReport back = report_from_json(j1);
  EXPECT_EQ(back.method, r.method);
  EXPECT_EQ(back.mode, r.mode);
  EXPECT_DOUBLE_EQ(back.gamma, r.gamma);
  EXPECT_EQ(back.seed, r.seed);
  EXPECT_DOUBLE_EQ(back.metrics.ua, r.metrics.ua);
  EXPECT_DOUBLE_EQ(back.metrics.mia, r.metrics.mia);
  ASSERT_TRUE(back.deltas_vs_retrain.has_value());
  EXPECT_DOUBLE_EQ(back.deltas_vs_retrain->ra, r.deltas_vs_retrain->ra);
  EXPECT_EQ(report_to_json(back), j1);

  // Key order and the null wallclock are part of the format.
  EXPECT_NE(j1.find("\"method\""), std::string::npos);
  EXPECT_NE(j1.find("\"wallclock_s\": null"), std::string::npos);
  EXPECT_LT(j1.find("\"method\""), j1.find("\"mode\""));
  EXPECT_LT(j1.find("\"metrics\""), j1.find("\"deltas_vs_retrain\""));
}

TEST(Report, ParseErrors) {
  EXPECT_THROW(report_from_json("not json"), InvalidInputError);
  EXPECT_THROW(report_from_json("[]"), InvalidInputError);
  EXPECT_THROW(report_from_json("{\"method\":\"m\"}"), InvalidInputError);
  std::string bad_metrics =
      "{\"method\":\"m\",\"mode\":\"x\",\"gamma\":0.9,\"seed\":1,"
      "\"metrics\":{\"ua\":1,\"ra\":2,\"ta\":3,\"mia\":4},"
      "\"deltas_vs_retrain\":null,\"wallclock_s\":null}";
  EXPECT_THROW(report_from_json(bad_metrics), InvalidInputError);
}

TEST(Report, SaveLoadAndIoErrors) {
  ReportFixture f;
  UnlearnReport r = build_report(f.model, f.split, 29, 5400, "ft", "random_fraction",
                                 0.0, 9, 7);
  std::string path = testing::TempDir() + "/report_roundtrip.json";
  save_report(r, path);
  UnlearnReport back = load_report(path);
  EXPECT_EQ(report_to_json(back), report_to_json(r));
  EXPECT_THROW(load_report("/nonexistent/dir/report.json"), IoError);
  EXPECT_THROW(save_report(r, "/nonexistent/dir/report.json"), IoError);
}

TEST(Report, TableRendering) {
  UnlearnReport r;
  r.method = "semu";
  r.mode = "class_wise";
  r.gamma = 0.9;
  r.seed = 42;
  r.metrics.ua = 26.47;
  r.metrics.ra = 99.12;
  r.metrics.ta = 94.5;
  r.metrics.mia = 61.0;
  r.metrics.tparams_pct = 1.18;
  MetricValues d;  // zero deltas
  r.deltas_vs_retrain = d;
  std::string table = report_table(r);
  EXPECT_NE(table.find("UA       26.47 (0.00)"), std::string::npos);
  EXPECT_NE(table.find("TParams  1.18% (0.00)"), std::string::npos);
  EXPECT_NE(table.find("gamma    0.90"), std::string::npos);

  r.deltas_vs_retrain.reset();
  table = report_table(r);
  EXPECT_NE(table.find("UA       26.47\n"), std::string::npos);
  EXPECT_EQ(table.find("(0.00)"), std::string::npos);
}
