#include "semu/adapters.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>

#include "semu/data.hpp"
#include "semu/errors.hpp"
#include "semu/rng.hpp"

using semu::AdaptedModel;
using semu::GradientSet;
using semu::Matrix;
using semu::Model;
using semu::SemuConfig;

namespace {

semu::LayerSpec dense_spec(std::size_t in, std::size_t out,
                           semu::Activation act = semu::Activation::none) {
  semu::LayerSpec s;
  s.kind = semu::LayerKind::dense;
  s.in_dim = in;
  s.out_dim = out;
  s.activation = act;
  return s;
}

Matrix random_matrix(semu::Rng& rng, std::size_t n, std::size_t m) {
  Matrix g(n, m);
  for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] = rng.normal();
  return g;
}

// Random matrix of exact rank r (product of thin factors).
Matrix random_rank(semu::Rng& rng, std::size_t n, std::size_t m, std::size_t r) {
  return matmul(random_matrix(rng, n, r), random_matrix(rng, r, m));
}

struct SmallSetup {
  Model model;
  Matrix fx;
  std::vector<int> fy;
};

SmallSetup small_setup(std::uint64_t seed) {
  SmallSetup s;
  s.model = semu::init_model(
      {dense_spec(3, 6, semu::Activation::relu), dense_spec(6, 4)}, 4, seed);
  semu::Rng rng(seed + 100);
  s.fx = random_matrix(rng, 10, 3);
  s.fy.resize(10);
  for (auto& y : s.fy) y = static_cast<int>(rng.index(4));
  return s;
}

}  // namespace

TEST(SemuConfig, Validation) {
  SemuConfig cfg;
  EXPECT_NO_THROW(cfg.validate(3));
  cfg.gamma_default = 1.5;
  EXPECT_THROW(cfg.validate(3), semu::ConfigError);
  cfg.gamma_default = 0.9;
  cfg.gamma_overrides[5] = 0.5;
  EXPECT_THROW(cfg.validate(3), semu::ConfigError);
  cfg.gamma_overrides.clear();
  cfg.gamma_overrides[1] = -0.1;
  EXPECT_THROW(cfg.validate(3), semu::ConfigError);
  cfg.gamma_overrides[1] = 0.95;
  EXPECT_NO_THROW(cfg.validate(3));
  EXPECT_DOUBLE_EQ(cfg.gamma_for_layer(1), 0.95);
  EXPECT_DOUBLE_EQ(cfg.gamma_for_layer(0), 0.9);
}

TEST(Accumulate, SingleBatchEqualsNegatedGradient) {
  SmallSetup s = small_setup(1);
  SemuConfig cfg;
  GradientSet acc = semu::accumulate_forget_gradients(s.model, s.fx, s.fy, cfg, 64);
  GradientSet direct = semu::backward_ce(s.model, s.fx, s.fy).second;
  for (std::size_t li = 0; li < acc.weight.size(); ++li)
    for (std::size_t i = 0; i < acc.weight[li].size(); ++i)
      EXPECT_DOUBLE_EQ(acc.weight[li].data()[i], -direct.weight[li].data()[i]);
}

TEST(Accumulate, TwoIdenticalBatchesSumAndMean) {
  SmallSetup s = small_setup(2);
  // Duplicate the set so batch 2 repeats batch 1 exactly.
  Matrix xx(20, 3);
  std::vector<int> yy(20);
  for (std::size_t i = 0; i < 10; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      xx(i, j) = s.fx(i, j);
      xx(i + 10, j) = s.fx(i, j);
    }
    yy[i] = yy[i + 10] = s.fy[i];
  }
  SemuConfig cfg;
  GradientSet one = semu::accumulate_forget_gradients(s.model, s.fx, s.fy, cfg, 10);
  GradientSet two = semu::accumulate_forget_gradients(s.model, xx, yy, cfg, 10);
  for (std::size_t li = 0; li < one.weight.size(); ++li)
    for (std::size_t i = 0; i < one.weight[li].size(); ++i)
      EXPECT_NEAR(two.weight[li].data()[i], 2.0 * one.weight[li].data()[i], 1e-14);

  cfg.grad_reduction = SemuConfig::Reduction::mean;
  GradientSet mean = semu::accumulate_forget_gradients(s.model, xx, yy, cfg, 10);
  for (std::size_t li = 0; li < one.weight.size(); ++li)
    for (std::size_t i = 0; i < one.weight[li].size(); ++i)
      EXPECT_NEAR(mean.weight[li].data()[i], one.weight[li].data()[i], 1e-14);

  Matrix empty;
  std::vector<int> no_labels;
  EXPECT_THROW(semu::accumulate_forget_gradients(s.model, empty, no_labels, cfg),
               semu::ConfigError);
}

TEST(Accumulate, FiniteDifferenceOracle) {
  SmallSetup s = small_setup(3);
  SemuConfig cfg;  // sum over batches of -meanCE(batch)
  const std::size_t batch = 4;
  GradientSet acc = semu::accumulate_forget_gradients(s.model, s.fx, s.fy, cfg, batch);

  auto total_neg_loss = [&]() {
    double total = 0.0;
    for (std::size_t start = 0; start < s.fx.rows(); start += batch) {
      const std::size_t bsz = std::min(batch, s.fx.rows() - start);
      Matrix bx(bsz, 3);
      std::vector<int> by(bsz);
      for (std::size_t i = 0; i < bsz; ++i) {
        for (std::size_t j = 0; j < 3; ++j) bx(i, j) = s.fx(start + i, j);
        by[i] = s.fy[start + i];
      }
      total -= semu::ce_loss(semu::forward(s.model, bx), by);
    }
    return total;
  };

  const double h = 1e-5;
  for (std::size_t li = 0; li < s.model.layers.size(); ++li) {
    Matrix& w = s.model.layers[li].weight;
    for (std::size_t i = 0; i < w.size(); i += 3) {  // sample every third entry
      const double orig = w.data()[i];
      w.data()[i] = orig + h;
      const double up = total_neg_loss();
      w.data()[i] = orig - h;
      const double down = total_neg_loss();
      w.data()[i] = orig;
      const double fd = (up - down) / (2.0 * h);
      const double a = acc.weight[li].data()[i];
      EXPECT_NEAR(a, fd, 1e-5 * std::max({1.0, std::abs(a), std::abs(fd)}));
    }
  }
}

TEST(BuildAdapters, IdentityAtInitBitwise) {
  SmallSetup s = small_setup(4);
  SemuConfig cfg;
  GradientSet acc = semu::accumulate_forget_gradients(s.model, s.fx, s.fy, cfg);
  AdaptedModel am = semu::build_adapters(s.model, acc, cfg);

  EXPECT_GT(am.trainable_params(), 0u);
  for (std::size_t li = 0; li < s.model.layers.size(); ++li)
    for (std::size_t i = 0; i < s.model.layers[li].weight.size(); ++i)
      EXPECT_EQ(am.effective.layers[li].weight.data()[i],
                s.model.layers[li].weight.data()[i]);

  semu::Rng rng(99);
  Matrix probe = random_matrix(rng, 7, 3);
  Matrix orig_logits = semu::forward(s.model, probe);
  Matrix adapted_logits = semu::forward(am.effective, probe);
  for (std::size_t i = 0; i < orig_logits.size(); ++i)
    EXPECT_EQ(adapted_logits.data()[i], orig_logits.data()[i]);
}

TEST(BuildAdapters, GammaZeroFreezesEverything) {
  SmallSetup s = small_setup(5);
  SemuConfig cfg;
  cfg.gamma_default = 0.0;
  GradientSet acc = semu::accumulate_forget_gradients(s.model, s.fx, s.fy, cfg);
  AdaptedModel am = semu::build_adapters(s.model, acc, cfg);
  EXPECT_EQ(am.trainable_params(), 0u);
  for (const auto& a : am.adapters) EXPECT_FALSE(a.has_value());
}

TEST(BuildAdapters, ParameterAccountingExample) {
  // 100x50 layer with a rank-5 gradient and 20x20 with rank 2: 25 + 4 = 29
  // trainable of 5400 total weights, about 0.537%.
  semu::Rng rng(6);
  SemuConfig cfg;
  cfg.gamma_default = 1.0;       // keep every nonzero direction
  cfg.use_perp_projection = false;  // preserve the crafted exact ranks

  Model m1 = semu::init_model({dense_spec(50, 100)}, 100, 1);
  GradientSet g1 = GradientSet::zeros_like(m1);
  g1.weight[0] = random_rank(rng, 100, 50, 5);
  AdaptedModel am1 = semu::build_adapters(m1, g1, cfg);
  ASSERT_TRUE(am1.adapters[0].has_value());
  EXPECT_EQ(am1.adapters[0]->rank(), 5u);
  EXPECT_EQ(am1.trainable_params(), 25u);
  EXPECT_EQ(am1.total_weight_params(), 5000u);

  Model m2 = semu::init_model({dense_spec(20, 20)}, 20, 2);
  GradientSet g2 = GradientSet::zeros_like(m2);
  g2.weight[0] = random_rank(rng, 20, 20, 2);
  AdaptedModel am2 = semu::build_adapters(m2, g2, cfg);
  EXPECT_EQ(am2.trainable_params(), 4u);
  EXPECT_EQ(am2.total_weight_params(), 400u);

  const double pct = 100.0 * (25.0 + 4.0) / (5000.0 + 400.0);
  EXPECT_NEAR(pct, 0.537, 5e-4);
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%.2f", pct);
  EXPECT_STREQ(buf, "0.54");
}

TEST(BuildAdapters, MonotoneCapacityInGamma) {
  SmallSetup s = small_setup(7);
  SemuConfig cfg;
  GradientSet acc = semu::accumulate_forget_gradients(s.model, s.fx, s.fy, cfg);
  std::size_t prev_total = 0;
  std::vector<std::size_t> prev_ranks(s.model.layers.size(), 0);
  for (double gamma : {0.0, 0.3, 0.6, 0.9, 0.99, 1.0}) {
    cfg.gamma_default = gamma;
    AdaptedModel am = semu::build_adapters(s.model, acc, cfg);
    EXPECT_GE(am.trainable_params(), prev_total) << "gamma " << gamma;
    prev_total = am.trainable_params();
    for (std::size_t li = 0; li < am.adapters.size(); ++li) {
      const std::size_t r = am.adapters[li] ? am.adapters[li]->rank() : 0;
      EXPECT_GE(r, prev_ranks[li]) << "layer " << li << " gamma " << gamma;
      prev_ranks[li] = r;
    }
  }
}

TEST(BuildAdapters, PerpendicularityAndConcentration) {
  semu::BlobsDataset d = semu::make_blobs(4, 40, 2, 6.0, 1.0, 11);
  Model m = semu::init_model(
      {dense_spec(2, 16, semu::Activation::relu), dense_spec(16, 4)}, 4, 3);
  semu::TrainOptions topt;
  topt.epochs = 15;
  topt.lr = 0.01;
  topt.momentum = 0.9;
  topt.batch_size = 16;
  topt.seed = 5;
  semu::train(m, d.train.x, d.train.y, topt);

  // Forget class 2.
  semu::ForgetSpec fs;
  fs.kind = semu::ForgetKind::class_wise;
  fs.class_label = 2;
  semu::DatasetSplit split = semu::split_forget(d.train, d.test, fs, 0);
  semu::Dataset forget = split.forget_set();

  SemuConfig cfg;
  cfg.gamma_default = 0.9;
  GradientSet acc = semu::accumulate_forget_gradients(m, forget.x, forget.y, cfg);
  AdaptedModel am = semu::build_adapters(m, acc, cfg);

  for (std::size_t li = 0; li < m.layers.size(); ++li) {
    const Matrix& g = acc.weight[li];
    const Matrix& a = m.layers[li].weight;
    Matrix g_prime = semu::perp_project(g, a);
    // Perpendicularity within 1e-8 * |G| * |A|.
    EXPECT_LE(std::abs(frobenius_inner(g_prime, a)),
              1e-8 * frobenius_norm(g) * frobenius_norm(a));
    if (!am.adapters[li]) continue;
    // The chosen subspace captures at least gamma of |G'|^2.
    Matrix p = semu::subspace_project(g_prime, am.adapters[li]->u_r,
                                      am.adapters[li]->v_r);
    const double captured = frobenius_inner(p, p) / frobenius_inner(g_prime, g_prime);
    EXPECT_GE(captured, 0.9 - 1e-9) << "layer " << li;
    EXPECT_NEAR(captured, am.adapters[li]->explained, 1e-9);
  }
}

TEST(BuildAdapters, ScaleInvarianceOfSelection) {
  SmallSetup s = small_setup(8);
  SemuConfig cfg;
  GradientSet acc = semu::accumulate_forget_gradients(s.model, s.fx, s.fy, cfg);
  AdaptedModel am1 = semu::build_adapters(s.model, acc, cfg);

  GradientSet scaled = acc;
  for (auto& w : scaled.weight)
    for (std::size_t i = 0; i < w.size(); ++i) w.data()[i] *= 5.0;
  AdaptedModel am2 = semu::build_adapters(s.model, scaled, cfg);

  ASSERT_EQ(am1.trainable_params(), am2.trainable_params());
  for (std::size_t li = 0; li < am1.adapters.size(); ++li) {
    ASSERT_EQ(am1.adapters[li].has_value(), am2.adapters[li].has_value());
    if (!am1.adapters[li]) continue;
    ASSERT_EQ(am1.adapters[li]->rank(), am2.adapters[li]->rank());
    for (std::size_t i = 0; i < am1.adapters[li]->u_r.size(); ++i)
      EXPECT_NEAR(am1.adapters[li]->u_r.data()[i], am2.adapters[li]->u_r.data()[i],
                  1e-12);
    for (std::size_t i = 0; i < am1.adapters[li]->v_r.size(); ++i)
      EXPECT_NEAR(am1.adapters[li]->v_r.data()[i], am2.adapters[li]->v_r.data()[i],
                  1e-12);
  }
}

TEST(BuildAdapters, RankCapAndOverrides) {
  SmallSetup s = small_setup(9);
  SemuConfig cfg;
  cfg.gamma_default = 1.0;
  GradientSet acc = semu::accumulate_forget_gradients(s.model, s.fx, s.fy, cfg);

  cfg.r_max = 1;
  AdaptedModel capped = semu::build_adapters(s.model, acc, cfg);
  for (const auto& a : capped.adapters)
    if (a) EXPECT_EQ(a->rank(), 1u);

  cfg.r_max = 0;
  cfg.gamma_overrides[0] = 0.0;  // freeze layer 0 only
  AdaptedModel partial = semu::build_adapters(s.model, acc, cfg);
  EXPECT_FALSE(partial.adapters[0].has_value());
  EXPECT_TRUE(partial.adapters[1].has_value());
}

TEST(AdapterGradients, FiniteDifferenceOverR) {
  SmallSetup s = small_setup(10);
  SemuConfig cfg;
  GradientSet acc = semu::accumulate_forget_gradients(s.model, s.fx, s.fy, cfg);
  AdaptedModel am = semu::build_adapters(s.model, acc, cfg);

  // Move R off zero so the test exercises a generic point.
  semu::Rng rng(123);
  for (auto& a : am.adapters)
    if (a)
      for (std::size_t i = 0; i < a->r_mat.size(); ++i)
        a->r_mat.data()[i] = 0.1 * rng.normal();
  am.refresh();

  std::vector<int> labels = s.fy;
  auto loss_fn = [&]() {
    return semu::ce_loss(semu::forward(am.effective, s.fx), labels);
  };
  GradientSet eff = semu::backward_ce(am.effective, s.fx, labels).second;
  std::vector<Matrix> rg = semu::adapter_gradients(am, eff);

  const double h = 1e-5;
  for (std::size_t li = 0; li < am.adapters.size(); ++li) {
    if (!am.adapters[li]) continue;
    Matrix& r = am.adapters[li]->r_mat;
    for (std::size_t i = 0; i < r.size(); ++i) {
      const double orig = r.data()[i];
      r.data()[i] = orig + h;
      am.refresh_layer(li);
      const double up = loss_fn();
      r.data()[i] = orig - h;
      am.refresh_layer(li);
      const double down = loss_fn();
      r.data()[i] = orig;
      am.refresh_layer(li);
      const double fd = (up - down) / (2.0 * h);
      const double a = rg[li].data()[i];
      EXPECT_NEAR(a, fd, 1e-5 * std::max({1.0, std::abs(a), std::abs(fd)}))
          << "layer " << li << " R entry " << i;
    }
  }
}

TEST(Merge, ZeroRIdentityScalarExampleAndRandomAgreement) {
  SmallSetup s = small_setup(11);
  SemuConfig cfg;
  GradientSet acc = semu::accumulate_forget_gradients(s.model, s.fx, s.fy, cfg);
  AdaptedModel am = semu::build_adapters(s.model, acc, cfg);
  Model merged0 = semu::merge_adapters(am);
  for (std::size_t li = 0; li < merged0.layers.size(); ++li)
    for (std::size_t i = 0; i < merged0.layers[li].weight.size(); ++i)
      EXPECT_EQ(merged0.layers[li].weight.data()[i],
                s.model.layers[li].weight.data()[i]);

  // 1x1: A=[2], u=v=[1], R=[0.5] -> effective [2.5].
  AdaptedModel tiny;
  tiny.base = semu::init_model({dense_spec(1, 1)}, 1, 0);
  tiny.base.layers[0].weight(0, 0) = 2.0;
  tiny.base.layers[0].bias[0] = 0.0;
  tiny.effective = tiny.base;
  semu::AdapterFactors f;
  f.u_r = Matrix(1, 1, {1.0});
  f.v_r = Matrix(1, 1, {1.0});
  f.r_mat = Matrix(1, 1, {0.5});
  tiny.adapters.push_back(f);
  tiny.refresh();
  Model tiny_merged = semu::merge_adapters(tiny);
  EXPECT_DOUBLE_EQ(tiny_merged.layers[0].weight(0, 0), 2.5);

  // Random R: merged forward equals adapted forward within 1e-12.
  semu::Rng rng(321);
  for (auto& a : am.adapters)
    if (a)
      for (std::size_t i = 0; i < a->r_mat.size(); ++i)
        a->r_mat.data()[i] = 0.2 * rng.normal();
  am.refresh();
  Model merged = semu::merge_adapters(am);
  for (int rep = 0; rep < 100; ++rep) {
    Matrix probe = random_matrix(rng, 1, 3);
    Matrix a_out = semu::forward(am.effective, probe);
    Matrix m_out = semu::forward(merged, probe);
    for (std::size_t i = 0; i < a_out.size(); ++i)
      EXPECT_NEAR(a_out.data()[i], m_out.data()[i], 1e-12);
  }
}

TEST(Spectrum, KnownDiagonalZeroLayerAndCsv) {
  Model m = semu::init_model({dense_spec(3, 3), dense_spec(3, 3)}, 3, 0);
  GradientSet g = GradientSet::zeros_like(m);
  g.weight[0] = Matrix(3, 3, {3, 0, 0, 0, 2, 0, 0, 0, 1});
  // layer 1 gradient stays zero

  SemuConfig cfg;
  cfg.gamma_default = 0.9;
  cfg.use_perp_projection = false;
  std::vector<semu::LayerSpectrum> sp = semu::spectrum_report(m, g, cfg);
  ASSERT_EQ(sp.size(), 2u);
  ASSERT_EQ(sp[0].sigma.size(), 3u);
  EXPECT_NEAR(sp[0].sigma[0], 3.0, 1e-12);
  EXPECT_NEAR(sp[0].sigma[1], 2.0, 1e-12);
  EXPECT_NEAR(sp[0].sigma[2], 1.0, 1e-12);
  EXPECT_NEAR(sp[0].explained_cum[0], 9.0 / 14.0, 1e-12);
  EXPECT_NEAR(sp[0].explained_cum[1], 13.0 / 14.0, 1e-12);
  EXPECT_DOUBLE_EQ(sp[0].explained_cum[2], 1.0);  // exact normalization
  EXPECT_EQ(sp[0].chosen_r, 2u);

  EXPECT_TRUE(sp[1].sigma.empty());
  EXPECT_EQ(sp[1].chosen_r, 0u);

  std::string csv = semu::spectrum_to_csv(sp);
  std::istringstream lines(csv);
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line, "layer_index,layer_kind,sigma_index,sigma,explained_cum,chosen_r");
  std::size_t rows = 0;
  bool saw_zero_layer_row = false;
  while (std::getline(lines, line)) {
    ++rows;
    if (line.rfind("1,dense,0,0,0,0", 0) == 0) saw_zero_layer_row = true;
  }
  EXPECT_EQ(rows, 4u);  // 3 sigma rows + 1 placeholder
  EXPECT_TRUE(saw_zero_layer_row);

  // chosen_r is recomputable from the sigma column.
  semu::RankSelection re = semu::select_rank(sp[0].sigma, 0.9);
  EXPECT_EQ(re.r, sp[0].chosen_r);
}
