#include "semu/data.hpp"

#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "semu/errors.hpp"
#include "semu/nn.hpp"

using semu::Dataset;
using semu::DatasetSplit;
using semu::ForgetKind;
using semu::ForgetSpec;
using semu::Matrix;

TEST(MakeBlobs, ShapesStratificationSeparationDeterminism) {
  semu::BlobsDataset d = semu::make_blobs(8, 100, 2, 6.0, 1.0, 42);
  EXPECT_EQ(d.train.size(), 640u);
  EXPECT_EQ(d.test.size(), 160u);
  EXPECT_EQ(d.train.num_classes, 8u);

  std::vector<int> train_counts(8, 0), test_counts(8, 0);
  for (int y : d.train.y) ++train_counts[y];
  for (int y : d.test.y) ++test_counts[y];
  for (int c = 0; c < 8; ++c) {
    EXPECT_EQ(train_counts[c], 80);
    EXPECT_EQ(test_counts[c], 20);
  }

  // Pairwise center distance >= separation * sigma.
  for (std::size_t a = 0; a < 8; ++a)
    for (std::size_t b = a + 1; b < 8; ++b) {
      double dist2 = 0.0;
      for (std::size_t k = 0; k < 2; ++k) {
        const double diff = d.centers(a, k) - d.centers(b, k);
        dist2 += diff * diff;
      }
      EXPECT_GE(std::sqrt(dist2), 6.0);
    }

  semu::BlobsDataset d2 = semu::make_blobs(8, 100, 2, 6.0, 1.0, 42);
  for (std::size_t i = 0; i < d.train.x.size(); ++i)
    EXPECT_EQ(d.train.x.data()[i], d2.train.x.data()[i]);

  semu::BlobsDataset d3 = semu::make_blobs(8, 100, 2, 6.0, 1.0, 43);
  bool differs = false;
  for (std::size_t i = 0; i < d.train.x.size(); ++i)
    differs |= (d.train.x.data()[i] != d3.train.x.data()[i]);
  EXPECT_TRUE(differs);

  EXPECT_THROW(semu::make_blobs(0, 10, 2, 6, 1, 0), semu::ConfigError);
  EXPECT_THROW(semu::make_blobs(2, 1, 2, 6, 1, 0), semu::ConfigError);
  // 200 centers pairwise >= 40 apart jam the 1D placement box (density far
  // beyond the random-parking limit).
  EXPECT_THROW(semu::make_blobs(200, 10, 1, 40.0, 1.0, 0), semu::ConfigError);
}

TEST(MakeBlobs, TinySigmaTriviallySeparable) {
  semu::BlobsDataset d = semu::make_blobs(4, 20, 2, 6.0, 1e-9, 3);
  // Nearest-center classification is perfect when clusters are points.
  for (std::size_t i = 0; i < d.test.size(); ++i) {
    std::size_t best = 0;
    double best_d = 1e300;
    for (std::size_t c = 0; c < 4; ++c) {
      double dist2 = 0.0;
      for (std::size_t k = 0; k < 2; ++k) {
        const double diff = d.test.x(i, k) - d.centers(c, k);
        dist2 += diff * diff;
      }
      if (dist2 < best_d) {
        best_d = dist2;
        best = c;
      }
    }
    EXPECT_EQ(static_cast<int>(best), d.test.y[i]);
  }
}

TEST(MakeBlobs, ReferenceMlpReachesHighTestAccuracy) {
  semu::BlobsDataset d = semu::make_blobs(8, 100, 2, 6.0, 1.0, 42);
  std::vector<semu::LayerSpec> spec(3);
  spec[0].kind = semu::LayerKind::dense;
  spec[0].in_dim = 2;
  spec[0].out_dim = 64;
  spec[0].activation = semu::Activation::relu;
  spec[1].kind = semu::LayerKind::dense;
  spec[1].in_dim = 64;
  spec[1].out_dim = 64;
  spec[1].activation = semu::Activation::relu;
  spec[2].kind = semu::LayerKind::dense;
  spec[2].in_dim = 64;
  spec[2].out_dim = 8;
  semu::Model m = semu::init_model(spec, 8, 1);
  semu::TrainOptions opt;
  opt.epochs = 60;
  opt.lr = 0.01;
  opt.momentum = 0.9;
  opt.batch_size = 32;
  opt.seed = 9;
  semu::train(m, d.train.x, d.train.y, opt);

  Matrix logits = semu::forward(m, d.test.x);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    std::size_t arg = 0;
    for (std::size_t j = 1; j < logits.cols(); ++j)
      if (logits(i, j) > logits(i, arg)) arg = j;
    if (static_cast<int>(arg) == d.test.y[i]) ++correct;
  }
  EXPECT_GE(100.0 * static_cast<double>(correct) / static_cast<double>(logits.rows()),
            97.0);
}

TEST(Csv, RoundTripRemapAndErrors) {
  namespace fs = std::filesystem;
  fs::path p = fs::temp_directory_path() / "semu_data_rt.csv";

  Dataset d;
  d.x = Matrix(3, 2, {1.5, -2.25, 0.0, 4.5, 3.125, -0.5});
  d.y = {0, 1, 0};
  d.num_classes = 2;
  semu::write_csv(p.string(), d);
  semu::CsvDataset back = semu::load_csv(p.string());
  ASSERT_EQ(back.data.size(), 3u);
  ASSERT_EQ(back.data.dim(), 2u);
  for (std::size_t i = 0; i < d.x.size(); ++i)
    EXPECT_EQ(back.data.x.data()[i], d.x.data()[i]);
  EXPECT_EQ(back.data.y, d.y);
  EXPECT_EQ(back.feature_names, (std::vector<std::string>{"f0", "f1"}));
  fs::remove(p);

  // Sparse labels {3, 7} remap to {0, 1} with the mapping reported.
  fs::path p2 = fs::temp_directory_path() / "semu_data_remap.csv";
  {
    std::ofstream out(p2);
    out << "a,b,label\n1,2,7\n3,4,3\n5,6,7\n";
  }
  semu::CsvDataset remapped = semu::load_csv(p2.string());
  EXPECT_EQ(remapped.label_mapping, (std::vector<int>{3, 7}));
  EXPECT_EQ(remapped.data.y, (std::vector<int>{1, 0, 1}));
  EXPECT_EQ(remapped.data.num_classes, 2u);
  fs::remove(p2);

  // Errors carry line numbers.
  fs::path p3 = fs::temp_directory_path() / "semu_data_bad.csv";
  {
    std::ofstream out(p3);
    out << "a,label\n1,0\nx,1\n";
  }
  try {
    semu::load_csv(p3.string());
    FAIL() << "expected parse error";
  } catch (const semu::InvalidInputError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
  {
    std::ofstream out(p3);
    out << "a,label\n1,0,9\n";
  }
  try {
    semu::load_csv(p3.string());
    FAIL() << "expected ragged-row error";
  } catch (const semu::InvalidInputError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
  {
    std::ofstream out(p3);
    out << "a,b\n1,2\n";
  }
  EXPECT_THROW(semu::load_csv(p3.string()), semu::InvalidInputError);
  fs::remove(p3);
  EXPECT_THROW(semu::load_csv("/nonexistent/x.csv"), semu::IoError);
}

TEST(Csv, TenThousandRowsUnderASecond) {
  namespace fs = std::filesystem;
  fs::path p = fs::temp_directory_path() / "semu_data_perf.csv";
  {
    std::ofstream out(p);
    out << "f0,f1,f2,label\n";
    for (int i = 0; i < 10000; ++i)
      out << i * 0.5 << "," << i * 0.25 << "," << -i << "," << i % 7 << "\n";
  }
  const auto start = std::chrono::steady_clock::now();
  semu::CsvDataset d = semu::load_csv(p.string());
  const auto elapsed = std::chrono::duration<double>(
      std::chrono::steady_clock::now() - start).count();
  EXPECT_EQ(d.data.size(), 10000u);
  EXPECT_EQ(d.data.num_classes, 7u);
  EXPECT_LT(elapsed, 1.0);
  fs::remove(p);
}

TEST(SplitForget, RandomFraction) {
  semu::BlobsDataset d = semu::make_blobs(4, 50, 2, 6.0, 1.0, 7);
  ForgetSpec spec;
  spec.kind = ForgetKind::random_fraction;
  spec.fraction = 0.10;
  DatasetSplit s = semu::split_forget(d.train, d.test, spec, 11);
  EXPECT_EQ(s.d_f.size(), 16u);  // floor(0.1 * 160)
  EXPECT_EQ(s.d_f.size() + s.d_r.size(), d.train.size());
  s.validate();

  DatasetSplit s2 = semu::split_forget(d.train, d.test, spec, 12);
  EXPECT_EQ(s2.d_f.size(), s.d_f.size());
  EXPECT_NE(s2.d_f, s.d_f);

  DatasetSplit s_same = semu::split_forget(d.train, d.test, spec, 11);
  EXPECT_EQ(s_same.d_f, s.d_f);

  spec.fraction = 1.5;
  EXPECT_THROW(semu::split_forget(d.train, d.test, spec, 0), semu::ConfigError);
  spec.fraction = 0.0;
  EXPECT_THROW(semu::split_forget(d.train, d.test, spec, 0), semu::ConfigError);
}

TEST(SplitForget, ClassWise) {
  semu::BlobsDataset d = semu::make_blobs(4, 50, 2, 6.0, 1.0, 7);
  ForgetSpec spec;
  spec.kind = ForgetKind::class_wise;
  spec.class_label = 3;
  DatasetSplit s = semu::split_forget(d.train, d.test, spec, 0);
  EXPECT_EQ(s.d_f.size(), 40u);
  for (std::size_t i : s.d_f) EXPECT_EQ(d.train.y[i], 3);
  for (std::size_t i : s.d_r) EXPECT_NE(d.train.y[i], 3);
  s.validate();

  spec.class_label = 9;
  EXPECT_THROW(semu::split_forget(d.train, d.test, spec, 0), semu::ConfigError);
}

TEST(DatasetSplit, ValidateCatchesBadPartitions) {
  semu::BlobsDataset d = semu::make_blobs(2, 10, 2, 6.0, 1.0, 1);
  ForgetSpec spec;
  spec.kind = ForgetKind::class_wise;
  spec.class_label = 0;
  DatasetSplit s = semu::split_forget(d.train, d.test, spec, 0);
  s.d_r.pop_back();
  EXPECT_THROW(s.validate(), semu::InvalidInputError);
  s.d_r.push_back(s.d_f[0]);
  EXPECT_THROW(s.validate(), semu::InvalidInputError);
}

TEST(Subset, GathersRows) {
  Dataset d;
  d.x = Matrix(3, 2, {1, 2, 3, 4, 5, 6});
  d.y = {0, 1, 0};
  d.num_classes = 2;
  Dataset s = semu::subset(d, {2, 0});
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s.x(0, 0), 5.0);
  EXPECT_EQ(s.x(1, 1), 2.0);
  EXPECT_EQ(s.y, (std::vector<int>{0, 0}));
  EXPECT_THROW(semu::subset(d, {5}), semu::InvalidInputError);
}
