#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "semu/matrix.hpp"

namespace semu {

struct Dataset {
  Matrix x;            // samples as rows
  std::vector<int> y;  // labels 0..num_classes-1
  std::size_t num_classes = 0;

  std::size_t size() const { return x.rows(); }
  std::size_t dim() const { return x.cols(); }
  void validate() const;
};

Dataset subset(const Dataset& d, const std::vector<std::size_t>& indices);

enum class ForgetKind { random_fraction, class_wise };

std::string to_string(ForgetKind k);
ForgetKind forget_kind_from_string(const std::string& s);

// D split into forget and remain index sets over train; test rides along.
struct DatasetSplit {
  Dataset train;
  Dataset test;
  std::vector<std::size_t> d_f;  // indices into train
  std::vector<std::size_t> d_r;  // complement, same ordering convention
  ForgetKind forgetting_kind = ForgetKind::random_fraction;
  std::uint64_t seed = 0;

  Dataset forget_set() const { return subset(train, d_f); }
  Dataset remain_set() const { return subset(train, d_r); }
  void validate() const;  // d_f and d_r partition the train indices
};

struct BlobsDataset {
  Dataset train;
  Dataset test;
  Matrix centers;  // num_classes x dim
};

// Gaussian clusters at seeded random centers with pairwise center distance
// >= separation * sigma; stratified 80/20 train/test split.
BlobsDataset make_blobs(std::size_t num_classes, std::size_t per_class, std::size_t dim,
                        double separation, double sigma, std::uint64_t seed);

struct CsvDataset {
  Dataset data;
  std::vector<std::string> feature_names;
  std::vector<int> label_mapping;  // label_mapping[new_label] = original label
};

CsvDataset load_csv(const std::string& path, const std::string& label_column = "label");
void write_csv(const std::string& path, const Dataset& d,
               const std::vector<std::string>& feature_names = {},
               const std::string& label_column = "label");

struct ForgetSpec {
  ForgetKind kind = ForgetKind::random_fraction;
  double fraction = 0.1;  // random_fraction
  int class_label = 0;    // class_wise
};

DatasetSplit split_forget(const Dataset& train, const Dataset& test,
                          const ForgetSpec& spec, std::uint64_t seed);

}  // namespace semu
