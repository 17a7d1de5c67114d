#include "semu/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "semu/errors.hpp"
#include "semu/rng.hpp"

namespace semu {

void Dataset::validate() const {
  if (y.size() != x.rows())
    throw InvalidInputError("dataset has " + std::to_string(x.rows()) +
                            " samples but " + std::to_string(y.size()) + " labels");
  if (num_classes == 0) throw InvalidInputError("dataset num_classes must be positive");
  for (std::size_t i = 0; i < y.size(); ++i)
    if (y[i] < 0 || static_cast<std::size_t>(y[i]) >= num_classes)
      throw InvalidInputError("label " + std::to_string(y[i]) + " at sample " +
                              std::to_string(i) + " outside [0, " +
                              std::to_string(num_classes) + ")");
}

Dataset subset(const Dataset& d, const std::vector<std::size_t>& indices) {
  Dataset out;
  out.num_classes = d.num_classes;
  out.x = Matrix(indices.size(), d.dim());
  out.y.resize(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= d.size())
      throw InvalidInputError("subset index " + std::to_string(indices[i]) +
                              " out of range for " + std::to_string(d.size()) +
                              " samples");
    std::copy(d.x.row(indices[i]), d.x.row(indices[i]) + d.dim(), out.x.row(i));
    out.y[i] = d.y[indices[i]];
  }
  return out;
}

std::string to_string(ForgetKind k) {
  return k == ForgetKind::random_fraction ? "random_fraction" : "class_wise";
}

ForgetKind forget_kind_from_string(const std::string& s) {
  if (s == "random_fraction") return ForgetKind::random_fraction;
  if (s == "class_wise") return ForgetKind::class_wise;
  throw ConfigError("unknown forgetting kind '" + s +
                    "' (expected random_fraction or class_wise)");
}

void DatasetSplit::validate() const {
  train.validate();
  test.validate();
  std::vector<int> seen(train.size(), 0);
  for (std::size_t i : d_f) {
    if (i >= train.size())
      throw InvalidInputError("forget index " + std::to_string(i) + " out of range");
    ++seen[i];
  }
  for (std::size_t i : d_r) {
    if (i >= train.size())
      throw InvalidInputError("remain index " + std::to_string(i) + " out of range");
    ++seen[i];
  }
  for (std::size_t i = 0; i < seen.size(); ++i) {
    if (seen[i] != 1)
      throw InvalidInputError("train index " + std::to_string(i) +
                              (seen[i] == 0 ? " missing from" : " duplicated across") +
                              " the forget/remain partition");
  }
}

BlobsDataset make_blobs(std::size_t num_classes, std::size_t per_class, std::size_t dim,
                        double separation, double sigma, std::uint64_t seed) {
  if (num_classes == 0 || per_class == 0 || dim == 0)
    throw ConfigError("make_blobs: num_classes, per_class and dim must be positive");
  if (separation <= 0.0 || sigma <= 0.0)
    throw ConfigError("make_blobs: separation and sigma must be positive");
  const std::size_t train_per_class = per_class * 4 / 5;
  const std::size_t test_per_class = per_class - train_per_class;
  if (train_per_class == 0 || test_per_class == 0)
    throw ConfigError("make_blobs: per_class " + std::to_string(per_class) +
                      " too small for an 80/20 split");

  Rng rng(seed);
  Rng center_rng = rng.split(1);
  Rng sample_rng = rng.split(2);

  // Rejection-sample centers in a box sized so sane configs place reliably,
  // while genuinely over-dense requests jam and report failure.
  const double min_dist = separation * sigma;
  const double half_width =
      min_dist *
      (1.0 + std::pow(static_cast<double>(num_classes), 1.0 / static_cast<double>(dim))) /
      2.0;
  Matrix centers(num_classes, dim);
  for (std::size_t c = 0; c < num_classes; ++c) {
    bool placed = false;
    for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
      std::vector<double> cand(dim);
      for (std::size_t k = 0; k < dim; ++k)
        cand[k] = center_rng.uniform(-half_width, half_width);
      placed = true;
      for (std::size_t prev = 0; prev < c && placed; ++prev) {
        double dist2 = 0.0;
        for (std::size_t k = 0; k < dim; ++k) {
          const double diff = cand[k] - centers(prev, k);
          dist2 += diff * diff;
        }
        if (dist2 < min_dist * min_dist) placed = false;
      }
      if (placed)
        for (std::size_t k = 0; k < dim; ++k) centers(c, k) = cand[k];
    }
    if (!placed)
      throw ConfigError("make_blobs: could not place " + std::to_string(num_classes) +
                        " centers at separation " + std::to_string(separation) +
                        " in dim " + std::to_string(dim) + " after 1000 attempts");
  }

  BlobsDataset out;
  out.centers = centers;
  out.train.num_classes = num_classes;
  out.test.num_classes = num_classes;
  out.train.x = Matrix(num_classes * train_per_class, dim);
  out.test.x = Matrix(num_classes * test_per_class, dim);
  out.train.y.resize(out.train.x.rows());
  out.test.y.resize(out.test.x.rows());

  std::size_t ti = 0, si = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    for (std::size_t p = 0; p < per_class; ++p) {
      std::vector<double> pt(dim);
      for (std::size_t k = 0; k < dim; ++k)
        pt[k] = centers(c, k) + sigma * sample_rng.normal();
      if (p < train_per_class) {
        std::copy(pt.begin(), pt.end(), out.train.x.row(ti));
        out.train.y[ti++] = static_cast<int>(c);
      } else {
        std::copy(pt.begin(), pt.end(), out.test.x.row(si));
        out.test.y[si++] = static_cast<int>(c);
      }
    }
  }
  out.train.validate();
  out.test.validate();
  return out;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  fields.push_back(cur);
  return fields;
}

double parse_number(const std::string& s, std::size_t line_no, const std::string& col) {
  const char* begin = s.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  // Trailing spaces are fine; anything else is not a number.
  while (end && *end == ' ') ++end;
  if (end == begin || (end && *end != '\0'))
    throw InvalidInputError("csv line " + std::to_string(line_no) +
                            ": non-numeric value '" + s + "' in column " + col);
  return v;
}

}  // namespace

CsvDataset load_csv(const std::string& path, const std::string& label_column) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open csv: " + path);

  std::string line;
  if (!std::getline(in, line))
    throw InvalidInputError("csv line 1: missing header in " + path);
  std::vector<std::string> header = split_csv_line(line);
  std::size_t label_idx = header.size();
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == label_column) label_idx = i;
  if (label_idx == header.size()) {
    std::string cols;
    for (std::size_t i = 0; i < header.size(); ++i)
      cols += (i ? ", " : "") + header[i];
    throw InvalidInputError("csv line 1: label column '" + label_column +
                            "' not found (columns: " + cols + ")");
  }

  CsvDataset out;
  for (std::size_t i = 0; i < header.size(); ++i)
    if (i != label_idx) out.feature_names.push_back(header[i]);

  std::vector<double> values;
  std::vector<int> raw_labels;
  std::size_t rows = 0;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw InvalidInputError("csv line " + std::to_string(line_no) + ": expected " +
                              std::to_string(header.size()) + " fields, got " +
                              std::to_string(fields.size()));
    for (std::size_t i = 0; i < fields.size(); ++i) {
      const double v = parse_number(fields[i], line_no, header[i]);
      if (i == label_idx) {
        const double r = std::round(v);
        if (std::abs(v - r) > 1e-9)
          throw InvalidInputError("csv line " + std::to_string(line_no) +
                                  ": label '" + fields[i] + "' is not an integer");
        raw_labels.push_back(static_cast<int>(r));
      } else {
        values.push_back(v);
      }
    }
    ++rows;
  }
  if (rows == 0) throw InvalidInputError("csv has no data rows: " + path);

  // Remap possibly-sparse labels onto 0..C-1, keeping original order sorted.
  std::map<int, int> remap;
  for (int l : raw_labels) remap.emplace(l, 0);
  out.label_mapping.reserve(remap.size());
  for (auto& [orig, fresh] : remap) {
    fresh = static_cast<int>(out.label_mapping.size());
    out.label_mapping.push_back(orig);
  }

  out.data.x = Matrix(rows, header.size() - 1, std::move(values));
  out.data.y.resize(rows);
  for (std::size_t i = 0; i < rows; ++i) out.data.y[i] = remap.at(raw_labels[i]);
  out.data.num_classes = out.label_mapping.size();
  out.data.validate();
  ensure_finite(out.data.x, "csv features");
  return out;
}

void write_csv(const std::string& path, const Dataset& d,
               const std::vector<std::string>& feature_names,
               const std::string& label_column) {
  d.validate();
  if (!feature_names.empty() && feature_names.size() != d.dim())
    throw InvalidInputError("write_csv: " + std::to_string(feature_names.size()) +
                            " feature names for " + std::to_string(d.dim()) +
                            " columns");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write csv: " + path);
  out.precision(17);
  for (std::size_t j = 0; j < d.dim(); ++j) {
    if (j) out << ",";
    out << (feature_names.empty() ? "f" + std::to_string(j) : feature_names[j]);
  }
  out << "," << label_column << "\n";
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (std::size_t j = 0; j < d.dim(); ++j) {
      if (j) out << ",";
      out << d.x(i, j);
    }
    out << "," << d.y[i] << "\n";
  }
  if (!out) throw IoError("failed writing csv: " + path);
}

DatasetSplit split_forget(const Dataset& train, const Dataset& test,
                          const ForgetSpec& spec, std::uint64_t seed) {
  train.validate();
  test.validate();
  DatasetSplit split;
  split.train = train;
  split.test = test;
  split.forgetting_kind = spec.kind;
  split.seed = seed;

  if (spec.kind == ForgetKind::random_fraction) {
    if (spec.fraction <= 0.0 || spec.fraction >= 1.0)
      throw ConfigError("split_forget: fraction must lie in (0, 1), got " +
                        std::to_string(spec.fraction));
    const std::size_t n_f =
        static_cast<std::size_t>(spec.fraction * static_cast<double>(train.size()));
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng = Rng(seed).split(0xF0);
    rng.shuffle(order);
    split.d_f.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_f));
    split.d_r.assign(order.begin() + static_cast<std::ptrdiff_t>(n_f), order.end());
    std::sort(split.d_f.begin(), split.d_f.end());
    std::sort(split.d_r.begin(), split.d_r.end());
  } else {
    if (spec.class_label < 0 ||
        static_cast<std::size_t>(spec.class_label) >= train.num_classes)
      throw ConfigError("split_forget: class " + std::to_string(spec.class_label) +
                        " outside [0, " + std::to_string(train.num_classes) + ")");
    for (std::size_t i = 0; i < train.size(); ++i) {
      if (train.y[i] == spec.class_label)
        split.d_f.push_back(i);
      else
        split.d_r.push_back(i);
    }
    if (split.d_f.empty())
      throw ConfigError("split_forget: class " + std::to_string(spec.class_label) +
                        " has no samples in the training set");
  }
  split.validate();
  return split;
}

}  // namespace semu
