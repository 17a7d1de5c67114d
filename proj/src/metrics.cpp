#include "semu/metrics.hpp"

#include "semu/errors.hpp"
#include "semu/rng.hpp"
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace semu {

namespace {

using ordered_json = nlohmann::ordered_json;

std::vector<int> argmax_rows(const Matrix& logits) {
  std::vector<int> out(logits.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < logits.cols(); ++j) {
      if (logits(i, j) > logits(i, best)) best = j;  // strict: ties keep lowest
    }
    out[i] = static_cast<int>(best);
  }
  return out;
}

std::vector<double> balanced_subsample(const std::vector<double>& pool, std::size_t n,
                                       Rng rng) {
  std::vector<std::size_t> idx(pool.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  rng.shuffle(idx);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = pool[idx[i]];
  return out;
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

void check_range(const char* name, double v) {
  if (!(v >= 0.0 && v <= 100.0))
    throw NumericalError(std::string(name) + " outside [0,100]: " + std::to_string(v));
}

MetricValues metric_deltas(const MetricValues& a, const MetricValues& b) {
  MetricValues d;
  d.ua = a.ua - b.ua;
  d.ra = a.ra - b.ra;
  d.ta = a.ta - b.ta;
  d.mia = a.mia - b.mia;
  d.tparams_pct = a.tparams_pct - b.tparams_pct;
  return d;
}

ordered_json metrics_to_json(const MetricValues& m) {
  ordered_json j;
  j["ua"] = m.ua;
  j["ra"] = m.ra;
  j["ta"] = m.ta;
  j["mia"] = m.mia;
  j["tparams_pct"] = m.tparams_pct;
  return j;
}

MetricValues metrics_from_json(const ordered_json& j, const char* where) {
  if (!j.is_object()) throw InvalidInputError(std::string(where) + ": expected an object");
  MetricValues m;
  for (const char* key : {"ua", "ra", "ta", "mia", "tparams_pct"}) {
    if (!j.contains(key) || !j.at(key).is_number())
      throw InvalidInputError(std::string(where) + ": missing numeric field '" + key + "'");
  }
  m.ua = j.at("ua").get<double>();
  m.ra = j.at("ra").get<double>();
  m.ta = j.at("ta").get<double>();
  m.mia = j.at("mia").get<double>();
  m.tparams_pct = j.at("tparams_pct").get<double>();
  return m;
}

}  // namespace

double accuracy(const Model& m, const Matrix& x, const std::vector<int>& labels) {
  if (x.rows() == 0) throw InvalidInputError("accuracy: empty dataset");
  if (labels.size() != x.rows())
    throw InvalidInputError("accuracy: label count does not match sample count");
  Matrix logits = forward(m, x);
  std::vector<int> pred = argmax_rows(logits);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (pred[i] == labels[i]) ++correct;
  return 100.0 * static_cast<double>(correct) / static_cast<double>(pred.size());
}

double accuracy(const Model& m, const Dataset& d) { return accuracy(m, d.x, d.y); }

std::vector<int> predict_labels(const Model& m, const Matrix& x) {
  if (x.rows() == 0) throw InvalidInputError("predict_labels: empty input");
  return argmax_rows(forward(m, x));
}

double compute_ua(const Model& m, const Dataset& d_f) {
  if (d_f.size() == 0) throw InvalidInputError("compute_ua: empty forget set");
  return 100.0 - accuracy(m, d_f);
}

double MiaAttacker::member_prob(double loss_feature) const {
  double z = (loss_feature - feat_mean) / feat_std;
  return sigmoid(weight * z + bias);
}

bool MiaAttacker::predicts_member(double loss_feature) const {
  return member_prob(loss_feature) >= 0.5;
}

double MiaAttacker::balanced_accuracy(const std::vector<double>& member_feats,
                                      const std::vector<double>& nonmember_feats) const {
  if (member_feats.empty() || nonmember_feats.empty())
    throw InvalidInputError("balanced_accuracy: empty feature pool");
  std::size_t tp = 0, tn = 0;
  for (double f : member_feats)
    if (predicts_member(f)) ++tp;
  for (double f : nonmember_feats)
    if (!predicts_member(f)) ++tn;
  double tpr = static_cast<double>(tp) / static_cast<double>(member_feats.size());
  double tnr = static_cast<double>(tn) / static_cast<double>(nonmember_feats.size());
  return 100.0 * 0.5 * (tpr + tnr);
}

MiaAttacker train_mia_attacker(const std::vector<double>& member_losses,
                               const std::vector<double>& nonmember_losses) {
  if (member_losses.empty() || nonmember_losses.empty())
    throw InvalidInputError("train_mia_attacker: empty feature pool");

  std::vector<double> feats;
  feats.reserve(member_losses.size() + nonmember_losses.size());
  feats.insert(feats.end(), member_losses.begin(), member_losses.end());
  feats.insert(feats.end(), nonmember_losses.begin(), nonmember_losses.end());

  double mean = std::accumulate(feats.begin(), feats.end(), 0.0) /
                static_cast<double>(feats.size());
  double var = 0.0;
  for (double f : feats) var += (f - mean) * (f - mean);
  var /= static_cast<double>(feats.size());
  double stdev = std::sqrt(var);
  if (stdev < 1e-12) stdev = 1.0;

  MiaAttacker a;
  a.feat_mean = mean;
  a.feat_std = stdev;

  // Full-batch logistic regression on the single standardized feature.
  const std::size_t iters = 500;
  const double lr = 0.5;
  const double n = static_cast<double>(feats.size());
  for (std::size_t it = 0; it < iters; ++it) {
    double gw = 0.0, gb = 0.0;
    for (std::size_t i = 0; i < feats.size(); ++i) {
      double z = (feats[i] - mean) / stdev;
      double target = i < member_losses.size() ? 1.0 : 0.0;
      double p = sigmoid(a.weight * z + a.bias);
      gw += (p - target) * z;
      gb += (p - target);
    }
    a.weight -= lr * gw / n;
    a.bias -= lr * gb / n;
  }
  return a;
}

double mia_score_from_features(const std::vector<double>& member_losses,
                               const std::vector<double>& nonmember_losses,
                               const std::vector<double>& forget_losses,
                               std::uint64_t seed) {
  if (member_losses.empty() || nonmember_losses.empty() || forget_losses.empty())
    throw InvalidInputError("mia_score_from_features: empty feature pool");

  std::size_t n = std::min(member_losses.size(), nonmember_losses.size());
  Rng rng(seed);
  std::vector<double> members = balanced_subsample(member_losses, n, rng.split(1));
  std::vector<double> nonmembers = balanced_subsample(nonmember_losses, n, rng.split(2));

  MiaAttacker a = train_mia_attacker(members, nonmembers);
  std::size_t called_nonmember = 0;
  for (double f : forget_losses)
    if (!a.predicts_member(f)) ++called_nonmember;
  return 100.0 * static_cast<double>(called_nonmember) /
         static_cast<double>(forget_losses.size());
}

double compute_mia(const Model& m, const Dataset& d_r, const Dataset& d_f,
                   const Dataset& d_test, std::uint64_t seed) {
  if (d_r.size() == 0 || d_f.size() == 0 || d_test.size() == 0)
    throw InvalidInputError("compute_mia: all of remain/forget/test must be nonempty");
  std::vector<double> member = per_sample_ce(m, d_r.x, d_r.y);
  std::vector<double> nonmember = per_sample_ce(m, d_test.x, d_test.y);
  std::vector<double> forget = per_sample_ce(m, d_f.x, d_f.y);
  return mia_score_from_features(member, nonmember, forget, seed);
}

UnlearnReport build_report(const Model& m, const DatasetSplit& split,
                           std::size_t trainable_params, std::size_t total_params,
                           const std::string& method, const std::string& mode,
                           double gamma, std::uint64_t seed, std::uint64_t mia_seed,
                           const UnlearnReport* retrain) {
  if (total_params == 0) throw ConfigError("build_report: total parameter count is zero");
  if (trainable_params > total_params)
    throw ConfigError("build_report: trainable exceeds total parameter count");
  split.validate();

  Dataset d_f = split.forget_set();
  Dataset d_r = split.remain_set();

  UnlearnReport r;
  r.method = method;
  r.mode = mode;
  r.gamma = gamma;
  r.seed = seed;
  r.metrics.ua = compute_ua(m, d_f);
  r.metrics.ra = accuracy(m, d_r);
  r.metrics.ta = accuracy(m, split.test);
  r.metrics.mia = compute_mia(m, d_r, d_f, split.test, mia_seed);
  r.metrics.tparams_pct =
      100.0 * static_cast<double>(trainable_params) / static_cast<double>(total_params);

  check_range("ua", r.metrics.ua);
  check_range("ra", r.metrics.ra);
  check_range("ta", r.metrics.ta);
  check_range("mia", r.metrics.mia);
  check_range("tparams_pct", r.metrics.tparams_pct);

  if (retrain) attach_deltas(r, *retrain);
  return r;
}

void attach_deltas(UnlearnReport& r, const UnlearnReport& retrain) {
  r.deltas_vs_retrain = metric_deltas(r.metrics, retrain.metrics);
}

std::string report_to_json(const UnlearnReport& r) {
  ordered_json j;
  j["method"] = r.method;
  j["mode"] = r.mode;
  j["gamma"] = r.gamma;
  j["seed"] = r.seed;
  j["metrics"] = metrics_to_json(r.metrics);
  if (r.deltas_vs_retrain)
    j["deltas_vs_retrain"] = metrics_to_json(*r.deltas_vs_retrain);
  else
    j["deltas_vs_retrain"] = nullptr;
  j["wallclock_s"] = nullptr;
  return j.dump(2) + "\n";
}

UnlearnReport report_from_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const std::exception& e) {
    throw InvalidInputError(std::string("report parse: ") + e.what());
  }
  if (!j.is_object()) throw InvalidInputError("report parse: expected a JSON object");
  for (const char* key : {"method", "mode", "gamma", "seed", "metrics", "deltas_vs_retrain"}) {
    if (!j.contains(key))
      throw InvalidInputError(std::string("report parse: missing field '") + key + "'");
  }
  if (!j.at("method").is_string() || !j.at("mode").is_string())
    throw InvalidInputError("report parse: method/mode must be strings");
  if (!j.at("gamma").is_number() || !j.at("seed").is_number_unsigned())
    throw InvalidInputError("report parse: gamma must be a number and seed unsigned");

  UnlearnReport r;
  r.method = j.at("method").get<std::string>();
  r.mode = j.at("mode").get<std::string>();
  r.gamma = j.at("gamma").get<double>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.metrics = metrics_from_json(j.at("metrics"), "report metrics");
  if (!j.at("deltas_vs_retrain").is_null())
    r.deltas_vs_retrain = metrics_from_json(j.at("deltas_vs_retrain"), "report deltas");
  return r;
}

void save_report(const UnlearnReport& r, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open report for writing: " + path);
  out << report_to_json(r);
  if (!out) throw IoError("failed writing report: " + path);
}

UnlearnReport load_report(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open report: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return report_from_json(buf.str());
}

std::string format_pct(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return std::string(buf);
}

std::string report_table(const UnlearnReport& r) {
  std::ostringstream out;
  out << "method   " << r.method << "\n";
  out << "mode     " << r.mode << "\n";
  out << "gamma    " << format_pct(r.gamma) << "\n";
  out << "seed     " << r.seed << "\n";
  auto row = [&](const char* name, double value, double MetricValues::* field,
                 bool percent_suffix) {
    out << name;
    out << format_pct(value);
    if (percent_suffix) out << "%";
    if (r.deltas_vs_retrain) out << " (" << format_pct((*r.deltas_vs_retrain).*field) << ")";
    out << "\n";
  };
  row("UA       ", r.metrics.ua, &MetricValues::ua, false);
  row("RA       ", r.metrics.ra, &MetricValues::ra, false);
  row("TA       ", r.metrics.ta, &MetricValues::ta, false);
  row("MIA      ", r.metrics.mia, &MetricValues::mia, false);
  row("TParams  ", r.metrics.tparams_pct, &MetricValues::tparams_pct, true);
  return out.str();
}

}  // namespace semu
