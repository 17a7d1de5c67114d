#pragma once

#include "semu/data.hpp"
#include "semu/nn.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace semu {

// Percent of argmax-correct predictions; ties go to the lowest class index.
double accuracy(const Model& m, const Matrix& x, const std::vector<int>& labels);
double accuracy(const Model& m, const Dataset& d);

// Argmax class per row, same tie rule as accuracy.
std::vector<int> predict_labels(const Model& m, const Matrix& x);

// 100 - accuracy on the forget set.
double compute_ua(const Model& m, const Dataset& d_f);

// Loss-threshold membership attacker: one standardized feature (per-sample
// true-class cross-entropy), logistic head trained by full-batch gradient
// descent on balanced member/non-member samples.
struct MiaAttacker {
  double weight = 0.0;
  double bias = 0.0;
  double feat_mean = 0.0;
  double feat_std = 1.0;

  double member_prob(double loss_feature) const;
  bool predicts_member(double loss_feature) const;  // member_prob >= 0.5
  double balanced_accuracy(const std::vector<double>& member_feats,
                           const std::vector<double>& nonmember_feats) const;
};

MiaAttacker train_mia_attacker(const std::vector<double>& member_losses,
                               const std::vector<double>& nonmember_losses);

// Balanced seeded subsampling of the two pools, then attacker training, then
// the score: percent of forget-set samples the attacker calls non-member.
double mia_score_from_features(const std::vector<double>& member_losses,
                               const std::vector<double>& nonmember_losses,
                               const std::vector<double>& forget_losses,
                               std::uint64_t seed);

double compute_mia(const Model& m, const Dataset& d_r, const Dataset& d_f,
                   const Dataset& d_test, std::uint64_t seed);

struct MetricValues {
  double ua = 0.0;
  double ra = 0.0;
  double ta = 0.0;
  double mia = 0.0;
  double tparams_pct = 0.0;
};

struct UnlearnReport {
  std::string method;
  std::string mode;
  double gamma = 0.0;
  std::uint64_t seed = 0;
  MetricValues metrics;
  std::optional<MetricValues> deltas_vs_retrain;
  // Wallclock is intentionally not recorded so reruns serialize identically.
};

UnlearnReport build_report(const Model& m, const DatasetSplit& split,
                           std::size_t trainable_params, std::size_t total_params,
                           const std::string& method, const std::string& mode,
                           double gamma, std::uint64_t seed, std::uint64_t mia_seed,
                           const UnlearnReport* retrain = nullptr);

// Recomputes deltas_vs_retrain on an existing report.
void attach_deltas(UnlearnReport& r, const UnlearnReport& retrain);

std::string report_to_json(const UnlearnReport& r);
UnlearnReport report_from_json(const std::string& text);
void save_report(const UnlearnReport& r, const std::string& path);
UnlearnReport load_report(const std::string& path);

// Two-decimal fixed rendering used in human-facing tables ("26.47", "0.54").
std::string format_pct(double v);
// One row per metric; values render as "26.47" or "26.47 (0.00)" with deltas.
std::string report_table(const UnlearnReport& r);

}  // namespace semu
