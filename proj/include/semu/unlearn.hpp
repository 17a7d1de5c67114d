#pragma once

#include "semu/adapters.hpp"
#include "semu/data.hpp"
#include "semu/nn.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace semu {

enum class UnlearnMode { forget_only, with_remain, with_subset };
std::string to_string(UnlearnMode m);
UnlearnMode unlearn_mode_from_string(const std::string& s);

struct UnlearnConfig {
  std::size_t epochs = 10;
  double lr = 0.01;
  double momentum = 0.9;
  std::size_t batch_size = 32;
  double alpha = 1.0;  // weight of the remain term; ignored in forget_only
  UnlearnMode mode = UnlearnMode::forget_only;
  double subset_fraction = 0.05;  // share of the remain set used in with_subset
  std::uint64_t seed = 0;

  void validate() const;
};

// Forget samples paired with replacement labels drawn once, uniformly over the
// other classes, before any optimization starts.
struct RelabeledForgetSet {
  Matrix x;
  std::vector<int> new_labels;
  std::vector<int> original_labels;
  std::size_t num_classes = 0;
  std::uint64_t seed = 0;
};

RelabeledForgetSet relabel(const Dataset& forget_set, std::uint64_t seed);

// Combined objective: mean CE of forget samples against their new labels plus
// alpha times mean CE of remain samples against their true labels. Gradients
// are taken over the model's weights and biases.
struct UnlearnLossResult {
  double loss = 0.0;
  double loss_forget = 0.0;
  double loss_remain = 0.0;
  GradientSet grads;
};

UnlearnLossResult unlearn_loss_classification(const Model& m, const Matrix& forget_x,
                                              const std::vector<int>& forget_new_labels,
                                              const Matrix* remain_x,
                                              const std::vector<int>* remain_y,
                                              double alpha);

struct UnlearnEpochLog {
  std::size_t epoch = 0;
  double loss_forget = 0.0;
  double loss_remain = 0.0;
  double ua = 0.0;
  double ra = 0.0;
};

std::string epoch_log_to_csv(const std::vector<UnlearnEpochLog>& log);

// Optimizes only the adapter cores; base weights and biases never move.
// d_r supplies remain samples (required by with_remain / with_subset). The
// remain set used for the per-epoch `ra` column is d_r when present, else
// log_remain; with neither, `ra` is recorded as NaN.
std::vector<UnlearnEpochLog> run_unlearning(AdaptedModel& am,
                                            const RelabeledForgetSet& forget,
                                            const Dataset* d_r,
                                            const UnlearnConfig& cfg,
                                            const Dataset* log_remain = nullptr);

enum class BaselineKind { retrain, ft, ga, rl };
std::string to_string(BaselineKind k);
BaselineKind baseline_kind_from_string(const std::string& s);

struct BaselineConfig {
  std::size_t epochs = 10;
  double lr = 0.01;
  double momentum = 0.9;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  std::uint64_t init_seed = 0;  // retrain: fresh-parameter seed
  bool with_remain = false;     // rl: also replay the remain set
  double alpha = 1.0;           // rl with_remain: remain-term weight
};

// All four reference methods update every weight. retrain ignores `original`'s
// parameters (fresh init, remain data only); ft fine-tunes on remain; ga takes
// ascent steps on the forget set's true-label loss; rl descends on relabeled
// forget samples, optionally mixed with remain.
Model run_baseline(BaselineKind kind, const Model& original, const DatasetSplit& split,
                   const BaselineConfig& cfg);

}  // namespace semu
