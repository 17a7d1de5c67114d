#include "semu/unlearn.hpp"

#include "semu/errors.hpp"
#include "semu/metrics.hpp"
#include "semu/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

namespace semu {

namespace {

constexpr std::uint64_t kRelabelStream = 0x7e1abe1ULL;
constexpr std::uint64_t kShuffleStream = 0x0d11ceULL;
constexpr std::uint64_t kSubsetStream = 0x5b5e7ULL;

Matrix gather_rows(const Matrix& src, const std::vector<std::size_t>& rows) {
  Matrix out(rows.size(), src.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < src.cols(); ++j) out(i, j) = src(rows[i], j);
  return out;
}

struct MergedEntry {
  bool is_forget = false;
  std::size_t idx = 0;
};

struct BatchParts {
  Matrix forget_x;
  std::vector<int> forget_labels;
  Matrix remain_x;
  std::vector<int> remain_labels;
};

BatchParts split_batch(const std::vector<MergedEntry>& entries, std::size_t begin,
                       std::size_t end, const Matrix& fx, const std::vector<int>& fy,
                       const Matrix* rx, const std::vector<int>* ry) {
  std::vector<std::size_t> f_rows, r_rows;
  for (std::size_t k = begin; k < end; ++k) {
    if (entries[k].is_forget)
      f_rows.push_back(entries[k].idx);
    else
      r_rows.push_back(entries[k].idx);
  }
  BatchParts parts;
  parts.forget_x = gather_rows(fx, f_rows);
  for (std::size_t r : f_rows) parts.forget_labels.push_back(fy[r]);
  if (rx) {
    parts.remain_x = gather_rows(*rx, r_rows);
    for (std::size_t r : r_rows) parts.remain_labels.push_back((*ry)[r]);
  }
  return parts;
}

void check_relabeled(const RelabeledForgetSet& f) {
  if (f.x.rows() == 0) throw ConfigError("forget set is empty");
  if (f.new_labels.size() != f.x.rows() || f.original_labels.size() != f.x.rows())
    throw InvalidInputError("relabeled forget set: label count mismatch");
  if (f.num_classes < 2) throw ConfigError("relabeled forget set: need at least 2 classes");
  for (std::size_t i = 0; i < f.x.rows(); ++i) {
    int nl = f.new_labels[i];
    if (nl < 0 || static_cast<std::size_t>(nl) >= f.num_classes)
      throw InvalidInputError("relabeled forget set: new label out of range");
    if (nl == f.original_labels[i])
      throw InvalidInputError("relabeled forget set: new label equals original");
  }
}

}  // namespace

std::string to_string(UnlearnMode m) {
  switch (m) {
    case UnlearnMode::forget_only: return "forget_only";
    case UnlearnMode::with_remain: return "with_remain";
    case UnlearnMode::with_subset: return "with_subset";
  }
  throw InvalidInputError("unknown unlearn mode");
}

UnlearnMode unlearn_mode_from_string(const std::string& s) {
  if (s == "forget_only") return UnlearnMode::forget_only;
  if (s == "with_remain") return UnlearnMode::with_remain;
  if (s == "with_subset") return UnlearnMode::with_subset;
  throw ConfigError("unknown unlearn mode: " + s);
}

std::string to_string(BaselineKind k) {
  switch (k) {
    case BaselineKind::retrain: return "retrain";
    case BaselineKind::ft: return "ft";
    case BaselineKind::ga: return "ga";
    case BaselineKind::rl: return "rl";
  }
  throw InvalidInputError("unknown baseline kind");
}

BaselineKind baseline_kind_from_string(const std::string& s) {
  if (s == "retrain") return BaselineKind::retrain;
  if (s == "ft") return BaselineKind::ft;
  if (s == "ga") return BaselineKind::ga;
  if (s == "rl") return BaselineKind::rl;
  throw ConfigError("unknown baseline kind: " + s);
}

void UnlearnConfig::validate() const {
  if (lr <= 0.0 || !std::isfinite(lr)) throw ConfigError("unlearn lr must be positive");
  if (momentum < 0.0 || momentum >= 1.0)
    throw ConfigError("unlearn momentum must be in [0, 1)");
  if (batch_size == 0) throw ConfigError("unlearn batch_size must be positive");
  if (alpha < 0.0 || !std::isfinite(alpha))
    throw ConfigError("unlearn alpha must be nonnegative");
  if (!(subset_fraction > 0.0 && subset_fraction <= 1.0))
    throw ConfigError("unlearn subset_fraction must be in (0, 1]");
}

RelabeledForgetSet relabel(const Dataset& forget_set, std::uint64_t seed) {
  forget_set.validate();
  if (forget_set.num_classes < 2)
    throw ConfigError("relabel: need at least 2 classes to pick a different label");

  RelabeledForgetSet out;
  out.x = forget_set.x;
  out.original_labels = forget_set.y;
  out.num_classes = forget_set.num_classes;
  out.seed = seed;
  out.new_labels.resize(forget_set.size());

  Rng rng = Rng(seed).split(kRelabelStream);
  for (std::size_t i = 0; i < forget_set.size(); ++i) {
    // Uniform over the other C-1 classes.
    std::size_t draw = rng.index(forget_set.num_classes - 1);
    int orig = forget_set.y[i];
    int picked = static_cast<int>(draw);
    if (picked >= orig) ++picked;
    out.new_labels[i] = picked;
  }
  return out;
}

UnlearnLossResult unlearn_loss_classification(const Model& m, const Matrix& forget_x,
                                              const std::vector<int>& forget_new_labels,
                                              const Matrix* remain_x,
                                              const std::vector<int>* remain_y,
                                              double alpha) {
  if (alpha < 0.0 || !std::isfinite(alpha))
    throw ConfigError("unlearn loss: alpha must be nonnegative");
  bool has_forget = forget_x.rows() > 0;
  bool has_remain = remain_x != nullptr && remain_x->rows() > 0;
  if (!has_forget && !has_remain)
    throw InvalidInputError("unlearn loss: both batch parts are empty");
  if (forget_x.rows() != forget_new_labels.size())
    throw InvalidInputError("unlearn loss: forget label count mismatch");
  if (alpha > 0.0 && remain_x == nullptr)
    throw ConfigError("unlearn loss: alpha > 0 requires a remain batch");
  if (has_remain && (remain_y == nullptr || remain_y->size() != remain_x->rows()))
    throw InvalidInputError("unlearn loss: remain label count mismatch");

  UnlearnLossResult res;
  res.grads = GradientSet::zeros_like(m);

  if (has_forget) {
    auto [loss_f, grads_f] = backward_ce(m, forget_x, forget_new_labels);
    res.loss_forget = loss_f;
    res.loss += loss_f;
    add_scaled(res.grads, grads_f, 1.0);
  }
  if (has_remain) {
    auto [loss_r, grads_r] = backward_ce(m, *remain_x, *remain_y);
    res.loss_remain = loss_r;
    if (alpha > 0.0) {
      res.loss += alpha * loss_r;
      add_scaled(res.grads, grads_r, alpha);
    }
  }
  return res;
}

std::string epoch_log_to_csv(const std::vector<UnlearnEpochLog>& log) {
  std::ostringstream out;
  out << "epoch,loss_forget,loss_remain,ua,ra\n";
  char buf[128];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,%.17g\n", e.epoch,
                  e.loss_forget, e.loss_remain, e.ua, e.ra);
    out << buf;
  }
  return out.str();
}

std::vector<UnlearnEpochLog> run_unlearning(AdaptedModel& am,
                                            const RelabeledForgetSet& forget,
                                            const Dataset* d_r,
                                            const UnlearnConfig& cfg,
                                            const Dataset* log_remain) {
  cfg.validate();
  check_relabeled(forget);
  if (forget.num_classes != am.base.num_classes)
    throw ConfigError("run_unlearning: forget set class count differs from model");

  if (cfg.mode != UnlearnMode::forget_only && d_r == nullptr)
    throw ConfigError("run_unlearning: " + to_string(cfg.mode) + " requires a remain set");

  // Training-time remain samples per mode; forget_only touches none even when
  // a remain set is supplied for logging.
  const Matrix* remain_x = nullptr;
  const std::vector<int>* remain_y = nullptr;
  Matrix subset_x;
  std::vector<int> subset_y;
  double eff_alpha = 0.0;
  if (cfg.mode == UnlearnMode::with_remain) {
    d_r->validate();
    remain_x = &d_r->x;
    remain_y = &d_r->y;
    eff_alpha = cfg.alpha;
  } else if (cfg.mode == UnlearnMode::with_subset) {
    d_r->validate();
    std::size_t n_sub = static_cast<std::size_t>(
        std::floor(cfg.subset_fraction * static_cast<double>(d_r->size())));
    std::vector<std::size_t> idx(d_r->size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng(cfg.seed).split(kSubsetStream).shuffle(idx);
    idx.resize(n_sub);
    std::sort(idx.begin(), idx.end());
    subset_x = gather_rows(d_r->x, idx);
    for (std::size_t r : idx) subset_y.push_back(d_r->y[r]);
    remain_x = &subset_x;
    remain_y = &subset_y;
    eff_alpha = cfg.alpha;
  }

  std::vector<MergedEntry> entries;
  for (std::size_t i = 0; i < forget.x.rows(); ++i) entries.push_back({true, i});
  if (remain_x)
    for (std::size_t i = 0; i < remain_x->rows(); ++i) entries.push_back({false, i});

  std::vector<Matrix*> r_params;
  std::vector<std::size_t> adapted_layers;
  for (std::size_t li = 0; li < am.adapters.size(); ++li) {
    if (am.adapters[li]) {
      r_params.push_back(&am.adapters[li]->r_mat);
      adapted_layers.push_back(li);
    }
  }

  // Evaluation sets for the per-epoch log.
  const Dataset* ra_set = d_r ? d_r : log_remain;
  if (ra_set && ra_set->size() == 0) ra_set = nullptr;

  SgdOptimizer opt(cfg.lr, cfg.momentum);
  Rng shuffle_rng = Rng(cfg.seed).split(kShuffleStream);
  std::vector<UnlearnEpochLog> log;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(entries);
    double lf_sum = 0.0, lr_sum = 0.0;
    std::size_t f_count = 0, r_count = 0;

    for (std::size_t begin = 0; begin < entries.size(); begin += cfg.batch_size) {
      std::size_t end = std::min(begin + cfg.batch_size, entries.size());
      BatchParts parts = split_batch(entries, begin, end, forget.x, forget.new_labels,
                                     remain_x, remain_y);
      bool batch_has_remain = parts.remain_x.rows() > 0;
      UnlearnLossResult res = unlearn_loss_classification(
          am.effective, parts.forget_x, parts.forget_labels,
          batch_has_remain ? &parts.remain_x : nullptr,
          batch_has_remain ? &parts.remain_labels : nullptr,
          batch_has_remain ? eff_alpha : 0.0);

      if (!r_params.empty()) {
        std::vector<Matrix> rgrads = adapter_gradients(am, res.grads);
        std::vector<const Matrix*> grad_ptrs;
        for (std::size_t li : adapted_layers) grad_ptrs.push_back(&rgrads[li]);
        opt.step_matrices(r_params, grad_ptrs);
        for (std::size_t li : adapted_layers) am.refresh_layer(li);
      }

      lf_sum += res.loss_forget * static_cast<double>(parts.forget_x.rows());
      lr_sum += res.loss_remain * static_cast<double>(parts.remain_x.rows());
      f_count += parts.forget_x.rows();
      r_count += parts.remain_x.rows();
    }

    UnlearnEpochLog entry;
    entry.epoch = epoch;
    entry.loss_forget = f_count ? lf_sum / static_cast<double>(f_count) : 0.0;
    entry.loss_remain = r_count ? lr_sum / static_cast<double>(r_count) : 0.0;
    entry.ua = 100.0 - accuracy(am.effective, forget.x, forget.original_labels);
    entry.ra = ra_set ? accuracy(am.effective, *ra_set)
                      : std::numeric_limits<double>::quiet_NaN();
    log.push_back(entry);
  }
  return log;
}

namespace {

// Shared full-weight loop for the ga and rl reference methods.
void baseline_loop(Model& m, const Matrix& fx, const std::vector<int>& fy,
                   const Matrix* rx, const std::vector<int>* ry, double alpha,
                   bool ascent, const BaselineConfig& cfg) {
  std::vector<MergedEntry> entries;
  for (std::size_t i = 0; i < fx.rows(); ++i) entries.push_back({true, i});
  if (rx)
    for (std::size_t i = 0; i < rx->rows(); ++i) entries.push_back({false, i});

  SgdOptimizer opt(cfg.lr, cfg.momentum);
  Rng shuffle_rng = Rng(cfg.seed).split(kShuffleStream);
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(entries);
    for (std::size_t begin = 0; begin < entries.size(); begin += cfg.batch_size) {
      std::size_t end = std::min(begin + cfg.batch_size, entries.size());
      BatchParts parts = split_batch(entries, begin, end, fx, fy, rx, ry);
      bool batch_has_remain = parts.remain_x.rows() > 0;
      UnlearnLossResult res = unlearn_loss_classification(
          m, parts.forget_x, parts.forget_labels,
          batch_has_remain ? &parts.remain_x : nullptr,
          batch_has_remain ? &parts.remain_labels : nullptr,
          batch_has_remain ? alpha : 0.0);
      if (ascent) {
        GradientSet neg = GradientSet::zeros_like(m);
        add_scaled(neg, res.grads, -1.0);
        opt.step(m, neg);
      } else {
        opt.step(m, res.grads);
      }
    }
  }
}

}  // namespace

Model run_baseline(BaselineKind kind, const Model& original, const DatasetSplit& split,
                   const BaselineConfig& cfg) {
  if (cfg.lr <= 0.0 || !std::isfinite(cfg.lr))
    throw ConfigError("baseline lr must be positive");
  if (cfg.momentum < 0.0 || cfg.momentum >= 1.0)
    throw ConfigError("baseline momentum must be in [0, 1)");
  if (cfg.batch_size == 0) throw ConfigError("baseline batch_size must be positive");
  if (cfg.alpha < 0.0 || !std::isfinite(cfg.alpha))
    throw ConfigError("baseline alpha must be nonnegative");
  original.validate();
  split.validate();

  TrainOptions opt;
  opt.epochs = cfg.epochs;
  opt.lr = cfg.lr;
  opt.momentum = cfg.momentum;
  opt.batch_size = cfg.batch_size;
  opt.seed = cfg.seed;

  switch (kind) {
    case BaselineKind::retrain: {
      std::vector<LayerSpec> specs;
      for (const auto& l : original.layers) specs.push_back(l.spec);
      Model fresh = init_model(specs, original.num_classes, cfg.init_seed);
      Dataset remain = split.remain_set();
      train(fresh, remain.x, remain.y, opt);
      return fresh;
    }
    case BaselineKind::ft: {
      Model m = original;
      Dataset remain = split.remain_set();
      train(m, remain.x, remain.y, opt);
      return m;
    }
    case BaselineKind::ga: {
      Model m = original;
      Dataset f = split.forget_set();
      baseline_loop(m, f.x, f.y, nullptr, nullptr, 0.0, true, cfg);
      return m;
    }
    case BaselineKind::rl: {
      Model m = original;
      RelabeledForgetSet rf = relabel(split.forget_set(), cfg.seed);
      if (cfg.with_remain) {
        Dataset remain = split.remain_set();
        baseline_loop(m, rf.x, rf.new_labels, &remain.x, &remain.y, cfg.alpha, false,
                      cfg);
      } else {
        baseline_loop(m, rf.x, rf.new_labels, nullptr, nullptr, 0.0, false, cfg);
      }
      return m;
    }
  }
  throw ConfigError("unknown baseline kind");
}

}  // namespace semu
