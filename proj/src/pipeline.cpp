#include "semu/pipeline.hpp"

#include "semu/diffusion.hpp"
#include "semu/errors.hpp"
#include "semu/metrics.hpp"
#include "semu/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <sstream>

namespace semu {

namespace {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir + ": " + ec.message());
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << content;
  if (!out) throw IoError("failed writing: " + path);
}

std::string join_path(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

std::string pct(double v) { return format_pct(v); }

// ---- classification plumbing ----

std::vector<LayerSpec> mlp_specs(std::size_t in_dim,
                                 const std::vector<std::size_t>& hidden,
                                 std::size_t out_dim) {
  std::vector<LayerSpec> specs;
  std::size_t prev = in_dim;
  for (std::size_t w : hidden) {
    LayerSpec l;
    l.kind = LayerKind::dense;
    l.activation = Activation::relu;
    l.in_dim = prev;
    l.out_dim = w;
    specs.push_back(l);
    prev = w;
  }
  LayerSpec out;
  out.kind = LayerKind::dense;
  out.activation = Activation::none;
  out.in_dim = prev;
  out.out_dim = out_dim;
  specs.push_back(out);
  return specs;
}

void check_model_matches(const RunConfig& cfg, const Model& m) {
  std::vector<LayerSpec> specs =
      mlp_specs(cfg.blobs.dim, cfg.model.hidden, cfg.blobs.num_classes);
  if (m.layers.size() != specs.size())
    throw ConfigError("checkpoint has " + std::to_string(m.layers.size()) +
                      " layers, config expects " + std::to_string(specs.size()));
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const LayerSpec& got = m.layers[i].spec;
    if (got.kind != LayerKind::dense || got.in_dim != specs[i].in_dim ||
        got.out_dim != specs[i].out_dim)
      throw ConfigError("checkpoint layer " + std::to_string(i) + " is " +
                        std::to_string(got.in_dim) + "x" + std::to_string(got.out_dim) +
                        ", config expects " + std::to_string(specs[i].in_dim) + "x" +
                        std::to_string(specs[i].out_dim));
  }
  if (m.num_classes != cfg.blobs.num_classes)
    throw ConfigError("checkpoint was trained for " + std::to_string(m.num_classes) +
                      " classes, config expects " +
                      std::to_string(cfg.blobs.num_classes));
}

BlobsDataset make_config_blobs(const RunConfig& cfg) {
  return make_blobs(cfg.blobs.num_classes, cfg.blobs.per_class, cfg.blobs.dim,
                    cfg.blobs.separation, cfg.blobs.sigma, cfg.seeds.data_seed);
}

DatasetSplit make_config_split(const RunConfig& cfg, const BlobsDataset& blobs) {
  return split_forget(blobs.train, blobs.test, cfg.forget, cfg.seeds.data_seed);
}

std::string adapter_summary(const AdaptedModel& am) {
  std::ostringstream out;
  out << "adapted layers:";
  bool any = false;
  for (std::size_t l = 0; l < am.adapters.size(); ++l) {
    if (!am.adapters[l]) continue;
    out << " " << l << ":r=" << am.adapters[l]->rank();
    any = true;
  }
  if (!any) out << " none";
  out << " (tparams " << pct(am.tparams_pct()) << "%)";
  return out.str();
}

std::string run_unlearn_classification(const RunConfig& cfg,
                                       const std::string& checkpoint_path,
                                       const std::string& out_dir, bool log_metrics);
std::string run_unlearn_diffusion(const RunConfig& cfg,
                                  const std::string& checkpoint_path,
                                  const std::string& oracle_path,
                                  const std::string& out_dir, bool log_metrics);

// ---- diffusion plumbing ----

Model train_oracle(const RunConfig& cfg, const BlobsDataset& mix) {
  std::vector<LayerSpec> specs = mlp_specs(2, {cfg.diffusion.oracle.hidden}, 4);
  Model oracle = init_model(specs, 4, cfg.seeds.model_seed);
  TrainOptions opt;
  opt.epochs = cfg.diffusion.oracle.epochs;
  opt.lr = cfg.diffusion.oracle.lr;
  opt.momentum = cfg.diffusion.oracle.momentum;
  opt.batch_size = cfg.diffusion.oracle.batch_size;
  opt.seed = cfg.seeds.model_seed;
  train(oracle, mix.train.x, mix.train.y, opt);
  return oracle;
}

// Mean generation-loss feature per sample: squared noise-prediction error
// averaged over a few seeded (t, eps) draws. Diffusion counterpart of the
// per-sample cross-entropy the classification attacker thresholds.
std::vector<double> denoise_features(const CondNoiseModel& m, const Dataset& d,
                                     const DiffusionSchedule& sched,
                                     std::uint64_t seed) {
  const int reps = 4;
  std::size_t n = d.size();
  std::vector<double> feats(n, 0.0);
  Rng rng(seed);
  for (int rep = 0; rep < reps; ++rep) {
    std::vector<int> t(n);
    Matrix eps(n, 2);
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = 1 + static_cast<int>(rng.index(sched.T));
      eps(i, 0) = rng.normal();
      eps(i, 1) = rng.normal();
    }
    Matrix x_t = forward_diffuse(d.x, t, eps, sched);
    Matrix pred = predict_noise(m, x_t, t, d.y);
    for (std::size_t i = 0; i < n; ++i) {
      double d0 = pred(i, 0) - eps(i, 0);
      double d1 = pred(i, 1) - eps(i, 1);
      feats[i] += d0 * d0 + d1 * d1;
    }
  }
  for (double& f : feats) f /= reps;
  return feats;
}

struct DdpmEval {
  std::vector<double> agreement;  // oracle agreement % per class
  Matrix samples;                 // all generated points, grouped by class
  std::vector<int> requested;
  std::vector<int> predicted;
  double ua = 0.0;  // 100 - agreement on the forgotten class
  double ta = 0.0;  // mean agreement across the other classes
};

DdpmEval eval_ddpm(const CondNoiseModel& m, const DiffusionSchedule& sched,
                   const Model& oracle, int forget_class, double guidance_w,
                   std::size_t per_class, std::uint64_t seed) {
  if (per_class == 0) throw ConfigError("diffusion.eval_samples must be positive");
  DdpmEval ev;
  std::size_t classes = m.num_classes;
  ev.samples = Matrix(classes * per_class, 2);
  double ta_sum = 0.0;
  for (std::size_t c = 0; c < classes; ++c) {
    Matrix pts = sample(m, sched, static_cast<int>(c), guidance_w, per_class,
                        Rng::mix(seed, c));
    std::vector<int> pred = predict_labels(oracle, pts);
    std::size_t agree = 0;
    for (std::size_t i = 0; i < per_class; ++i) {
      ev.samples(c * per_class + i, 0) = pts(i, 0);
      ev.samples(c * per_class + i, 1) = pts(i, 1);
      ev.requested.push_back(static_cast<int>(c));
      ev.predicted.push_back(pred[i]);
      if (pred[i] == static_cast<int>(c)) ++agree;
    }
    double pct_agree = 100.0 * static_cast<double>(agree) /
                       static_cast<double>(per_class);
    ev.agreement.push_back(pct_agree);
    if (static_cast<int>(c) == forget_class)
      ev.ua = 100.0 - pct_agree;
    else
      ta_sum += pct_agree;
  }
  ev.ta = ta_sum / static_cast<double>(classes - 1);
  return ev;
}

std::string all_samples_csv(const DdpmEval& ev) {
  std::ostringstream out;
  out << "x,y,requested_class,predicted_class\n";
  char buf[128];
  for (std::size_t i = 0; i < ev.samples.rows(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%d,%d\n", ev.samples(i, 0),
                  ev.samples(i, 1), ev.requested[i], ev.predicted[i]);
    out << buf;
  }
  return out.str();
}

UnlearnReport make_diffusion_report(const RunConfig& cfg, const DdpmEval& ev,
                                    double mia, double tparams,
                                    const std::string& method) {
  UnlearnReport r;
  r.method = method;
  r.mode = to_string(cfg.unlearn.mode);
  r.gamma = cfg.semu.gamma_default;
  r.seed = cfg.seeds.unlearn_seed;
  r.metrics.ua = ev.ua;
  r.metrics.ra = ev.ta;  // no remain-set accuracy exists for a sampler
  r.metrics.ta = ev.ta;
  r.metrics.mia = mia;
  r.metrics.tparams_pct = tparams;
  return r;
}

std::string agreement_lines(const char* tag, const DdpmEval& ev) {
  std::ostringstream out;
  out << tag << " oracle agreement:";
  for (std::size_t c = 0; c < ev.agreement.size(); ++c)
    out << " class" << c << "=" << pct(ev.agreement[c]);
  return out.str();
}

// ---- train ----

std::string run_train_classification(const RunConfig& cfg, const std::string& out_dir) {
  BlobsDataset blobs = make_config_blobs(cfg);
  std::vector<LayerSpec> specs =
      mlp_specs(cfg.blobs.dim, cfg.model.hidden, cfg.blobs.num_classes);
  Model m = init_model(specs, cfg.blobs.num_classes, cfg.seeds.model_seed);
  TrainOptions opt;
  opt.epochs = cfg.train.epochs;
  opt.lr = cfg.train.lr;
  opt.momentum = cfg.train.momentum;
  opt.batch_size = cfg.train.batch_size;
  opt.seed = cfg.seeds.model_seed;
  train(m, blobs.train.x, blobs.train.y, opt);

  ensure_dir(out_dir);
  std::string ckpt = join_path(out_dir, "checkpoint.json");
  save_model(m, ckpt);

  std::ostringstream out;
  out << "wrote " << ckpt << "\n";
  out << "train_accuracy " << pct(accuracy(m, blobs.train)) << "\n";
  out << "test_accuracy " << pct(accuracy(m, blobs.test)) << "\n";
  return out.str();
}

std::string run_train_diffusion(const RunConfig& cfg, const std::string& out_dir) {
  BlobsDataset mix = make_corner_mixture(cfg.mixture.per_class, cfg.mixture.radius,
                                         cfg.mixture.sigma, cfg.seeds.data_seed);
  DiffusionSchedule sched = linear_schedule(cfg.diffusion.timesteps,
                                            cfg.diffusion.beta_start,
                                            cfg.diffusion.beta_end);
  CondNoiseModel m = make_noise_model(4, cfg.diffusion.hidden,
                                      cfg.diffusion.embed_dim, cfg.seeds.model_seed);
  DdpmTrainOptions opt;
  opt.epochs = cfg.train.epochs;
  opt.lr = cfg.train.lr;
  opt.momentum = cfg.train.momentum;
  opt.batch_size = cfg.train.batch_size;
  opt.cond_drop_prob = cfg.diffusion.cond_drop_prob;
  opt.seed = cfg.seeds.model_seed;
  std::vector<double> losses = train_ddpm(m, mix.train, sched, opt);

  Model oracle = train_oracle(cfg, mix);

  ensure_dir(out_dir);
  std::string ckpt = join_path(out_dir, "checkpoint.json");
  std::string oracle_path = join_path(out_dir, "oracle.json");
  save_noise_model(m, sched, ckpt);
  save_model(oracle, oracle_path);

  std::ostringstream out;
  out << "wrote " << ckpt << "\n";
  out << "wrote " << oracle_path << "\n";
  if (!losses.empty()) out << "final_epoch_mse " << pct(losses.back()) << "\n";
  out << "held_out_denoise_mse "
      << pct(denoise_mse(m, mix.test, sched, cfg.seeds.data_seed)) << "\n";
  out << "oracle_train_accuracy " << pct(accuracy(oracle, mix.train)) << "\n";
  out << "oracle_test_accuracy " << pct(accuracy(oracle, mix.test)) << "\n";
  return out.str();
}

// ---- unlearn ----

std::string run_unlearn_classification(const RunConfig& cfg,
                                       const std::string& checkpoint_path,
                                       const std::string& out_dir, bool log_metrics) {
  Model original = load_model(checkpoint_path);
  check_model_matches(cfg, original);

  BlobsDataset blobs = make_config_blobs(cfg);
  DatasetSplit split = make_config_split(cfg, blobs);
  Dataset d_f = split.forget_set();
  Dataset d_r = split.remain_set();

  GradientSet grads = accumulate_forget_gradients(original, d_f.x, d_f.y, cfg.semu,
                                                  cfg.accum_batch_size);
  AdaptedModel am = build_adapters(original, grads, cfg.semu);
  std::vector<LayerSpectrum> spectra = spectrum_report(original, grads, cfg.semu);

  RelabeledForgetSet rl = relabel(d_f, cfg.seeds.unlearn_seed);
  UnlearnConfig ucfg;
  ucfg.mode = cfg.unlearn.mode;
  ucfg.epochs = cfg.unlearn.epochs;
  ucfg.lr = cfg.unlearn.lr;
  ucfg.momentum = cfg.unlearn.momentum;
  ucfg.batch_size = cfg.unlearn.batch_size;
  ucfg.alpha = cfg.unlearn.alpha;
  ucfg.subset_fraction = cfg.unlearn.subset_fraction;
  ucfg.seed = cfg.seeds.unlearn_seed;
  std::vector<UnlearnEpochLog> log = run_unlearning(am, rl, &d_r, ucfg);

  Model merged = merge_adapters(am);
  UnlearnReport report = build_report(merged, split, am.trainable_params(),
                                      am.total_weight_params(), "semu",
                                      to_string(cfg.unlearn.mode),
                                      cfg.semu.gamma_default, cfg.seeds.unlearn_seed,
                                      cfg.eval.mia_seed);

  ensure_dir(out_dir);
  save_model(merged, join_path(out_dir, "checkpoint.json"));
  save_report(report, join_path(out_dir, "report.json"));
  write_text_file(join_path(out_dir, "spectrum.csv"), spectrum_to_csv(spectra));
  if (log_metrics)
    write_text_file(join_path(out_dir, "unlearn_log.csv"), epoch_log_to_csv(log));

  std::ostringstream out;
  out << "wrote " << join_path(out_dir, "checkpoint.json") << ", report.json, "
      << "spectrum.csv" << (log_metrics ? ", unlearn_log.csv" : "") << "\n";
  out << adapter_summary(am) << "\n";
  out << report_table(report);
  return out.str();
}

std::string run_unlearn_diffusion(const RunConfig& cfg,
                                  const std::string& checkpoint_path,
                                  const std::string& oracle_path,
                                  const std::string& out_dir, bool log_metrics) {
  auto [proto, sched] = load_noise_model(checkpoint_path);
  std::string oracle_file = oracle_path.empty()
      ? (fs::path(checkpoint_path).parent_path() / "oracle.json").string()
      : oracle_path;
  Model oracle = load_model(oracle_file);

  BlobsDataset mix = make_corner_mixture(cfg.mixture.per_class, cfg.mixture.radius,
                                         cfg.mixture.sigma, cfg.seeds.data_seed);
  if (proto.num_classes != 4)
    throw ConfigError("diffusion checkpoint must model the 4-class mixture");
  int fc = cfg.forget.class_label;
  if (fc < 0 || fc >= 4)
    throw ConfigError("config field 'forget.forget_class' must be in [0, 4)");

  std::vector<std::size_t> f_idx, r_idx;
  for (std::size_t i = 0; i < mix.train.size(); ++i)
    (mix.train.y[i] == fc ? f_idx : r_idx).push_back(i);
  Dataset forget = subset(mix.train, f_idx);
  Dataset remain = subset(mix.train, r_idx);

  GradientSet grads = accumulate_generation_gradients(proto, forget, sched, cfg.semu,
                                                      cfg.seeds.unlearn_seed,
                                                      cfg.accum_batch_size);
  AdaptedModel am = build_adapters(proto.net, grads, cfg.semu);
  std::vector<LayerSpectrum> spectra = spectrum_report(proto.net, grads, cfg.semu);

  DdpmEval before = eval_ddpm(proto, sched, oracle, fc, cfg.diffusion.guidance_w,
                              cfg.diffusion.eval_samples, cfg.seeds.data_seed);

  GenUnlearnConfig gcfg;
  gcfg.iterations = cfg.diffusion.iterations;
  gcfg.lr = cfg.unlearn.lr;
  gcfg.momentum = cfg.unlearn.momentum;
  gcfg.batch_size = cfg.diffusion.batch_size;
  gcfg.beta_remain = cfg.diffusion.beta_remain;
  gcfg.guidance_w = cfg.diffusion.guidance_w;
  gcfg.mode = cfg.unlearn.mode;
  gcfg.subset_fraction = cfg.unlearn.subset_fraction;
  gcfg.fixed_relabel = cfg.diffusion.fixed_relabel;
  gcfg.both_branches = cfg.diffusion.both_branches;
  gcfg.seed = cfg.seeds.unlearn_seed;
  std::vector<GenIterationLog> log =
      run_generation_unlearning(am, proto, forget, &remain, sched, gcfg);

  CondNoiseModel unlearned;
  unlearned.net = merge_adapters(am);
  unlearned.num_classes = proto.num_classes;
  unlearned.embed_dim = proto.embed_dim;

  DdpmEval after = eval_ddpm(unlearned, sched, oracle, fc, cfg.diffusion.guidance_w,
                             cfg.diffusion.eval_samples, cfg.seeds.data_seed);

  std::vector<double> member_feats =
      denoise_features(unlearned, remain, sched, cfg.eval.mia_seed);
  std::vector<double> nonmember_feats =
      denoise_features(unlearned, mix.test, sched, cfg.eval.mia_seed);
  std::vector<double> forget_feats =
      denoise_features(unlearned, forget, sched, cfg.eval.mia_seed);
  double mia = mia_score_from_features(member_feats, nonmember_feats, forget_feats,
                                       cfg.eval.mia_seed);

  UnlearnReport report =
      make_diffusion_report(cfg, after, mia, am.tparams_pct(), "semu");

  ensure_dir(out_dir);
  save_noise_model(unlearned, sched, join_path(out_dir, "checkpoint.json"));
  save_report(report, join_path(out_dir, "report.json"));
  write_text_file(join_path(out_dir, "spectrum.csv"), spectrum_to_csv(spectra));
  write_text_file(join_path(out_dir, "samples.csv"), all_samples_csv(after));
  if (log_metrics)
    write_text_file(join_path(out_dir, "unlearn_log.csv"), gen_log_to_csv(log));

  std::ostringstream out;
  out << "wrote " << join_path(out_dir, "checkpoint.json") << ", report.json, "
      << "spectrum.csv, samples.csv" << (log_metrics ? ", unlearn_log.csv" : "")
      << "\n";
  out << adapter_summary(am) << "\n";
  out << agreement_lines("before", before) << "\n";
  out << agreement_lines("after", after) << "\n";
  out << report_table(report);
  return out.str();
}

// ---- baselines / eval / spectrum ----

std::string run_one_baseline(const RunConfig& cfg, BaselineKind kind,
                             const Model& original, const DatasetSplit& split,
                             const std::string& out_dir) {
  BaselineConfig bcfg;
  if (kind == BaselineKind::retrain) {
    bcfg.epochs = cfg.train.epochs;
    bcfg.lr = cfg.train.lr;
    bcfg.momentum = cfg.train.momentum;
    bcfg.batch_size = cfg.train.batch_size;
  } else {
    bcfg.epochs = cfg.unlearn.epochs;
    bcfg.lr = cfg.unlearn.lr;
    bcfg.momentum = cfg.unlearn.momentum;
    bcfg.batch_size = cfg.unlearn.batch_size;
  }
  bcfg.seed = cfg.seeds.unlearn_seed;
  bcfg.init_seed = cfg.seeds.unlearn_seed;
  bcfg.with_remain = cfg.unlearn.mode != UnlearnMode::forget_only;
  bcfg.alpha = cfg.unlearn.alpha;

  Model result = run_baseline(kind, original, split, bcfg);
  UnlearnReport report = build_report(result, split, result.weight_param_count(),
                                      result.weight_param_count(), to_string(kind),
                                      to_string(cfg.unlearn.mode),
                                      cfg.semu.gamma_default, cfg.seeds.unlearn_seed,
                                      cfg.eval.mia_seed);

  ensure_dir(out_dir);
  save_model(result, join_path(out_dir, "checkpoint.json"));
  save_report(report, join_path(out_dir, "report.json"));

  std::ostringstream out;
  out << "wrote " << join_path(out_dir, "report.json") << "\n";
  out << to_string(kind) << ":\n" << report_table(report);
  return out.str();
}

}  // namespace

std::string run_train(const RunConfig& cfg, const std::string& out_dir) {
  return cfg.task == RunConfig::Task::diffusion ? run_train_diffusion(cfg, out_dir)
                                                : run_train_classification(cfg, out_dir);
}

std::string run_unlearn(const RunConfig& cfg, const std::string& checkpoint_path,
                        const std::string& oracle_path, const std::string& out_dir,
                        bool log_metrics, std::size_t jobs) {
  if (!cfg.seeds.unlearn_seeds.empty()) {
    std::vector<std::uint64_t> seeds = cfg.seeds.unlearn_seeds;
    RunConfig base = cfg;
    base.seeds.unlearn_seeds.clear();
    ensure_dir(out_dir);

    auto task = [&](std::uint64_t s) {
      RunConfig c = base;
      c.seeds.unlearn_seed = s;
      std::string dir = join_path(out_dir, "seed_" + std::to_string(s));
      return "[seed " + std::to_string(s) + "]\n" +
             run_unlearn(c, checkpoint_path, oracle_path, dir, log_metrics, 1);
    };

    std::vector<std::string> parts(seeds.size());
    if (jobs > 1) {
      std::vector<std::future<std::string>> futs;
      for (std::uint64_t s : seeds)
        futs.push_back(std::async(std::launch::async, task, s));
      for (std::size_t i = 0; i < futs.size(); ++i) parts[i] = futs[i].get();
    } else {
      for (std::size_t i = 0; i < seeds.size(); ++i) parts[i] = task(seeds[i]);
    }
    std::ostringstream out;
    for (const std::string& p : parts) out << p;
    return out.str();
  }

  return cfg.task == RunConfig::Task::diffusion
             ? run_unlearn_diffusion(cfg, checkpoint_path, oracle_path, out_dir,
                                     log_metrics)
             : run_unlearn_classification(cfg, checkpoint_path, out_dir, log_metrics);
}

std::string run_baseline_cmd(const RunConfig& cfg, const std::string& kind,
                             const std::string& checkpoint_path,
                             const std::string& out_dir, std::size_t jobs) {
  if (cfg.task != RunConfig::Task::classification)
    throw ConfigError("baselines apply to classification runs only");
  Model original = load_model(checkpoint_path);
  check_model_matches(cfg, original);
  BlobsDataset blobs = make_config_blobs(cfg);
  DatasetSplit split = make_config_split(cfg, blobs);

  if (kind != "all")
    return run_one_baseline(cfg, baseline_kind_from_string(kind), original, split,
                            out_dir);

  const std::vector<BaselineKind> kinds = {BaselineKind::retrain, BaselineKind::ft,
                                           BaselineKind::ga, BaselineKind::rl};
  ensure_dir(out_dir);
  auto task = [&](BaselineKind k) {
    return run_one_baseline(cfg, k, original, split,
                            join_path(out_dir, to_string(k)));
  };

  std::vector<std::string> parts(kinds.size());
  if (jobs > 1) {
    std::vector<std::future<std::string>> futs;
    for (BaselineKind k : kinds) futs.push_back(std::async(std::launch::async, task, k));
    for (std::size_t i = 0; i < futs.size(); ++i) parts[i] = futs[i].get();
  } else {
    for (std::size_t i = 0; i < kinds.size(); ++i) parts[i] = task(kinds[i]);
  }
  std::ostringstream out;
  for (const std::string& p : parts) out << p;
  return out.str();
}

std::string run_eval_cmd(const RunConfig& cfg, const std::string& checkpoint_path,
                         const std::string& oracle_path, const std::string& out_dir) {
  UnlearnReport report;
  if (cfg.task == RunConfig::Task::diffusion) {
    auto [m, sched] = load_noise_model(checkpoint_path);
    std::string oracle_file = oracle_path.empty()
        ? (fs::path(checkpoint_path).parent_path() / "oracle.json").string()
        : oracle_path;
    Model oracle = load_model(oracle_file);
    BlobsDataset mix = make_corner_mixture(cfg.mixture.per_class, cfg.mixture.radius,
                                           cfg.mixture.sigma, cfg.seeds.data_seed);
    int fc = cfg.forget.class_label;
    if (fc < 0 || fc >= 4)
      throw ConfigError("config field 'forget.forget_class' must be in [0, 4)");
    std::vector<std::size_t> f_idx, r_idx;
    for (std::size_t i = 0; i < mix.train.size(); ++i)
      (mix.train.y[i] == fc ? f_idx : r_idx).push_back(i);
    Dataset forget = subset(mix.train, f_idx);
    Dataset remain = subset(mix.train, r_idx);

    DdpmEval ev = eval_ddpm(m, sched, oracle, fc, cfg.diffusion.guidance_w,
                            cfg.diffusion.eval_samples, cfg.seeds.data_seed);
    double mia = mia_score_from_features(
        denoise_features(m, remain, sched, cfg.eval.mia_seed),
        denoise_features(m, mix.test, sched, cfg.eval.mia_seed),
        denoise_features(m, forget, sched, cfg.eval.mia_seed), cfg.eval.mia_seed);
    report = make_diffusion_report(cfg, ev, mia, 0.0, cfg.eval.label);
  } else {
    Model m = load_model(checkpoint_path);
    check_model_matches(cfg, m);
    BlobsDataset blobs = make_config_blobs(cfg);
    DatasetSplit split = make_config_split(cfg, blobs);
    report = build_report(m, split, 0, m.weight_param_count(), cfg.eval.label,
                          to_string(cfg.unlearn.mode), cfg.semu.gamma_default,
                          cfg.seeds.unlearn_seed, cfg.eval.mia_seed);
  }

  ensure_dir(out_dir);
  save_report(report, join_path(out_dir, "report.json"));
  std::ostringstream out;
  out << "wrote " << join_path(out_dir, "report.json") << "\n";
  out << report_table(report);
  return out.str();
}

std::string run_spectrum_cmd(const RunConfig& cfg, const std::string& checkpoint_path,
                             const std::string& out_dir) {
  std::vector<LayerSpectrum> spectra;
  if (cfg.task == RunConfig::Task::diffusion) {
    auto [m, sched] = load_noise_model(checkpoint_path);
    BlobsDataset mix = make_corner_mixture(cfg.mixture.per_class, cfg.mixture.radius,
                                           cfg.mixture.sigma, cfg.seeds.data_seed);
    int fc = cfg.forget.class_label;
    std::vector<std::size_t> f_idx;
    for (std::size_t i = 0; i < mix.train.size(); ++i)
      if (mix.train.y[i] == fc) f_idx.push_back(i);
    Dataset forget = subset(mix.train, f_idx);
    GradientSet grads = accumulate_generation_gradients(m, forget, sched, cfg.semu,
                                                        cfg.seeds.unlearn_seed,
                                                        cfg.accum_batch_size);
    spectra = spectrum_report(m.net, grads, cfg.semu);
  } else {
    Model m = load_model(checkpoint_path);
    check_model_matches(cfg, m);
    BlobsDataset blobs = make_config_blobs(cfg);
    DatasetSplit split = make_config_split(cfg, blobs);
    Dataset d_f = split.forget_set();
    GradientSet grads = accumulate_forget_gradients(m, d_f.x, d_f.y, cfg.semu,
                                                    cfg.accum_batch_size);
    spectra = spectrum_report(m, grads, cfg.semu);
  }

  ensure_dir(out_dir);
  write_text_file(join_path(out_dir, "spectrum.csv"), spectrum_to_csv(spectra));
  std::ostringstream out;
  out << "wrote " << join_path(out_dir, "spectrum.csv") << "\n";
  for (const LayerSpectrum& s : spectra)
    out << "layer " << s.layer_index << " " << to_string(s.kind) << " chosen_r "
        << s.chosen_r << "\n";
  return out.str();
}

std::string run_compare(const std::vector<std::string>& report_paths, int anchor_index,
                        const std::string& out_dir) {
  if (report_paths.empty()) throw ConfigError("compare needs at least one report");
  if (anchor_index >= static_cast<int>(report_paths.size()))
    throw ConfigError("compare anchor index " + std::to_string(anchor_index) +
                      " is out of range");

  std::vector<UnlearnReport> reports;
  for (const std::string& p : report_paths) reports.push_back(load_report(p));

  if (anchor_index >= 0) {
    UnlearnReport anchor = reports[static_cast<std::size_t>(anchor_index)];
    for (UnlearnReport& r : reports) attach_deltas(r, anchor);
  }

  std::size_t method_w = 6;
  for (const UnlearnReport& r : reports) method_w = std::max(method_w, r.method.size());

  auto cell = [&](double value, const MetricValues* deltas, double delta,
                  bool pct_suffix) {
    std::string s = pct(value) + (pct_suffix ? "%" : "");
    if (deltas) s += " (" + pct(delta) + ")";
    return s;
  };

  std::ostringstream table;
  table << "method";
  for (std::size_t i = 6; i < method_w; ++i) table << ' ';
  table << "  UA                RA                TA                MIA               "
        << "TParams\n";
  ordered_json jreports = ordered_json::array();
  for (const UnlearnReport& r : reports) {
    const MetricValues* d = r.deltas_vs_retrain ? &*r.deltas_vs_retrain : nullptr;
    table << r.method;
    for (std::size_t i = r.method.size(); i < method_w; ++i) table << ' ';
    table << "  ";
    char buf[40];
    auto pad = [&](const std::string& s) {
      std::snprintf(buf, sizeof(buf), "%-18s", s.c_str());
      table << buf;
    };
    pad(cell(r.metrics.ua, d, d ? d->ua : 0.0, false));
    pad(cell(r.metrics.ra, d, d ? d->ra : 0.0, false));
    pad(cell(r.metrics.ta, d, d ? d->ta : 0.0, false));
    pad(cell(r.metrics.mia, d, d ? d->mia : 0.0, false));
    table << cell(r.metrics.tparams_pct, d, d ? d->tparams_pct : 0.0, true) << "\n";
    jreports.push_back(ordered_json::parse(report_to_json(r)));
  }

  ordered_json doc;
  doc["anchor"] = anchor_index >= 0
      ? ordered_json(reports[static_cast<std::size_t>(anchor_index)].method)
      : ordered_json(nullptr);
  doc["reports"] = jreports;

  ensure_dir(out_dir);
  write_text_file(join_path(out_dir, "compare.json"), doc.dump(2) + "\n");
  return table.str();
}

}  // namespace semu
