#include "semu/diffusion.hpp"

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

constexpr std::uint64_t kSubsetStream = 1;
constexpr std::uint64_t kFixedRelabelStream = 2;
constexpr std::uint64_t kBatchStream = 3;
constexpr std::uint64_t kCPrimeStream = 4;
constexpr std::uint64_t kTimestepStream = 5;
constexpr std::uint64_t kNoiseStream = 6;

Matrix gather_rows(const Matrix& src, const std::vector<std::size_t>& rows) {
  Matrix out(rows.size(), src.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < src.cols(); ++j) out(i, j) = src(rows[i], j);
  return out;
}

int draw_other_class(Rng& rng, int c, std::size_t num_classes) {
  int picked = static_cast<int>(rng.index(num_classes - 1));
  if (picked >= c) ++picked;
  return picked;
}

void check_class_tokens(const std::vector<int>& c, std::size_t num_classes,
                        const char* what) {
  for (int v : c)
    if (v < kNullClass || v >= static_cast<int>(num_classes))
      throw InvalidInputError(std::string(what) + ": class token out of range");
}

}  // namespace

void DiffusionSchedule::validate() const {
  if (T == 0) throw ConfigError("schedule needs at least one timestep");
  if (beta.size() != T || alpha_bar.size() != T)
    throw ConfigError("schedule vectors must have length T");
  double prod = 1.0;
  double prev_beta = 0.0;
  double prev_bar = 1.0;
  for (std::size_t i = 0; i < T; ++i) {
    if (!(beta[i] > 0.0 && beta[i] < 1.0))
      throw ConfigError("schedule beta out of (0,1) at step " + std::to_string(i + 1));
    if (beta[i] < prev_beta)
      throw ConfigError("schedule beta must be nondecreasing");
    prod *= 1.0 - beta[i];
    if (std::fabs(alpha_bar[i] - prod) > 1e-12)
      throw ConfigError("alpha_bar inconsistent with beta at step " +
                        std::to_string(i + 1));
    if (!(alpha_bar[i] > 0.0 && alpha_bar[i] < 1.0 && alpha_bar[i] < prev_bar))
      throw ConfigError("alpha_bar must decrease strictly within (0,1)");
    prev_beta = beta[i];
    prev_bar = alpha_bar[i];
  }
}

DiffusionSchedule linear_schedule(std::size_t T, double beta_start, double beta_end) {
  if (T == 0) throw ConfigError("schedule needs at least one timestep");
  if (!(beta_start > 0.0) || !(beta_end < 1.0) || beta_end < beta_start)
    throw ConfigError("schedule needs 0 < beta_start <= beta_end < 1");
  DiffusionSchedule s;
  s.T = T;
  s.beta.resize(T);
  s.alpha_bar.resize(T);
  double prod = 1.0;
  for (std::size_t i = 0; i < T; ++i) {
    double frac = T == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(T - 1);
    s.beta[i] = beta_start + (beta_end - beta_start) * frac;
    prod *= 1.0 - s.beta[i];
    s.alpha_bar[i] = prod;
  }
  s.validate();
  return s;
}

void CondNoiseModel::validate() const {
  if (num_classes == 0) throw ConfigError("noise model needs at least one class");
  if (embed_dim == 0 || embed_dim % 2 != 0)
    throw ConfigError("noise model embed_dim must be positive and even");
  net.validate();
  if (net.input_size() != input_dim())
    throw ConfigError("noise net input is " + std::to_string(net.input_size()) +
                      ", expected " + std::to_string(input_dim()));
  if (net.output_size() != 2)
    throw ConfigError("noise net must output 2 values");
}

CondNoiseModel make_noise_model(std::size_t num_classes, std::size_t hidden,
                                std::size_t embed_dim, std::uint64_t seed) {
  if (hidden == 0) throw ConfigError("noise model hidden width must be positive");
  CondNoiseModel m;
  m.num_classes = num_classes;
  m.embed_dim = embed_dim;

  LayerSpec l0, l1, l2;
  l0.kind = LayerKind::dense;
  l0.activation = Activation::relu;
  l0.in_dim = 2 + embed_dim + num_classes + 1;
  l0.out_dim = hidden;
  l1.kind = LayerKind::dense;
  l1.activation = Activation::relu;
  l1.in_dim = hidden;
  l1.out_dim = hidden;
  l2.kind = LayerKind::dense;
  l2.activation = Activation::none;
  l2.in_dim = hidden;
  l2.out_dim = 2;
  m.net = init_model({l0, l1, l2}, 2, seed);
  m.validate();
  return m;
}

Matrix noise_model_inputs(const CondNoiseModel& m, const Matrix& x_t,
                          const std::vector<int>& t, const std::vector<int>& c) {
  if (x_t.cols() != 2) throw InvalidInputError("noise model expects 2-D points");
  if (t.size() != x_t.rows() || c.size() != x_t.rows())
    throw InvalidInputError("noise model inputs: t/c size mismatch");
  check_class_tokens(c, m.num_classes, "noise model inputs");

  Matrix in(x_t.rows(), m.input_dim());
  std::size_t half = m.embed_dim / 2;
  for (std::size_t i = 0; i < x_t.rows(); ++i) {
    if (t[i] < 1) throw InvalidInputError("timestep must be at least 1");
    in(i, 0) = x_t(i, 0);
    in(i, 1) = x_t(i, 1);
    for (std::size_t k = 0; k < half; ++k) {
      double omega = std::pow(10000.0, -static_cast<double>(k) / static_cast<double>(half));
      in(i, 2 + 2 * k) = std::sin(t[i] * omega);
      in(i, 2 + 2 * k + 1) = std::cos(t[i] * omega);
    }
    std::size_t slot = c[i] == kNullClass ? m.num_classes : static_cast<std::size_t>(c[i]);
    in(i, 2 + m.embed_dim + slot) = 1.0;
  }
  return in;
}

Matrix predict_noise(const CondNoiseModel& m, const Matrix& x_t,
                     const std::vector<int>& t, const std::vector<int>& c) {
  return forward(m.net, noise_model_inputs(m, x_t, t, c));
}

Matrix forward_diffuse(const Matrix& x0, const std::vector<int>& t, const Matrix& noise,
                       const DiffusionSchedule& sched) {
  sched.validate();
  if (!x0.same_shape(noise))
    throw InvalidInputError("forward diffusion: x0 and noise shapes differ");
  if (t.size() != x0.rows())
    throw InvalidInputError("forward diffusion: timestep count mismatch");
  Matrix out(x0.rows(), x0.cols());
  for (std::size_t i = 0; i < x0.rows(); ++i) {
    if (t[i] < 1 || static_cast<std::size_t>(t[i]) > sched.T)
      throw InvalidInputError("timestep " + std::to_string(t[i]) +
                              " outside [1, " + std::to_string(sched.T) + "]");
    double bar = sched.alpha_bar[static_cast<std::size_t>(t[i]) - 1];
    double s0 = std::sqrt(bar);
    double s1 = std::sqrt(1.0 - bar);
    for (std::size_t j = 0; j < x0.cols(); ++j)
      out(i, j) = s0 * x0(i, j) + s1 * noise(i, j);
  }
  return out;
}

Matrix cfg_noise(const CondNoiseModel& m, const Matrix& x_t, const std::vector<int>& t,
                 const std::vector<int>& c, double w) {
  if (!(w >= 0.0 && w <= 1.0))
    throw ConfigError("guidance factor must be in [0, 1]");
  std::vector<int> null_c(x_t.rows(), kNullClass);
  Matrix eps_null = predict_noise(m, x_t, t, null_c);
  Matrix eps_cond = predict_noise(m, x_t, t, c);
  Matrix out(x_t.rows(), 2);
  for (std::size_t i = 0; i < out.size(); ++i)
    out.data()[i] = (1.0 - w) * eps_null.data()[i] + w * eps_cond.data()[i];
  return out;
}

void DdpmTrainOptions::validate() const {
  if (lr <= 0.0 || !std::isfinite(lr)) throw ConfigError("ddpm lr must be positive");
  if (momentum < 0.0 || momentum >= 1.0)
    throw ConfigError("ddpm momentum must be in [0, 1)");
  if (batch_size == 0) throw ConfigError("ddpm batch_size must be positive");
  if (!(cond_drop_prob >= 0.0 && cond_drop_prob < 1.0))
    throw ConfigError("cond_drop_prob must be in [0, 1)");
}

std::vector<double> train_ddpm(CondNoiseModel& m, const Dataset& data,
                               const DiffusionSchedule& sched,
                               const DdpmTrainOptions& opt) {
  opt.validate();
  sched.validate();
  m.validate();
  data.validate();
  if (data.size() == 0) throw ConfigError("ddpm training set is empty");
  if (data.num_classes != m.num_classes)
    throw ConfigError("ddpm training set has " + std::to_string(data.num_classes) +
                      " classes, model expects " + std::to_string(m.num_classes));
  if (data.x.cols() != 2) throw ConfigError("ddpm training data must be 2-D points");

  SgdOptimizer sgd(opt.lr, opt.momentum);
  Rng shuffle_rng = Rng(opt.seed).split(kBatchStream);
  Rng draw_rng = Rng(opt.seed).split(kNoiseStream);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  std::vector<double> epoch_loss;
  for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += opt.batch_size) {
      std::size_t end = std::min(begin + opt.batch_size, order.size());
      std::vector<std::size_t> rows(order.begin() + begin, order.begin() + end);
      Matrix x0 = gather_rows(data.x, rows);
      std::size_t n = rows.size();

      std::vector<int> t(n), c(n);
      Matrix eps(n, 2);
      for (std::size_t i = 0; i < n; ++i) {
        t[i] = 1 + static_cast<int>(draw_rng.index(sched.T));
        c[i] = draw_rng.uniform() < opt.cond_drop_prob ? kNullClass : data.y[rows[i]];
        eps(i, 0) = draw_rng.normal();
        eps(i, 1) = draw_rng.normal();
      }
      Matrix x_t = forward_diffuse(x0, t, eps, sched);
      Matrix in = noise_model_inputs(m, x_t, t, c);
      auto [loss, grads] = backward_mse(m.net, in, eps);
      sgd.step(m.net, grads);
      loss_sum += loss * static_cast<double>(n);
    }
    epoch_loss.push_back(loss_sum / static_cast<double>(data.size()));
  }
  return epoch_loss;
}

double denoise_mse(const CondNoiseModel& m, const Dataset& data,
                   const DiffusionSchedule& sched, std::uint64_t seed) {
  m.validate();
  sched.validate();
  if (data.size() == 0) throw InvalidInputError("denoise_mse: empty dataset");
  Rng rng(seed);
  std::size_t n = data.size();
  std::vector<int> t(n);
  Matrix eps(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    t[i] = 1 + static_cast<int>(rng.index(sched.T));
    eps(i, 0) = rng.normal();
    eps(i, 1) = rng.normal();
  }
  Matrix x_t = forward_diffuse(data.x, t, eps, sched);
  Matrix pred = predict_noise(m, x_t, t, data.y);
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    double d = pred.data()[i] - eps.data()[i];
    total += d * d;
  }
  return total / static_cast<double>(n);
}

Matrix sample(const CondNoiseModel& m, const DiffusionSchedule& sched, int c, double w,
              std::size_t n, std::uint64_t seed) {
  m.validate();
  sched.validate();
  if (c < kNullClass || c >= static_cast<int>(m.num_classes))
    throw InvalidInputError("sample: class token out of range");

  Rng init_rng = Rng(seed).split(1);
  Rng step_rng = Rng(seed).split(2);
  Matrix z(n, 2);
  for (std::size_t i = 0; i < z.size(); ++i) z.data()[i] = init_rng.normal();

  std::vector<int> t_vec(n), c_vec(n, c);
  for (std::size_t step = sched.T; step >= 1; --step) {
    std::fill(t_vec.begin(), t_vec.end(), static_cast<int>(step));
    Matrix eps_hat = cfg_noise(m, z, t_vec, c_vec, w);
    double beta = sched.beta[step - 1];
    double alpha = 1.0 - beta;
    double bar = sched.alpha_bar[step - 1];
    double coef = beta / std::sqrt(1.0 - bar);
    double inv_sqrt_alpha = 1.0 / std::sqrt(alpha);
    double sigma = std::sqrt(beta);
    for (std::size_t i = 0; i < z.size(); ++i) {
      double mean = inv_sqrt_alpha * (z.data()[i] - coef * eps_hat.data()[i]);
      z.data()[i] = step > 1 ? mean + sigma * step_rng.normal() : mean;
    }
  }
  return z;
}

GenLossResult unlearn_loss_generation(const CondNoiseModel& m, const GenBatch& forget,
                                      const GenBatch* remain,
                                      const DiffusionSchedule& sched, double beta_remain,
                                      bool both_branches) {
  sched.validate();
  if (beta_remain < 0.0 || !std::isfinite(beta_remain))
    throw ConfigError("generation loss: beta must be nonnegative");
  bool has_forget = forget.x0.rows() > 0;
  bool has_remain = remain != nullptr && remain->x0.rows() > 0;
  if (!has_forget && !has_remain)
    throw InvalidInputError("generation loss: both batch parts are empty");
  if (beta_remain > 0.0 && remain == nullptr)
    throw ConfigError("generation loss: beta > 0 requires a remain batch");

  GenLossResult res;
  res.grads = GradientSet::zeros_like(m.net);

  if (has_forget) {
    std::size_t n = forget.x0.rows();
    if (forget.c.size() != n || forget.c_prime.size() != n || forget.t.size() != n)
      throw InvalidInputError("generation loss: forget batch field sizes differ");
    if (!forget.x0.same_shape(forget.eps))
      throw InvalidInputError("generation loss: forget noise shape mismatch");
    for (std::size_t i = 0; i < n; ++i) {
      if (forget.c[i] < 0 || forget.c[i] >= static_cast<int>(m.num_classes) ||
          forget.c_prime[i] < 0 || forget.c_prime[i] >= static_cast<int>(m.num_classes))
        throw InvalidInputError("generation loss: class out of range");
      if (forget.c[i] == forget.c_prime[i])
        throw InvalidInputError("generation loss: substitute label equals original");
    }

    Matrix x_t = forward_diffuse(forget.x0, forget.t, forget.eps, sched);
    Matrix in_c = noise_model_inputs(m, x_t, forget.t, forget.c);
    Matrix in_cp = noise_model_inputs(m, x_t, forget.t, forget.c_prime);

    if (both_branches) {
      ForwardTrace tr_c = forward_trace(m.net, in_c);
      ForwardTrace tr_cp = forward_trace(m.net, in_cp);
      double inv_n = 1.0 / static_cast<double>(n);
      Matrix diff(n, 2);
      double loss = 0.0;
      for (std::size_t i = 0; i < diff.size(); ++i) {
        diff.data()[i] = tr_cp.output.data()[i] - tr_c.output.data()[i];
        loss += diff.data()[i] * diff.data()[i];
      }
      res.loss_forget = loss * inv_n;
      Matrix g_cp = (2.0 * inv_n) * diff;
      Matrix g_c = (-2.0 * inv_n) * diff;
      GradientSet gs_cp = backward_from_output_grad(m.net, tr_cp, g_cp);
      GradientSet gs_c = backward_from_output_grad(m.net, tr_c, g_c);
      add_scaled(res.grads, gs_cp, 1.0);
      add_scaled(res.grads, gs_c, 1.0);
    } else {
      Matrix target = forward(m.net, in_cp);  // frozen branch
      auto [loss_f, grads_f] = backward_mse(m.net, in_c, target);
      res.loss_forget = loss_f;
      add_scaled(res.grads, grads_f, 1.0);
    }
    res.loss += res.loss_forget;
  }

  if (has_remain) {
    std::size_t n = remain->x0.rows();
    if (remain->c.size() != n || remain->t.size() != n)
      throw InvalidInputError("generation loss: remain batch field sizes differ");
    if (!remain->x0.same_shape(remain->eps))
      throw InvalidInputError("generation loss: remain noise shape mismatch");
    Matrix x_t = forward_diffuse(remain->x0, remain->t, remain->eps, sched);
    Matrix in = noise_model_inputs(m, x_t, remain->t, remain->c);
    auto [loss_r, grads_r] = backward_mse(m.net, in, remain->eps);
    res.loss_remain = loss_r;
    if (beta_remain > 0.0) {
      res.loss += beta_remain * loss_r;
      add_scaled(res.grads, grads_r, beta_remain);
    }
  }
  return res;
}

GradientSet accumulate_generation_gradients(const CondNoiseModel& m,
                                            const Dataset& forget,
                                            const DiffusionSchedule& sched,
                                            const SemuConfig& cfg, std::uint64_t seed,
                                            std::size_t batch_size) {
  m.validate();
  sched.validate();
  forget.validate();
  if (forget.size() == 0) throw ConfigError("forget set is empty");
  if (batch_size == 0) throw ConfigError("accumulation batch size must be positive");

  GradientSet acc = GradientSet::zeros_like(m.net);
  Rng rng(seed);
  std::size_t batches = 0;
  for (std::size_t begin = 0; begin < forget.size(); begin += batch_size) {
    std::size_t end = std::min(begin + batch_size, forget.size());
    std::vector<std::size_t> rows(end - begin);
    std::iota(rows.begin(), rows.end(), begin);
    Matrix x0 = gather_rows(forget.x, rows);
    std::size_t n = rows.size();
    std::vector<int> t(n), c(n);
    Matrix eps(n, 2);
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = 1 + static_cast<int>(rng.index(sched.T));
      c[i] = forget.y[rows[i]];
      eps(i, 0) = rng.normal();
      eps(i, 1) = rng.normal();
    }
    Matrix x_t = forward_diffuse(x0, t, eps, sched);
    Matrix in = noise_model_inputs(m, x_t, t, c);
    auto [loss, grads] = backward_mse(m.net, in, eps);
    (void)loss;
    add_scaled(acc, grads, -1.0);  // gradient of the negated forgetting loss
    ++batches;
  }
  if (cfg.grad_reduction == SemuConfig::Reduction::mean && batches > 0) {
    GradientSet scaled = GradientSet::zeros_like(m.net);
    add_scaled(scaled, acc, 1.0 / static_cast<double>(batches));
    return scaled;
  }
  return acc;
}

void GenUnlearnConfig::validate() const {
  if (lr <= 0.0 || !std::isfinite(lr)) throw ConfigError("generation lr must be positive");
  if (momentum < 0.0 || momentum >= 1.0)
    throw ConfigError("generation momentum must be in [0, 1)");
  if (batch_size == 0) throw ConfigError("generation batch_size must be positive");
  if (beta_remain < 0.0 || !std::isfinite(beta_remain))
    throw ConfigError("generation beta must be nonnegative");
  if (!(guidance_w >= 0.0 && guidance_w <= 1.0))
    throw ConfigError("guidance factor must be in [0, 1]");
  if (!(subset_fraction > 0.0 && subset_fraction <= 1.0))
    throw ConfigError("generation subset_fraction must be in (0, 1]");
}

std::string gen_log_to_csv(const std::vector<GenIterationLog>& log) {
  std::ostringstream out;
  out << "iteration,loss_forget,loss_remain\n";
  char buf[96];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g\n", e.iteration, e.loss_forget,
                  e.loss_remain);
    out << buf;
  }
  return out.str();
}

std::vector<GenIterationLog> run_generation_unlearning(AdaptedModel& am,
                                                       const CondNoiseModel& proto,
                                                       const Dataset& forget,
                                                       const Dataset* remain,
                                                       const DiffusionSchedule& sched,
                                                       const GenUnlearnConfig& cfg) {
  cfg.validate();
  sched.validate();
  proto.validate();
  forget.validate();
  if (forget.size() == 0) throw ConfigError("forget set is empty");
  if (forget.num_classes != proto.num_classes)
    throw ConfigError("forget set class count differs from the noise model");
  if (proto.num_classes < 2)
    throw ConfigError("generation unlearning needs at least 2 classes");
  if (am.base.layers.size() != proto.net.layers.size())
    throw ConfigError("adapter base does not match the noise net");
  for (std::size_t l = 0; l < am.base.layers.size(); ++l)
    if (!am.base.layers[l].weight.same_shape(proto.net.layers[l].weight))
      throw ConfigError("adapter base does not match the noise net");
  if (cfg.mode != UnlearnMode::forget_only && remain == nullptr)
    throw ConfigError("run_generation_unlearning: " + to_string(cfg.mode) +
                      " requires a remain set");

  const Matrix* remain_x = nullptr;
  const std::vector<int>* remain_y = nullptr;
  Matrix subset_x;
  std::vector<int> subset_y;
  double eff_beta = 0.0;
  if (cfg.mode == UnlearnMode::with_remain) {
    remain->validate();
    remain_x = &remain->x;
    remain_y = &remain->y;
    eff_beta = cfg.beta_remain;
  } else if (cfg.mode == UnlearnMode::with_subset) {
    remain->validate();
    std::size_t n_sub = static_cast<std::size_t>(
        std::floor(cfg.subset_fraction * static_cast<double>(remain->size())));
    std::vector<std::size_t> idx(remain->size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng(cfg.seed).split(kSubsetStream).shuffle(idx);
    idx.resize(n_sub);
    std::sort(idx.begin(), idx.end());
    subset_x = gather_rows(remain->x, idx);
    for (std::size_t r : idx) subset_y.push_back(remain->y[r]);
    remain_x = &subset_x;
    remain_y = &subset_y;
    eff_beta = cfg.beta_remain;
  }

  std::vector<int> fixed_cprime;
  if (cfg.fixed_relabel) {
    Rng rl = Rng(cfg.seed).split(kFixedRelabelStream);
    fixed_cprime.resize(forget.size());
    for (std::size_t i = 0; i < forget.size(); ++i)
      fixed_cprime[i] = draw_other_class(rl, forget.y[i], proto.num_classes);
  }

  std::size_t n_forget = forget.size();
  std::size_t n_remain = remain_x ? remain_x->rows() : 0;
  std::size_t n_all = n_forget + n_remain;

  std::vector<Matrix*> r_params;
  std::vector<std::size_t> adapted_layers;
  for (std::size_t li = 0; li < am.adapters.size(); ++li) {
    if (am.adapters[li]) {
      r_params.push_back(&am.adapters[li]->r_mat);
      adapted_layers.push_back(li);
    }
  }

  SgdOptimizer opt(cfg.lr, cfg.momentum);
  Rng batch_rng = Rng(cfg.seed).split(kBatchStream);
  Rng cprime_rng = Rng(cfg.seed).split(kCPrimeStream);
  Rng t_rng = Rng(cfg.seed).split(kTimestepStream);
  Rng noise_rng = Rng(cfg.seed).split(kNoiseStream);

  CondNoiseModel eff;
  eff.num_classes = proto.num_classes;
  eff.embed_dim = proto.embed_dim;

  std::vector<GenIterationLog> log;
  for (std::size_t it = 1; it <= cfg.iterations; ++it) {
    std::vector<std::size_t> f_rows, r_rows;
    for (std::size_t k = 0; k < cfg.batch_size; ++k) {
      std::size_t pick = batch_rng.index(n_all);
      if (pick < n_forget)
        f_rows.push_back(pick);
      else
        r_rows.push_back(pick - n_forget);
    }

    GenBatch fb;
    fb.x0 = gather_rows(forget.x, f_rows);
    fb.eps = Matrix(f_rows.size(), 2);
    for (std::size_t i = 0; i < f_rows.size(); ++i) {
      int orig = forget.y[f_rows[i]];
      fb.c.push_back(orig);
      fb.c_prime.push_back(cfg.fixed_relabel ? fixed_cprime[f_rows[i]]
                                             : draw_other_class(cprime_rng, orig,
                                                                proto.num_classes));
      fb.t.push_back(1 + static_cast<int>(t_rng.index(sched.T)));
      fb.eps(i, 0) = noise_rng.normal();
      fb.eps(i, 1) = noise_rng.normal();
    }

    GenBatch rb;
    if (!r_rows.empty()) {
      rb.x0 = gather_rows(*remain_x, r_rows);
      rb.eps = Matrix(r_rows.size(), 2);
      for (std::size_t i = 0; i < r_rows.size(); ++i) {
        rb.c.push_back((*remain_y)[r_rows[i]]);
        rb.t.push_back(1 + static_cast<int>(t_rng.index(sched.T)));
        rb.eps(i, 0) = noise_rng.normal();
        rb.eps(i, 1) = noise_rng.normal();
      }
    }

    eff.net = am.effective;
    GenLossResult res = unlearn_loss_generation(
        eff, fb, r_rows.empty() ? nullptr : &rb, sched,
        r_rows.empty() ? 0.0 : eff_beta, cfg.both_branches);

    if (!r_params.empty()) {
      std::vector<Matrix> rgrads = adapter_gradients(am, res.grads);
      std::vector<const Matrix*> grad_ptrs;
      for (std::size_t li : adapted_layers) grad_ptrs.push_back(&rgrads[li]);
      opt.step_matrices(r_params, grad_ptrs);
      for (std::size_t li : adapted_layers) am.refresh_layer(li);
    }

    log.push_back({it, res.loss_forget, res.loss_remain});
  }
  return log;
}

BlobsDataset make_corner_mixture(std::size_t per_class, double radius, double sigma,
                                 std::uint64_t seed) {
  if (per_class < 5)
    throw ConfigError("corner mixture needs at least 5 points per class");
  if (!(radius > 0.0) || !(sigma >= 0.0))
    throw ConfigError("corner mixture needs radius > 0 and sigma >= 0");

  double a = radius / std::sqrt(2.0);
  const double cx[4] = {a, -a, -a, a};
  const double cy[4] = {a, a, -a, -a};

  BlobsDataset out;
  out.centers = Matrix(4, 2);
  for (int k = 0; k < 4; ++k) {
    out.centers(k, 0) = cx[k];
    out.centers(k, 1) = cy[k];
  }

  std::size_t train_n = per_class * 4 / 5;
  std::size_t test_n = per_class - train_n;
  out.train.num_classes = 4;
  out.test.num_classes = 4;
  out.train.x = Matrix(4 * train_n, 2);
  out.test.x = Matrix(4 * test_n, 2);

  Rng rng = Rng(seed).split(2);
  std::size_t ti = 0, si = 0;
  for (int k = 0; k < 4; ++k) {
    for (std::size_t i = 0; i < per_class; ++i) {
      double px = cx[k] + sigma * rng.normal();
      double py = cy[k] + sigma * rng.normal();
      if (i < train_n) {
        out.train.x(ti, 0) = px;
        out.train.x(ti, 1) = py;
        out.train.y.push_back(k);
        ++ti;
      } else {
        out.test.x(si, 0) = px;
        out.test.x(si, 1) = py;
        out.test.y.push_back(k);
        ++si;
      }
    }
  }
  out.train.validate();
  out.test.validate();
  return out;
}

std::string samples_to_csv(const Matrix& samples, int requested_class,
                           const std::vector<int>& predicted) {
  if (samples.cols() != 2)
    throw InvalidInputError("samples CSV expects 2-D points");
  if (predicted.size() != samples.rows())
    throw InvalidInputError("samples CSV: prediction count mismatch");
  std::ostringstream out;
  out << "x,y,requested_class,predicted_class\n";
  char buf[128];
  for (std::size_t i = 0; i < samples.rows(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%d,%d\n", samples(i, 0), samples(i, 1),
                  requested_class, predicted[i]);
    out << buf;
  }
  return out.str();
}

std::string serialize_noise_model(const CondNoiseModel& m, const DiffusionSchedule& s) {
  m.validate();
  s.validate();
  ordered_json j;
  j["format"] = "semu-ddpm-v1";
  j["cond_classes"] = m.num_classes;
  j["embed_dim"] = m.embed_dim;
  ordered_json sj;
  sj["T"] = s.T;
  sj["beta"] = s.beta;
  j["schedule"] = sj;
  j["model"] = ordered_json::parse(serialize_model(m.net));
  return j.dump(2) + "\n";
}

std::pair<CondNoiseModel, DiffusionSchedule> deserialize_noise_model(
    const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const std::exception& e) {
    throw InvalidInputError(std::string("ddpm checkpoint parse: ") + e.what());
  }
  if (!j.is_object() || !j.contains("format") || j.at("format") != "semu-ddpm-v1")
    throw InvalidInputError("ddpm checkpoint: unknown format");
  for (const char* key : {"cond_classes", "embed_dim", "schedule", "model"})
    if (!j.contains(key))
      throw InvalidInputError(std::string("ddpm checkpoint: missing field '") + key + "'");

  const auto& sj = j.at("schedule");
  if (!sj.is_object() || !sj.contains("T") || !sj.contains("beta"))
    throw InvalidInputError("ddpm checkpoint: malformed schedule");
  DiffusionSchedule s;
  s.T = sj.at("T").get<std::size_t>();
  s.beta = sj.at("beta").get<std::vector<double>>();
  if (s.beta.size() != s.T)
    throw InvalidInputError("ddpm checkpoint: schedule length mismatch");
  s.alpha_bar.resize(s.T);
  double prod = 1.0;
  for (std::size_t i = 0; i < s.T; ++i) {
    prod *= 1.0 - s.beta[i];
    s.alpha_bar[i] = prod;
  }
  s.validate();

  CondNoiseModel m;
  m.num_classes = j.at("cond_classes").get<std::size_t>();
  m.embed_dim = j.at("embed_dim").get<std::size_t>();
  m.net = deserialize_model(j.at("model").dump());
  m.validate();
  return {std::move(m), std::move(s)};
}

void save_noise_model(const CondNoiseModel& m, const DiffusionSchedule& s,
                      const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open ddpm checkpoint for writing: " + path);
  out << serialize_noise_model(m, s);
  if (!out) throw IoError("failed writing ddpm checkpoint: " + path);
}

std::pair<CondNoiseModel, DiffusionSchedule> load_noise_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open ddpm checkpoint: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_noise_model(buf.str());
}

}  // namespace semu
