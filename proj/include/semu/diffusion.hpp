#pragma once

#include "semu/adapters.hpp"
#include "semu/data.hpp"
#include "semu/nn.hpp"
#include "semu/unlearn.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace semu {

struct DiffusionSchedule {
  std::size_t T = 0;
  std::vector<double> beta;       // beta[t-1] holds the step-t variance
  std::vector<double> alpha_bar;  // cumulative products of (1 - beta)

  void validate() const;
};

DiffusionSchedule linear_schedule(std::size_t T = 50, double beta_start = 1e-4,
                                  double beta_end = 0.02);

// Class token for the unconditional branch.
constexpr int kNullClass = -1;

// Noise predictor over [x_t (2) | sinusoidal timestep features | one-hot class
// including a null slot]. net.num_classes is the output width (2); the real
// class count lives here.
struct CondNoiseModel {
  Model net;
  std::size_t num_classes = 0;
  std::size_t embed_dim = 0;  // even; sin/cos pairs

  std::size_t input_dim() const { return 2 + embed_dim + num_classes + 1; }
  void validate() const;
};

CondNoiseModel make_noise_model(std::size_t num_classes, std::size_t hidden,
                                std::size_t embed_dim, std::uint64_t seed);

// Feature rows the net consumes; exposed so losses and tests share one layout.
Matrix noise_model_inputs(const CondNoiseModel& m, const Matrix& x_t,
                          const std::vector<int>& t, const std::vector<int>& c);

Matrix predict_noise(const CondNoiseModel& m, const Matrix& x_t,
                     const std::vector<int>& t, const std::vector<int>& c);

// x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) noise, elementwise per row.
Matrix forward_diffuse(const Matrix& x0, const std::vector<int>& t, const Matrix& noise,
                       const DiffusionSchedule& sched);

// Guided estimate (1-w) eps(x_t|null) + w eps(x_t|c).
Matrix cfg_noise(const CondNoiseModel& m, const Matrix& x_t, const std::vector<int>& t,
                 const std::vector<int>& c, double w);

struct DdpmTrainOptions {
  std::size_t epochs = 50;
  double lr = 0.01;
  double momentum = 0.9;
  std::size_t batch_size = 64;
  double cond_drop_prob = 0.1;  // chance a sample trains with the null token
  std::uint64_t seed = 0;

  void validate() const;
};

// Returns per-epoch mean training MSE.
std::vector<double> train_ddpm(CondNoiseModel& m, const Dataset& data,
                               const DiffusionSchedule& sched,
                               const DdpmTrainOptions& opt);

// Mean ||eps_hat - eps||^2 over seeded (t, eps) draws; the held-out fit score.
double denoise_mse(const CondNoiseModel& m, const Dataset& data,
                   const DiffusionSchedule& sched, std::uint64_t seed);

// Ancestral sampling from pure noise; sigma_t = sqrt(beta_t), last step noiseless.
Matrix sample(const CondNoiseModel& m, const DiffusionSchedule& sched, int c, double w,
              std::size_t n, std::uint64_t seed);

// A prepared loss batch: the caller draws t, eps, and the substitute labels.
struct GenBatch {
  Matrix x0;
  std::vector<int> c;
  std::vector<int> c_prime;  // forget batches: per-sample label != c
  std::vector<int> t;
  Matrix eps;
};

struct GenLossResult {
  double loss = 0.0;
  double loss_forget = 0.0;
  double loss_remain = 0.0;
  GradientSet grads;
};

// loss = mean ||eps(x_t|c') - eps(x_t|c)||^2 + beta_remain * denoising MSE on
// the remain batch. The c' branch is a frozen target unless both_branches.
GenLossResult unlearn_loss_generation(const CondNoiseModel& m, const GenBatch& forget,
                                      const GenBatch* remain,
                                      const DiffusionSchedule& sched, double beta_remain,
                                      bool both_branches = false);

// Mirror of the classification selection step: accumulated gradient of the
// negated denoising loss over forget batches, with seeded (t, eps) draws.
GradientSet accumulate_generation_gradients(const CondNoiseModel& m,
                                            const Dataset& forget,
                                            const DiffusionSchedule& sched,
                                            const SemuConfig& cfg, std::uint64_t seed,
                                            std::size_t batch_size = 64);

struct GenUnlearnConfig {
  std::size_t iterations = 200;
  double lr = 0.01;
  double momentum = 0.9;
  std::size_t batch_size = 64;
  double beta_remain = 0.0;      // remain-term weight in the loss
  double guidance_w = 0.8;       // evaluation-time sampling guidance
  UnlearnMode mode = UnlearnMode::forget_only;
  double subset_fraction = 0.05;
  bool fixed_relabel = false;    // draw each sample's c' once instead of per iteration
  bool both_branches = false;
  std::uint64_t seed = 0;

  void validate() const;
};

struct GenIterationLog {
  std::size_t iteration = 0;
  double loss_forget = 0.0;
  double loss_remain = 0.0;
};

std::string gen_log_to_csv(const std::vector<GenIterationLog>& log);

// Iteration loop over batches sampled from relabeled-forget plus the mode's
// remain samples; only the adapter cores of `am` move. am.base must be the
// pretrained net of `proto`.
std::vector<GenIterationLog> run_generation_unlearning(AdaptedModel& am,
                                                       const CondNoiseModel& proto,
                                                       const Dataset& forget,
                                                       const Dataset* remain,
                                                       const DiffusionSchedule& sched,
                                                       const GenUnlearnConfig& cfg);

// Four equal Gaussian clusters on the corners of a square of circumradius
// `radius`; 80/20 stratified train/test like the blob maker.
BlobsDataset make_corner_mixture(std::size_t per_class = 2000, double radius = 2.0,
                                 double sigma = 0.15, std::uint64_t seed = 0);

std::string samples_to_csv(const Matrix& samples, int requested_class,
                           const std::vector<int>& predicted);

// Checkpoint with the schedule stored alongside the network.
std::string serialize_noise_model(const CondNoiseModel& m, const DiffusionSchedule& s);
std::pair<CondNoiseModel, DiffusionSchedule> deserialize_noise_model(
    const std::string& text);
void save_noise_model(const CondNoiseModel& m, const DiffusionSchedule& s,
                      const std::string& path);
std::pair<CondNoiseModel, DiffusionSchedule> load_noise_model(const std::string& path);

}  // namespace semu
