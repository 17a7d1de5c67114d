#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "semu/adapters.hpp"
#include "semu/data.hpp"
#include "semu/unlearn.hpp"

namespace semu {

// One experiment, fully described. Parsed strictly: unknown keys and type
// mismatches raise ConfigError naming the dotted field path. `task` is the
// only required field; every other value has a frozen default so the
// acceptance-scale runs need no config file at all.
struct RunConfig {
  enum class Task { classification, diffusion };
  Task task = Task::classification;

  struct ModelSpec {
    std::vector<std::size_t> hidden = {64, 64};  // MLP widths between in and out
  } model;

  // classification data: separated Gaussian blobs
  struct BlobsSpec {
    std::size_t num_classes = 8;
    std::size_t per_class = 100;
    std::size_t dim = 2;
    double separation = 6.0;
    double sigma = 1.0;
  } blobs;

  // diffusion data: four-cluster corner mixture
  struct MixtureSpec {
    std::size_t per_class = 2000;
    double radius = 2.0;
    double sigma = 0.15;
  } mixture;

  ForgetSpec forget;  // kind + fraction or class label

  struct TrainSpec {
    std::size_t epochs = 40;
    double lr = 0.01;
    double momentum = 0.9;
    std::size_t batch_size = 32;
  } train;  // diffusion defaults: 60 epochs, batch 64

  SemuConfig semu;
  std::size_t accum_batch_size = 64;  // batching for the selection gradient

  struct UnlearnSpec {
    UnlearnMode mode = UnlearnMode::forget_only;
    std::size_t epochs = 10;
    double lr = 0.01;
    double momentum = 0.9;
    std::size_t batch_size = 32;
    double alpha = 1.0;
    double subset_fraction = 0.05;
  } unlearn;

  struct DiffusionSpec {
    std::size_t timesteps = 50;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    std::size_t hidden = 64;
    std::size_t embed_dim = 8;
    double cond_drop_prob = 0.1;
    std::size_t iterations = 300;
    std::size_t batch_size = 64;
    double beta_remain = 1.0;
    double guidance_w = 0.8;
    bool fixed_relabel = false;
    bool both_branches = false;
    std::size_t eval_samples = 256;  // generated per class during evaluation
    struct OracleSpec {
      std::size_t hidden = 32;
      std::size_t epochs = 40;
      double lr = 0.01;
      double momentum = 0.9;
      std::size_t batch_size = 64;
    } oracle;
  } diffusion;

  struct EvalSpec {
    std::uint64_t mia_seed = 0;
    std::string label = "eval";  // method column for the eval subcommand
  } eval;

  struct Seeds {
    std::uint64_t model_seed = 1;
    std::uint64_t data_seed = 2;
    std::uint64_t unlearn_seed = 3;
    std::vector<std::uint64_t> unlearn_seeds;  // optional sweep; overrides single seed
  } seeds;

  void validate() const;  // cheap cross-field checks; modules re-validate at run time
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

// "a.b.c=value" into the raw JSON document; value parses as JSON when it can,
// else as a literal string. Creating intermediate objects is allowed, crossing
// a non-object value is not.
void apply_override(std::string& json_text, const std::string& dotted_assignment);

// Convenience: file (or "{}" when path empty) + repeated --set overrides.
RunConfig resolve_config(const std::string& path, const std::vector<std::string>& sets);

}  // namespace semu
