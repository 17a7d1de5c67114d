#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "semu/matrix.hpp"

namespace semu {

enum class LayerKind { dense, conv2d };
enum class Activation { relu, none };

std::string to_string(LayerKind k);
std::string to_string(Activation a);
LayerKind layer_kind_from_string(const std::string& s);
Activation activation_from_string(const std::string& s);

struct LayerSpec {
  LayerKind kind = LayerKind::dense;
  Activation activation = Activation::none;
  // dense
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  // conv2d (weight stored as out_channels x (in_channels*kernel_h*kernel_w))
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel_h = 0;
  std::size_t kernel_w = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t input_h = 0;
  std::size_t input_w = 0;

  std::size_t out_h() const;
  std::size_t out_w() const;
  std::size_t input_size() const;   // flat input length
  std::size_t output_size() const;  // flat output length
  std::size_t weight_rows() const;
  std::size_t weight_cols() const;
  std::size_t bias_size() const;
  void validate() const;  // throws ConfigError
};

struct Layer {
  LayerSpec spec;
  Matrix weight;             // weight_rows x weight_cols
  std::vector<double> bias;  // bias_size
};

struct Model {
  std::vector<Layer> layers;
  std::size_t num_classes = 0;
  std::uint64_t rng_seed = 0;

  std::size_t input_size() const;
  std::size_t output_size() const;
  std::size_t weight_param_count() const;  // sum of weight matrix sizes, biases excluded
  void validate() const;                   // adjacency + shape conformance
};

struct GradientSet {
  std::vector<Matrix> weight;
  std::vector<std::vector<double>> bias;

  static GradientSet zeros_like(const Model& m);
};

// acc += scale * g, entrywise over every layer.
void add_scaled(GradientSet& acc, const GradientSet& g, double scale);

Model init_model(const std::vector<LayerSpec>& spec, std::size_t num_classes,
                 std::uint64_t seed);

// Layer-by-layer activations captured for the backward pass.
struct ForwardTrace {
  std::vector<Matrix> inputs;   // input to each layer (post previous activation)
  std::vector<Matrix> pre_act;  // each layer's output before its activation
  Matrix output;                // final activations (logits for classifiers)
};

Matrix forward(const Model& m, const Matrix& x);
ForwardTrace forward_trace(const Model& m, const Matrix& x);

// Backprop from d(loss)/d(output). Returns exact gradients for every layer.
// input_grad, if non-null, receives d(loss)/d(input).
GradientSet backward_from_output_grad(const Model& m, const ForwardTrace& trace,
                                      const Matrix& output_grad,
                                      Matrix* input_grad = nullptr);

// Weighted softmax cross-entropy: loss = sum_s w_s * CE_s. Default weights are
// 1/batch, giving the batch mean.
std::pair<double, GradientSet> backward_ce(const Model& m, const Matrix& x,
                                           const std::vector<int>& labels,
                                           const std::vector<double>* sample_weights = nullptr);

// Weighted squared-error: loss = sum_s w_s * ||out_s - target_s||^2, default
// weights 1/batch.
std::pair<double, GradientSet> backward_mse(const Model& m, const Matrix& x,
                                            const Matrix& target,
                                            const std::vector<double>* sample_weights = nullptr);

double ce_loss(const Matrix& logits, const std::vector<int>& labels);
std::vector<double> per_sample_ce(const Model& m, const Matrix& x,
                                  const std::vector<int>& labels);

struct SgdOptimizer {
  double lr = 0.01;
  double momentum = 0.0;

  SgdOptimizer(double lr_, double momentum_);
  // Velocity buffers are created lazily on first step and persist after.
  void step(Model& m, const GradientSet& g);
  void step_matrices(std::vector<Matrix*> params, const std::vector<const Matrix*>& grads);

 private:
  bool initialized_ = false;
  GradientSet velocity_;
  std::vector<Matrix> matrix_velocity_;
};

struct EpochStats {
  double loss = 0.0;
  double accuracy = 0.0;  // percent
};

struct TrainOptions {
  std::size_t epochs = 10;
  double lr = 0.05;
  double momentum = 0.9;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
};

std::vector<EpochStats> train(Model& m, const Matrix& x, const std::vector<int>& y,
                              const TrainOptions& opt);

// Checkpoint JSON ("semu-ckpt-v1"): byte-deterministic, full double precision.
std::string serialize_model(const Model& m);
Model deserialize_model(const std::string& json_text);
void save_model(const Model& m, const std::string& path);
Model load_model(const std::string& path);

}  // namespace semu
