#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "semu/matrix.hpp"
#include "semu/nn.hpp"
#include "semu/svd.hpp"

namespace semu {

struct SemuConfig {
  double gamma_default = 0.9;
  std::map<std::size_t, double> gamma_overrides;  // layer index -> gamma
  bool use_perp_projection = true;
  enum class Reduction { sum, mean };
  Reduction grad_reduction = Reduction::sum;
  std::size_t r_max = 0;  // hard per-layer rank cap; 0 = unlimited

  double gamma_for_layer(std::size_t layer_index) const;
  void validate(std::size_t num_layers) const;
};

// Frozen truncated factors plus the sole trainable block R (r x r).
struct AdapterFactors {
  Matrix u_r;    // n x r, frozen
  Matrix v_r;    // m x r, frozen
  Matrix r_mat;  // r x r, trainable, zero at creation
  double gamma = 0.0;      // threshold used for this layer
  double explained = 0.0;  // cumulative share captured by the chosen rank

  std::size_t rank() const { return r_mat.rows(); }
};

// Base model plus per-layer adapters; `effective` carries the materialized
// weights A + U_r R V_r^T used for every forward/backward pass.
struct AdaptedModel {
  Model base;
  Model effective;
  std::vector<std::optional<AdapterFactors>> adapters;  // one slot per layer

  std::size_t trainable_params() const;     // sum of r_i^2
  std::size_t total_weight_params() const;  // weight entries, biases excluded
  double tparams_pct() const;

  // Rematerialize effective weights from base + factors. An all-zero R
  // copies the base weight verbatim so creation-time forwards are bitwise
  // identical to the original model.
  void refresh_layer(std::size_t layer_index);
  void refresh();
};

// Gradient of the negated forgetting loss (-CE on true labels), accumulated
// batch by batch in dataset order. reduction=sum adds per-batch gradients
// (mean divides by the batch count).
GradientSet accumulate_forget_gradients(const Model& m, const Matrix& forget_x,
                                        const std::vector<int>& forget_y,
                                        const SemuConfig& cfg,
                                        std::size_t batch_size = 64);

AdaptedModel build_adapters(const Model& m, const GradientSet& grads,
                            const SemuConfig& cfg);

// Map d(loss)/d(effective weight) into d(loss)/d(R) for each adapted layer:
// U_r^T * dW * V_r. Entries for non-adapted layers are empty matrices.
std::vector<Matrix> adapter_gradients(const AdaptedModel& am,
                                      const GradientSet& effective_grads);

// Plain model whose weights equal the adapters' effective weights.
Model merge_adapters(const AdaptedModel& am);

struct LayerSpectrum {
  std::size_t layer_index = 0;
  LayerKind kind = LayerKind::dense;
  std::vector<double> sigma;          // descending
  std::vector<double> explained_cum;  // e_k for k = 1..q
  std::size_t chosen_r = 0;
};

std::vector<LayerSpectrum> spectrum_report(const Model& m, const GradientSet& grads,
                                           const SemuConfig& cfg);

// CSV: layer_index,layer_kind,sigma_index,sigma,explained_cum,chosen_r.
// Zero-gradient layers emit a single placeholder row with sigma 0.
std::string spectrum_to_csv(const std::vector<LayerSpectrum>& spectra);

}  // namespace semu
