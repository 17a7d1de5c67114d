#include "semu/adapters.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "semu/errors.hpp"

namespace semu {

double SemuConfig::gamma_for_layer(std::size_t layer_index) const {
  auto it = gamma_overrides.find(layer_index);
  return it == gamma_overrides.end() ? gamma_default : it->second;
}

void SemuConfig::validate(std::size_t num_layers) const {
  if (gamma_default < 0.0 || gamma_default > 1.0)
    throw ConfigError("semu.gamma must lie in [0, 1], got " +
                      std::to_string(gamma_default));
  for (const auto& [idx, g] : gamma_overrides) {
    if (idx >= num_layers)
      throw ConfigError("semu.gamma_overrides names layer " + std::to_string(idx) +
                        " but the model has " + std::to_string(num_layers) + " layers");
    if (g < 0.0 || g > 1.0)
      throw ConfigError("semu.gamma_overrides[" + std::to_string(idx) +
                        "] must lie in [0, 1], got " + std::to_string(g));
  }
}

std::size_t AdaptedModel::trainable_params() const {
  std::size_t n = 0;
  for (const auto& a : adapters)
    if (a) n += a->rank() * a->rank();
  return n;
}

std::size_t AdaptedModel::total_weight_params() const {
  return base.weight_param_count();
}

double AdaptedModel::tparams_pct() const {
  const std::size_t total = total_weight_params();
  if (total == 0) return 0.0;
  return 100.0 * static_cast<double>(trainable_params()) / static_cast<double>(total);
}

void AdaptedModel::refresh_layer(std::size_t layer_index) {
  if (layer_index >= adapters.size())
    throw InvalidInputError("refresh_layer: no layer " + std::to_string(layer_index));
  const auto& a = adapters[layer_index];
  Matrix& w = effective.layers[layer_index].weight;
  const Matrix& A = base.layers[layer_index].weight;
  if (!a || a->r_mat.all_zero()) {
    w = A;  // exact copy keeps creation-time forwards bitwise identical
    return;
  }
  w = A + matmul(matmul(a->u_r, a->r_mat), transpose(a->v_r));
  ensure_finite(w, "adapted weight");
}

void AdaptedModel::refresh() {
  for (std::size_t i = 0; i < adapters.size(); ++i) refresh_layer(i);
}

GradientSet accumulate_forget_gradients(const Model& m, const Matrix& forget_x,
                                        const std::vector<int>& forget_y,
                                        const SemuConfig& cfg, std::size_t batch_size) {
  if (forget_x.rows() == 0) throw ConfigError("forget set is empty");
  if (forget_y.size() != forget_x.rows())
    throw InvalidInputError("forget labels do not match forget samples");
  if (batch_size == 0) throw ConfigError("accumulation batch_size must be positive");

  GradientSet acc = GradientSet::zeros_like(m);
  std::size_t batches = 0;
  for (std::size_t start = 0; start < forget_x.rows(); start += batch_size) {
    const std::size_t bsz = std::min(batch_size, forget_x.rows() - start);
    Matrix bx(bsz, forget_x.cols());
    std::vector<int> by(bsz);
    for (std::size_t i = 0; i < bsz; ++i) {
      std::copy(forget_x.row(start + i), forget_x.row(start + i) + forget_x.cols(),
                bx.row(i));
      by[i] = forget_y[start + i];
    }
    GradientSet g = backward_ce(m, bx, by).second;
    // Negated loss: g accumulates -grad(CE).
    for (std::size_t li = 0; li < acc.weight.size(); ++li) {
      for (std::size_t i = 0; i < acc.weight[li].size(); ++i)
        acc.weight[li].data()[i] -= g.weight[li].data()[i];
      for (std::size_t i = 0; i < acc.bias[li].size(); ++i)
        acc.bias[li][i] -= g.bias[li][i];
    }
    ++batches;
  }
  if (cfg.grad_reduction == SemuConfig::Reduction::mean) {
    const double inv = 1.0 / static_cast<double>(batches);
    for (std::size_t li = 0; li < acc.weight.size(); ++li) {
      for (std::size_t i = 0; i < acc.weight[li].size(); ++i)
        acc.weight[li].data()[i] *= inv;
      for (std::size_t i = 0; i < acc.bias[li].size(); ++i) acc.bias[li][i] *= inv;
    }
  }
  for (const Matrix& w : acc.weight) ensure_finite(w, "accumulated gradient");
  return acc;
}

namespace {

// One layer of Algorithm-style subspace selection: projected gradient, SVD,
// rank from the explained-variance rule (optionally capped).
struct LayerSelection {
  SvdFactors factors;
  RankSelection rank;
  std::size_t r = 0;
  bool skipped = false;  // all-zero gradient, no factors
};

LayerSelection select_layer(const Matrix& grad, const Matrix& weight, double gamma,
                            bool use_perp, std::size_t r_max) {
  LayerSelection sel;
  if (grad.all_zero()) {
    sel.skipped = true;
    return sel;
  }
  Matrix g_prime = use_perp ? perp_project(grad, weight) : grad;
  if (g_prime.all_zero()) {
    sel.skipped = true;
    return sel;
  }
  sel.factors = svd(g_prime);
  sel.rank = select_rank(sel.factors.sigma, gamma);
  sel.r = sel.rank.r;
  if (r_max > 0) sel.r = std::min(sel.r, r_max);
  return sel;
}

}  // namespace

AdaptedModel build_adapters(const Model& m, const GradientSet& grads,
                            const SemuConfig& cfg) {
  m.validate();
  cfg.validate(m.layers.size());
  if (grads.weight.size() != m.layers.size())
    throw InvalidInputError("gradient set depth " + std::to_string(grads.weight.size()) +
                            " does not match model depth " +
                            std::to_string(m.layers.size()));

  AdaptedModel am;
  am.base = m;
  am.effective = m;
  am.adapters.resize(m.layers.size());
  for (std::size_t li = 0; li < m.layers.size(); ++li) {
    if (!grads.weight[li].same_shape(m.layers[li].weight))
      throw InvalidInputError("gradient shape mismatch at layer " + std::to_string(li));
    const double gamma = cfg.gamma_for_layer(li);
    LayerSelection sel = select_layer(grads.weight[li], m.layers[li].weight, gamma,
                                      cfg.use_perp_projection, cfg.r_max);
    if (sel.skipped || sel.r == 0) continue;  // layer stays plain and frozen

    TruncatedFactors t = truncate(sel.factors, sel.r);
    AdapterFactors a;
    a.u_r = std::move(t.u_r);
    a.v_r = std::move(t.v_r);
    a.r_mat = Matrix(sel.r, sel.r, 0.0);
    a.gamma = gamma;
    a.explained = sel.rank.explained;
    am.adapters[li] = std::move(a);
  }
  am.refresh();
  return am;
}

std::vector<Matrix> adapter_gradients(const AdaptedModel& am,
                                      const GradientSet& effective_grads) {
  if (effective_grads.weight.size() != am.adapters.size())
    throw InvalidInputError("gradient set does not match adapted model depth");
  std::vector<Matrix> out(am.adapters.size());
  for (std::size_t li = 0; li < am.adapters.size(); ++li) {
    if (!am.adapters[li]) continue;
    const AdapterFactors& a = *am.adapters[li];
    out[li] = matmul(matmul(transpose(a.u_r), effective_grads.weight[li]), a.v_r);
  }
  return out;
}

Model merge_adapters(const AdaptedModel& am) {
  Model merged = am.effective;
  merged.validate();
  for (const Layer& l : merged.layers) ensure_finite(l.weight, "merged weight");
  return merged;
}

std::vector<LayerSpectrum> spectrum_report(const Model& m, const GradientSet& grads,
                                           const SemuConfig& cfg) {
  m.validate();
  cfg.validate(m.layers.size());
  if (grads.weight.size() != m.layers.size())
    throw InvalidInputError("gradient set depth does not match model");

  std::vector<LayerSpectrum> out;
  out.reserve(m.layers.size());
  for (std::size_t li = 0; li < m.layers.size(); ++li) {
    LayerSpectrum sp;
    sp.layer_index = li;
    sp.kind = m.layers[li].spec.kind;
    const double gamma = cfg.gamma_for_layer(li);
    LayerSelection sel = select_layer(grads.weight[li], m.layers[li].weight, gamma,
                                      cfg.use_perp_projection, cfg.r_max);
    if (!sel.skipped) {
      sp.sigma = sel.factors.sigma;
      double total = 0.0;
      for (double s : sp.sigma) total += s * s;
      double cum = 0.0;
      sp.explained_cum.reserve(sp.sigma.size());
      for (double s : sp.sigma) {
        cum += s * s;
        sp.explained_cum.push_back(cum / total);
      }
      sp.chosen_r = sel.r;
    }
    out.push_back(std::move(sp));
  }
  return out;
}

std::string spectrum_to_csv(const std::vector<LayerSpectrum>& spectra) {
  std::ostringstream out;
  out << "layer_index,layer_kind,sigma_index,sigma,explained_cum,chosen_r\n";
  char buf[64];
  auto fmt = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  for (const LayerSpectrum& sp : spectra) {
    if (sp.sigma.empty()) {
      // Placeholder row so every layer appears in the file.
      out << sp.layer_index << "," << to_string(sp.kind) << ",0,0,0,0\n";
      continue;
    }
    for (std::size_t k = 0; k < sp.sigma.size(); ++k) {
      out << sp.layer_index << "," << to_string(sp.kind) << "," << k << ","
          << fmt(sp.sigma[k]) << "," << fmt(sp.explained_cum[k]) << "," << sp.chosen_r
          << "\n";
    }
  }
  return out.str();
}

}  // namespace semu
