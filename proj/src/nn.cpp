#include "semu/nn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "semu/errors.hpp"
#include "semu/rng.hpp"

namespace semu {

std::string to_string(LayerKind k) {
  return k == LayerKind::dense ? "dense" : "conv2d";
}

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "none"; }

LayerKind layer_kind_from_string(const std::string& s) {
  if (s == "dense") return LayerKind::dense;
  if (s == "conv2d") return LayerKind::conv2d;
  throw ConfigError("unknown layer kind '" + s + "' (expected dense or conv2d)");
}

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "none") return Activation::none;
  throw ConfigError("unknown activation '" + s + "' (expected relu or none)");
}

std::size_t LayerSpec::out_h() const {
  return (input_h + 2 * padding - kernel_h) / stride + 1;
}
std::size_t LayerSpec::out_w() const {
  return (input_w + 2 * padding - kernel_w) / stride + 1;
}

std::size_t LayerSpec::input_size() const {
  return kind == LayerKind::dense ? in_dim : in_channels * input_h * input_w;
}

std::size_t LayerSpec::output_size() const {
  return kind == LayerKind::dense ? out_dim : out_channels * out_h() * out_w();
}

std::size_t LayerSpec::weight_rows() const {
  return kind == LayerKind::dense ? out_dim : out_channels;
}

std::size_t LayerSpec::weight_cols() const {
  return kind == LayerKind::dense ? in_dim : in_channels * kernel_h * kernel_w;
}

std::size_t LayerSpec::bias_size() const { return weight_rows(); }

void LayerSpec::validate() const {
  if (kind == LayerKind::dense) {
    if (in_dim == 0 || out_dim == 0)
      throw ConfigError("dense layer dimensions must be positive (got " +
                        std::to_string(in_dim) + "->" + std::to_string(out_dim) + ")");
    return;
  }
  if (in_channels == 0 || out_channels == 0 || kernel_h == 0 || kernel_w == 0 ||
      input_h == 0 || input_w == 0 || stride == 0)
    throw ConfigError("conv2d layer has a zero dimension");
  if (input_h + 2 * padding < kernel_h || input_w + 2 * padding < kernel_w)
    throw ConfigError("conv2d kernel " + std::to_string(kernel_h) + "x" +
                      std::to_string(kernel_w) + " exceeds padded input " +
                      std::to_string(input_h + 2 * padding) + "x" +
                      std::to_string(input_w + 2 * padding));
}

std::size_t Model::input_size() const {
  return layers.empty() ? 0 : layers.front().spec.input_size();
}

std::size_t Model::output_size() const {
  return layers.empty() ? 0 : layers.back().spec.output_size();
}

std::size_t Model::weight_param_count() const {
  std::size_t n = 0;
  for (const Layer& l : layers) n += l.weight.size();
  return n;
}

void Model::validate() const {
  if (layers.empty()) throw ConfigError("model has no layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const Layer& l = layers[i];
    l.spec.validate();
    if (l.weight.rows() != l.spec.weight_rows() || l.weight.cols() != l.spec.weight_cols())
      throw ConfigError("layer " + std::to_string(i) + " weight is " +
                        l.weight.shape_str() + ", spec wants " +
                        std::to_string(l.spec.weight_rows()) + "x" +
                        std::to_string(l.spec.weight_cols()));
    if (l.bias.size() != l.spec.bias_size())
      throw ConfigError("layer " + std::to_string(i) + " bias size mismatch");
    if (i + 1 < layers.size() &&
        l.spec.output_size() != layers[i + 1].spec.input_size())
      throw ConfigError("layer " + std::to_string(i) + " output size " +
                        std::to_string(l.spec.output_size()) +
                        " does not feed layer " + std::to_string(i + 1) +
                        " input size " + std::to_string(layers[i + 1].spec.input_size()));
  }
  if (num_classes == 0) throw ConfigError("model num_classes must be positive");
}

GradientSet GradientSet::zeros_like(const Model& m) {
  GradientSet g;
  g.weight.reserve(m.layers.size());
  g.bias.reserve(m.layers.size());
  for (const Layer& l : m.layers) {
    g.weight.emplace_back(l.weight.rows(), l.weight.cols(), 0.0);
    g.bias.emplace_back(l.bias.size(), 0.0);
  }
  return g;
}

void add_scaled(GradientSet& acc, const GradientSet& g, double scale) {
  if (acc.weight.size() != g.weight.size() || acc.bias.size() != g.bias.size())
    throw InvalidInputError("gradient sets cover different layer counts");
  for (std::size_t l = 0; l < acc.weight.size(); ++l) {
    if (!acc.weight[l].same_shape(g.weight[l]) || acc.bias[l].size() != g.bias[l].size())
      throw InvalidInputError("gradient set shapes differ at layer " + std::to_string(l));
    for (std::size_t i = 0; i < acc.weight[l].size(); ++i)
      acc.weight[l].data()[i] += scale * g.weight[l].data()[i];
    for (std::size_t i = 0; i < acc.bias[l].size(); ++i)
      acc.bias[l][i] += scale * g.bias[l][i];
  }
}

Model init_model(const std::vector<LayerSpec>& spec, std::size_t num_classes,
                 std::uint64_t seed) {
  Model m;
  m.num_classes = num_classes;
  m.rng_seed = seed;
  Rng rng(seed);
  for (const LayerSpec& s : spec) {
    s.validate();
    Layer l;
    l.spec = s;
    l.weight = Matrix(s.weight_rows(), s.weight_cols());
    const double bound = std::sqrt(6.0 / static_cast<double>(s.weight_cols()));
    for (std::size_t i = 0; i < l.weight.size(); ++i)
      l.weight.data()[i] = rng.uniform(-bound, bound);
    l.bias.assign(s.bias_size(), 0.0);
    m.layers.push_back(std::move(l));
  }
  m.validate();
  return m;
}

namespace {

// Patch matrix for one sample: rows ordered (channel, kernel row, kernel col),
// columns ordered (output row, output col). Out-of-bounds pixels read as zero.
Matrix im2col(const LayerSpec& s, const double* x) {
  const std::size_t oh = s.out_h(), ow = s.out_w();
  Matrix cols(s.in_channels * s.kernel_h * s.kernel_w, oh * ow, 0.0);
  for (std::size_t c = 0; c < s.in_channels; ++c) {
    for (std::size_t ki = 0; ki < s.kernel_h; ++ki) {
      for (std::size_t kj = 0; kj < s.kernel_w; ++kj) {
        const std::size_t r = (c * s.kernel_h + ki) * s.kernel_w + kj;
        for (std::size_t i = 0; i < oh; ++i) {
          const std::ptrdiff_t h =
              static_cast<std::ptrdiff_t>(i * s.stride + ki) -
              static_cast<std::ptrdiff_t>(s.padding);
          if (h < 0 || h >= static_cast<std::ptrdiff_t>(s.input_h)) continue;
          for (std::size_t j = 0; j < ow; ++j) {
            const std::ptrdiff_t w =
                static_cast<std::ptrdiff_t>(j * s.stride + kj) -
                static_cast<std::ptrdiff_t>(s.padding);
            if (w < 0 || w >= static_cast<std::ptrdiff_t>(s.input_w)) continue;
            cols(r, i * ow + j) = x[(c * s.input_h + h) * s.input_w + w];
          }
        }
      }
    }
  }
  return cols;
}

// Adjoint of im2col: scatter-add patch gradients back onto the input.
void col2im_add(const LayerSpec& s, const Matrix& cols, double* dx) {
  const std::size_t oh = s.out_h(), ow = s.out_w();
  for (std::size_t c = 0; c < s.in_channels; ++c) {
    for (std::size_t ki = 0; ki < s.kernel_h; ++ki) {
      for (std::size_t kj = 0; kj < s.kernel_w; ++kj) {
        const std::size_t r = (c * s.kernel_h + ki) * s.kernel_w + kj;
        for (std::size_t i = 0; i < oh; ++i) {
          const std::ptrdiff_t h =
              static_cast<std::ptrdiff_t>(i * s.stride + ki) -
              static_cast<std::ptrdiff_t>(s.padding);
          if (h < 0 || h >= static_cast<std::ptrdiff_t>(s.input_h)) continue;
          for (std::size_t j = 0; j < ow; ++j) {
            const std::ptrdiff_t w =
                static_cast<std::ptrdiff_t>(j * s.stride + kj) -
                static_cast<std::ptrdiff_t>(s.padding);
            if (w < 0 || w >= static_cast<std::ptrdiff_t>(s.input_w)) continue;
            dx[(c * s.input_h + h) * s.input_w + w] += cols(r, i * ow + j);
          }
        }
      }
    }
  }
}

Matrix layer_forward(const Layer& l, const Matrix& x) {
  const LayerSpec& s = l.spec;
  if (x.cols() != s.input_size())
    throw InvalidInputError("layer expects input size " +
                            std::to_string(s.input_size()) + ", got " +
                            std::to_string(x.cols()));
  if (s.kind == LayerKind::dense) {
    Matrix z = matmul(x, transpose(l.weight));
    for (std::size_t i = 0; i < z.rows(); ++i)
      for (std::size_t j = 0; j < z.cols(); ++j) z(i, j) += l.bias[j];
    return z;
  }
  const std::size_t positions = s.out_h() * s.out_w();
  Matrix z(x.rows(), s.out_channels * positions);
  for (std::size_t b = 0; b < x.rows(); ++b) {
    Matrix cols = im2col(s, x.row(b));
    Matrix zb = matmul(l.weight, cols);  // out_channels x positions
    for (std::size_t oc = 0; oc < s.out_channels; ++oc)
      for (std::size_t p = 0; p < positions; ++p)
        z(b, oc * positions + p) = zb(oc, p) + l.bias[oc];
  }
  return z;
}

Matrix apply_activation(const LayerSpec& s, const Matrix& z) {
  if (s.activation == Activation::none) return z;
  Matrix a = z;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a.data()[i] < 0.0) a.data()[i] = 0.0;
  return a;
}

}  // namespace

Matrix forward(const Model& m, const Matrix& x) {
  if (x.cols() != m.input_size())
    throw InvalidInputError("model expects input size " +
                            std::to_string(m.input_size()) + ", got " +
                            std::to_string(x.cols()));
  Matrix cur = x;
  for (const Layer& l : m.layers) cur = apply_activation(l.spec, layer_forward(l, cur));
  ensure_finite(cur, "forward output");
  return cur;
}

ForwardTrace forward_trace(const Model& m, const Matrix& x) {
  if (x.cols() != m.input_size())
    throw InvalidInputError("model expects input size " +
                            std::to_string(m.input_size()) + ", got " +
                            std::to_string(x.cols()));
  ForwardTrace t;
  t.inputs.reserve(m.layers.size());
  t.pre_act.reserve(m.layers.size());
  Matrix cur = x;
  for (const Layer& l : m.layers) {
    t.inputs.push_back(cur);
    Matrix z = layer_forward(l, cur);
    t.pre_act.push_back(z);
    cur = apply_activation(l.spec, z);
  }
  t.output = std::move(cur);
  ensure_finite(t.output, "forward output");
  return t;
}

GradientSet backward_from_output_grad(const Model& m, const ForwardTrace& trace,
                                      const Matrix& output_grad, Matrix* input_grad) {
  if (trace.inputs.size() != m.layers.size())
    throw InvalidInputError("forward trace does not match model depth");
  if (!output_grad.same_shape(trace.output))
    throw InvalidInputError("output gradient shape " + output_grad.shape_str() +
                            " does not match output " + trace.output.shape_str());

  GradientSet g = GradientSet::zeros_like(m);
  Matrix delta = output_grad;  // d(loss)/d(layer activation)
  for (std::size_t li = m.layers.size(); li-- > 0;) {
    const Layer& l = m.layers[li];
    const LayerSpec& s = l.spec;
    // Through the activation: relu passes gradient only where pre-act > 0.
    if (s.activation == Activation::relu) {
      const Matrix& z = trace.pre_act[li];
      for (std::size_t i = 0; i < delta.size(); ++i)
        if (z.data()[i] <= 0.0) delta.data()[i] = 0.0;
    }
    const Matrix& x = trace.inputs[li];
    const bool need_dx = (li > 0) || (input_grad != nullptr);
    if (s.kind == LayerKind::dense) {
      g.weight[li] = matmul(transpose(delta), x);
      for (std::size_t b = 0; b < delta.rows(); ++b)
        for (std::size_t j = 0; j < delta.cols(); ++j) g.bias[li][j] += delta(b, j);
      if (need_dx) delta = matmul(delta, l.weight);
    } else {
      const std::size_t positions = s.out_h() * s.out_w();
      Matrix dx(x.rows(), s.input_size(), 0.0);
      for (std::size_t b = 0; b < x.rows(); ++b) {
        Matrix cols = im2col(s, x.row(b));
        Matrix dz(s.out_channels, positions);
        for (std::size_t oc = 0; oc < s.out_channels; ++oc)
          for (std::size_t p = 0; p < positions; ++p)
            dz(oc, p) = delta(b, oc * positions + p);
        g.weight[li] = g.weight[li] + matmul(dz, transpose(cols));
        for (std::size_t oc = 0; oc < s.out_channels; ++oc)
          for (std::size_t p = 0; p < positions; ++p) g.bias[li][oc] += dz(oc, p);
        if (need_dx) {
          Matrix dcols = matmul(transpose(l.weight), dz);
          col2im_add(s, dcols, dx.row(b));
        }
      }
      if (need_dx) delta = std::move(dx);
    }
  }
  if (input_grad) *input_grad = std::move(delta);
  return g;
}

namespace {

void check_labels(const std::vector<int>& labels, std::size_t batch, std::size_t classes) {
  if (labels.size() != batch)
    throw InvalidInputError("label count " + std::to_string(labels.size()) +
                            " does not match batch size " + std::to_string(batch));
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes)
      throw InvalidInputError("label " + std::to_string(labels[i]) + " at index " +
                              std::to_string(i) + " outside [0, " +
                              std::to_string(classes) + ")");
}

std::vector<double> default_weights(std::size_t batch) {
  return std::vector<double>(batch, 1.0 / static_cast<double>(batch));
}

void check_weights(const std::vector<double>& w, std::size_t batch) {
  if (w.size() != batch)
    throw InvalidInputError("sample weight count does not match batch size");
}

// Row-wise softmax with max subtraction; returns probabilities.
Matrix softmax_rows(const Matrix& logits) {
  Matrix p = logits;
  for (std::size_t i = 0; i < p.rows(); ++i) {
    double mx = p(i, 0);
    for (std::size_t j = 1; j < p.cols(); ++j) mx = std::max(mx, p(i, j));
    double sum = 0.0;
    for (std::size_t j = 0; j < p.cols(); ++j) {
      p(i, j) = std::exp(p(i, j) - mx);
      sum += p(i, j);
    }
    for (std::size_t j = 0; j < p.cols(); ++j) p(i, j) /= sum;
  }
  return p;
}

}  // namespace

double ce_loss(const Matrix& logits, const std::vector<int>& labels) {
  check_labels(labels, logits.rows(), logits.cols());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    double mx = logits(i, 0);
    for (std::size_t j = 1; j < logits.cols(); ++j) mx = std::max(mx, logits(i, j));
    double sum = 0.0;
    for (std::size_t j = 0; j < logits.cols(); ++j) sum += std::exp(logits(i, j) - mx);
    total += std::log(sum) - (logits(i, static_cast<std::size_t>(labels[i])) - mx);
  }
  return total / static_cast<double>(logits.rows());
}

std::pair<double, GradientSet> backward_ce(const Model& m, const Matrix& x,
                                           const std::vector<int>& labels,
                                           const std::vector<double>* sample_weights) {
  ForwardTrace t = forward_trace(m, x);
  check_labels(labels, x.rows(), t.output.cols());
  std::vector<double> w = sample_weights ? *sample_weights : default_weights(x.rows());
  check_weights(w, x.rows());

  Matrix probs = softmax_rows(t.output);
  double loss = 0.0;
  Matrix dlogits(probs.rows(), probs.cols());
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    const std::size_t y = static_cast<std::size_t>(labels[i]);
    loss += -w[i] * std::log(std::max(probs(i, y), 1e-300));
    for (std::size_t j = 0; j < probs.cols(); ++j)
      dlogits(i, j) = w[i] * (probs(i, j) - (j == y ? 1.0 : 0.0));
  }
  return {loss, backward_from_output_grad(m, t, dlogits)};
}

std::pair<double, GradientSet> backward_mse(const Model& m, const Matrix& x,
                                            const Matrix& target,
                                            const std::vector<double>* sample_weights) {
  ForwardTrace t = forward_trace(m, x);
  if (!target.same_shape(t.output))
    throw InvalidInputError("mse target shape " + target.shape_str() +
                            " does not match output " + t.output.shape_str());
  std::vector<double> w = sample_weights ? *sample_weights : default_weights(x.rows());
  check_weights(w, x.rows());

  double loss = 0.0;
  Matrix dout(t.output.rows(), t.output.cols());
  for (std::size_t i = 0; i < t.output.rows(); ++i) {
    for (std::size_t j = 0; j < t.output.cols(); ++j) {
      const double diff = t.output(i, j) - target(i, j);
      loss += w[i] * diff * diff;
      dout(i, j) = 2.0 * w[i] * diff;
    }
  }
  return {loss, backward_from_output_grad(m, t, dout)};
}

std::vector<double> per_sample_ce(const Model& m, const Matrix& x,
                                  const std::vector<int>& labels) {
  Matrix logits = forward(m, x);
  check_labels(labels, x.rows(), logits.cols());
  std::vector<double> out(x.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    double mx = logits(i, 0);
    for (std::size_t j = 1; j < logits.cols(); ++j) mx = std::max(mx, logits(i, j));
    double sum = 0.0;
    for (std::size_t j = 0; j < logits.cols(); ++j) sum += std::exp(logits(i, j) - mx);
    out[i] = std::log(sum) - (logits(i, static_cast<std::size_t>(labels[i])) - mx);
  }
  return out;
}

SgdOptimizer::SgdOptimizer(double lr_, double momentum_) : lr(lr_), momentum(momentum_) {
  if (lr <= 0.0) throw ConfigError("sgd lr must be positive");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("sgd momentum must lie in [0, 1)");
}

void SgdOptimizer::step(Model& m, const GradientSet& g) {
  if (!initialized_) {
    velocity_ = GradientSet::zeros_like(m);
    initialized_ = true;
  }
  if (g.weight.size() != m.layers.size())
    throw InvalidInputError("gradient set does not match model depth");
  for (std::size_t li = 0; li < m.layers.size(); ++li) {
    Matrix& v = velocity_.weight[li];
    if (!v.same_shape(g.weight[li]))
      throw InvalidInputError("gradient shape mismatch at layer " + std::to_string(li));
    for (std::size_t i = 0; i < v.size(); ++i) {
      v.data()[i] = momentum * v.data()[i] + g.weight[li].data()[i];
      m.layers[li].weight.data()[i] -= lr * v.data()[i];
    }
    std::vector<double>& vb = velocity_.bias[li];
    for (std::size_t i = 0; i < vb.size(); ++i) {
      vb[i] = momentum * vb[i] + g.bias[li][i];
      m.layers[li].bias[i] -= lr * vb[i];
    }
  }
}

void SgdOptimizer::step_matrices(std::vector<Matrix*> params,
                                 const std::vector<const Matrix*>& grads) {
  if (params.size() != grads.size())
    throw InvalidInputError("parameter/gradient count mismatch");
  if (matrix_velocity_.empty()) {
    matrix_velocity_.reserve(params.size());
    for (const Matrix* p : params) matrix_velocity_.emplace_back(p->rows(), p->cols(), 0.0);
  }
  if (matrix_velocity_.size() != params.size())
    throw InvalidInputError("optimizer state does not match parameter count");
  for (std::size_t k = 0; k < params.size(); ++k) {
    Matrix& v = matrix_velocity_[k];
    Matrix& p = *params[k];
    const Matrix& g = *grads[k];
    if (!v.same_shape(g) || !p.same_shape(g))
      throw InvalidInputError("gradient shape mismatch at parameter " + std::to_string(k));
    for (std::size_t i = 0; i < v.size(); ++i) {
      v.data()[i] = momentum * v.data()[i] + g.data()[i];
      p.data()[i] -= lr * v.data()[i];
    }
  }
}

std::vector<EpochStats> train(Model& m, const Matrix& x, const std::vector<int>& y,
                              const TrainOptions& opt) {
  if (x.rows() == 0) throw ConfigError("training dataset is empty");
  if (y.size() != x.rows())
    throw InvalidInputError("label count does not match sample count");
  if (opt.batch_size == 0) throw ConfigError("batch_size must be positive");

  SgdOptimizer sgd(opt.lr, opt.momentum);
  Rng shuffle_rng = Rng(opt.seed).split(0xA11CE5);
  std::vector<std::size_t> order(x.rows());
  std::iota(order.begin(), order.end(), 0);

  std::vector<EpochStats> log;
  for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += opt.batch_size) {
      const std::size_t bsz = std::min(opt.batch_size, order.size() - start);
      Matrix bx(bsz, x.cols());
      std::vector<int> by(bsz);
      for (std::size_t i = 0; i < bsz; ++i) {
        const std::size_t src = order[start + i];
        std::copy(x.row(src), x.row(src) + x.cols(), bx.row(i));
        by[i] = y[src];
      }
      auto [loss, grads] = backward_ce(m, bx, by);
      sgd.step(m, grads);
      loss_sum += loss * static_cast<double>(bsz);
    }
    // Accuracy measured after the epoch's updates, over the full set.
    Matrix logits = forward(m, x);
    for (std::size_t i = 0; i < logits.rows(); ++i) {
      std::size_t arg = 0;
      for (std::size_t j = 1; j < logits.cols(); ++j)
        if (logits(i, j) > logits(i, arg)) arg = j;
      if (static_cast<int>(arg) == y[i]) ++correct;
    }
    EpochStats st;
    st.loss = loss_sum / static_cast<double>(x.rows());
    st.accuracy = 100.0 * static_cast<double>(correct) / static_cast<double>(x.rows());
    log.push_back(st);
  }
  return log;
}

namespace {

using ordered_json = nlohmann::ordered_json;

ordered_json layer_to_json(const Layer& l) {
  ordered_json j;
  j["kind"] = to_string(l.spec.kind);
  j["activation"] = to_string(l.spec.activation);
  if (l.spec.kind == LayerKind::dense) {
    j["in_dim"] = l.spec.in_dim;
    j["out_dim"] = l.spec.out_dim;
  } else {
    j["in_channels"] = l.spec.in_channels;
    j["out_channels"] = l.spec.out_channels;
    j["kernel_h"] = l.spec.kernel_h;
    j["kernel_w"] = l.spec.kernel_w;
    j["stride"] = l.spec.stride;
    j["padding"] = l.spec.padding;
    j["input_h"] = l.spec.input_h;
    j["input_w"] = l.spec.input_w;
  }
  ordered_json w = ordered_json::array();
  for (std::size_t i = 0; i < l.weight.rows(); ++i) {
    ordered_json row = ordered_json::array();
    for (std::size_t c = 0; c < l.weight.cols(); ++c) row.push_back(l.weight(i, c));
    w.push_back(std::move(row));
  }
  j["weight"] = std::move(w);
  j["bias"] = l.bias;
  return j;
}

Layer layer_from_json(const ordered_json& j, std::size_t index) {
  Layer l;
  try {
    l.spec.kind = layer_kind_from_string(j.at("kind").get<std::string>());
    l.spec.activation = activation_from_string(j.at("activation").get<std::string>());
    if (l.spec.kind == LayerKind::dense) {
      l.spec.in_dim = j.at("in_dim").get<std::size_t>();
      l.spec.out_dim = j.at("out_dim").get<std::size_t>();
    } else {
      l.spec.in_channels = j.at("in_channels").get<std::size_t>();
      l.spec.out_channels = j.at("out_channels").get<std::size_t>();
      l.spec.kernel_h = j.at("kernel_h").get<std::size_t>();
      l.spec.kernel_w = j.at("kernel_w").get<std::size_t>();
      l.spec.stride = j.at("stride").get<std::size_t>();
      l.spec.padding = j.at("padding").get<std::size_t>();
      l.spec.input_h = j.at("input_h").get<std::size_t>();
      l.spec.input_w = j.at("input_w").get<std::size_t>();
    }
    const auto& w = j.at("weight");
    const std::size_t rows = w.size();
    if (rows == 0) throw InvalidInputError("empty weight");
    const std::size_t cols = w.at(0).size();
    l.weight = Matrix(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
      if (w.at(r).size() != cols) throw InvalidInputError("ragged weight rows");
      for (std::size_t c = 0; c < cols; ++c) l.weight(r, c) = w.at(r).at(c).get<double>();
    }
    l.bias = j.at("bias").get<std::vector<double>>();
  } catch (const ordered_json::exception& e) {
    throw InvalidInputError("checkpoint layer " + std::to_string(index) +
                            " is malformed: " + e.what());
  }
  return l;
}

}  // namespace

std::string serialize_model(const Model& m) {
  ordered_json j;
  j["format"] = "semu-ckpt-v1";
  ordered_json layers = ordered_json::array();
  for (const Layer& l : m.layers) layers.push_back(layer_to_json(l));
  j["layers"] = std::move(layers);
  j["num_classes"] = m.num_classes;
  j["seed"] = m.rng_seed;
  return j.dump(2) + "\n";
}

Model deserialize_model(const std::string& json_text) {
  ordered_json j;
  try {
    j = ordered_json::parse(json_text);
  } catch (const ordered_json::exception& e) {
    throw InvalidInputError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  Model m;
  try {
    if (j.at("format").get<std::string>() != "semu-ckpt-v1")
      throw InvalidInputError("unsupported checkpoint format '" +
                              j.at("format").get<std::string>() + "'");
    const auto& layers = j.at("layers");
    for (std::size_t i = 0; i < layers.size(); ++i)
      m.layers.push_back(layer_from_json(layers.at(i), i));
    m.num_classes = j.at("num_classes").get<std::size_t>();
    m.rng_seed = j.at("seed").get<std::uint64_t>();
  } catch (const ordered_json::exception& e) {
    throw InvalidInputError(std::string("checkpoint is malformed: ") + e.what());
  }
  m.validate();
  for (const Layer& l : m.layers) ensure_finite(l.weight, "checkpoint weight");
  return m;
}

void save_model(const Model& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out << serialize_model(m);
  if (!out) throw IoError("failed writing checkpoint: " + path);
}

Model load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return deserialize_model(buf.str());
}

}  // namespace semu
