#include "fedlora/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace fedlora {

namespace {

Matrix effective_weight(const Matrix& w, const LoraAdapter& adapter) {
  return w + adapter.delta_w();
}

void apply_activation(Activation act, Matrix& m) {
  if (act == Activation::Identity) return;
  for (double& v : m.values()) v = activate(act, v);
}

void check_labels(const Matrix& z_rows, std::span<const Label> labels, std::size_t classes) {
  if (z_rows.rows() != labels.size()) {
    throw ShapeError("task_loss: " + std::to_string(z_rows.rows()) + " rows vs " +
                     std::to_string(labels.size()) + " labels");
  }
  for (Label y : labels) {
    if (y >= classes) throw std::invalid_argument("task_loss: label out of range");
  }
}

// Row-wise softmax of the head's logits.
Matrix softmax_rows(const TaskHead& head, const Matrix& z_rows) {
  if (z_rows.cols() != head.weight.cols()) {
    throw ShapeError("task head expects width " + std::to_string(head.weight.cols()) + ", got " +
                     std::to_string(z_rows.cols()));
  }
  Matrix p = times_transpose(z_rows, head.weight);
  for (std::size_t i = 0; i < p.rows(); ++i) {
    auto row = p.row(i);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += head.bias[c];
    const double peak = *std::max_element(row.begin(), row.end());
    double total = 0.0;
    for (double& v : row) {
      v = std::exp(v - peak);
      total += v;
    }
    for (double& v : row) v /= total;
  }
  return p;
}

}  // namespace

std::string_view to_string(Activation act) {
  switch (act) {
    case Activation::Tanh:
      return "tanh";
    case Activation::Relu:
      return "relu";
    case Activation::Identity:
      return "identity";
  }
  return "unknown";
}

std::optional<Activation> parse_activation(std::string_view name) {
  if (name == "tanh") return Activation::Tanh;
  if (name == "relu") return Activation::Relu;
  if (name == "identity") return Activation::Identity;
  return std::nullopt;
}

void ModelConfig::validate() const {
  if (input_dim == 0) throw std::invalid_argument("input_dim must be >= 1");
  if (width < input_dim) throw std::invalid_argument("width must be >= input_dim");
  if (layers == 0) throw std::invalid_argument("layers must be >= 1");
  if (rank == 0 || rank > width / 2) throw std::invalid_argument("rank must lie in [1, width/2]");
  if (classes < 2) throw std::invalid_argument("classes must be >= 2");
  if (!(orthonormal_scale > 0.0)) throw std::invalid_argument("orthonormal_scale must be > 0");
}

double activate(Activation act, double x) {
  switch (act) {
    case Activation::Tanh:
      return std::tanh(x);
    case Activation::Relu:
      return x > 0.0 ? x : 0.0;
    case Activation::Identity:
      return x;
  }
  return x;
}

double activate_derivative(Activation act, double pre_activation) {
  switch (act) {
    case Activation::Tanh: {
      const double t = std::tanh(pre_activation);
      return 1.0 - t * t;
    }
    case Activation::Relu:
      return pre_activation > 0.0 ? 1.0 : 0.0;
    case Activation::Identity:
      return 1.0;
  }
  return 1.0;
}

SplitModel build_model(const ModelConfig& cfg, AdapterMode mode, RngStream& frozen_rng,
                       RngStream& adapter_rng) {
  cfg.validate();
  SplitModel model;
  model.activation = cfg.activation;
  // Isometric embedding: orthonormal columns.
  model.embedding = orthonormal_rows(frozen_rng, cfg.input_dim, cfg.width, 1.0).transposed();
  for (std::size_t i = 0; i < cfg.layers; ++i) {
    model.encoder.push_back(orthonormal_rows(frozen_rng, cfg.width, cfg.width, 1.0));
    model.adapters.push_back(
        init_adapter(mode, cfg.rank, cfg.width, cfg.width, cfg.orthonormal_scale, adapter_rng));
  }
  return model;
}

TaskHead init_head(std::size_t classes, std::size_t width) {
  return TaskHead{Matrix(classes, width), Vector(classes)};
}

Vector embed(const SplitModel& model, const Vector& x) { return model.embedding * x; }

Matrix embed(const SplitModel& model, const Matrix& x_rows) {
  return times_transpose(x_rows, model.embedding);
}

ForwardTrace encoder_forward(const SplitModel& model, const Matrix& z_e_rows) {
  ForwardTrace trace;
  trace.embedded = z_e_rows;
  Matrix u = z_e_rows;
  for (std::size_t i = 0; i < model.layers(); ++i) {
    const Matrix w = effective_weight(model.encoder[i], model.adapters[i]);
    Matrix v = times_transpose(u, w);
    trace.inputs.push_back(u);
    trace.outputs.push_back(v);
    if (i + 1 < model.layers()) apply_activation(model.activation, v);
    u = std::move(v);
  }
  trace.z = std::move(u);
  return trace;
}

std::pair<Vector, ForwardTrace> encoder_forward(const SplitModel& model, const Vector& z_e) {
  const Vector rows[] = {z_e};
  ForwardTrace trace = encoder_forward(model, Matrix::from_rows(rows));
  Vector z = trace.z.row_vector(0);
  return {std::move(z), std::move(trace)};
}

BatchLoss task_loss(const TaskHead& head, const Matrix& z_rows, std::span<const Label> labels) {
  check_labels(z_rows, labels, head.classes());
  Matrix p = softmax_rows(head, z_rows);
  const double inv_m = 1.0 / static_cast<double>(z_rows.rows());
  BatchLoss out;
  for (std::size_t i = 0; i < p.rows(); ++i) {
    out.loss -= std::log(std::max(p(i, labels[i]), 1e-300));
    p(i, labels[i]) -= 1.0;
  }
  out.loss *= inv_m;
  out.grad_z = p * head.weight;
  out.grad_z *= inv_m;
  return out;
}

SampleLoss task_loss(const TaskHead& head, const Vector& z, Label label) {
  const Vector rows[] = {z};
  const Label labels[] = {label};
  auto batch = task_loss(head, Matrix::from_rows(rows), labels);
  return {batch.loss, batch.grad_z.row_vector(0)};
}

HeadGrads head_gradients(const TaskHead& head, const Matrix& z_rows,
                         std::span<const Label> labels) {
  check_labels(z_rows, labels, head.classes());
  Matrix p = softmax_rows(head, z_rows);
  for (std::size_t i = 0; i < p.rows(); ++i) p(i, labels[i]) -= 1.0;
  const double inv_m = 1.0 / static_cast<double>(z_rows.rows());
  HeadGrads grads;
  grads.weight = transpose_times(p, z_rows);
  grads.weight *= inv_m;
  grads.bias = Vector(head.classes());
  for (std::size_t i = 0; i < p.rows(); ++i)
    for (std::size_t c = 0; c < p.cols(); ++c) grads.bias[c] += p(i, c) * inv_m;
  return grads;
}

TaskHead task_head_step(const TaskHead& head, const Matrix& z_rows, std::span<const Label> labels,
                        double eta_local) {
  const HeadGrads grads = head_gradients(head, z_rows, labels);
  TaskHead next = head;
  next.weight -= eta_local * grads.weight;
  next.bias -= eta_local * grads.bias;
  return next;
}

TaskHead task_head_step(const TaskHead& head, const Vector& z, Label label, double eta_local) {
  const Vector rows[] = {z};
  const Label labels[] = {label};
  return task_head_step(head, Matrix::from_rows(rows), labels, eta_local);
}

std::string_view to_string(HeadOptimizerKind kind) {
  return kind == HeadOptimizerKind::Adam ? "adam" : "gd";
}

std::optional<HeadOptimizerKind> parse_head_optimizer(std::string_view name) {
  if (name == "gd") return HeadOptimizerKind::GradientDescent;
  if (name == "adam") return HeadOptimizerKind::Adam;
  return std::nullopt;
}

TaskHead HeadOptimizer::step(const TaskHead& head, const HeadGrads& grads) {
  TaskHead next = head;
  if (kind_ == HeadOptimizerKind::GradientDescent) {
    next.weight -= lr_ * grads.weight;
    next.bias -= lr_ * grads.bias;
    return next;
  }
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  if (t_ == 0) {
    m_w_ = v_w_ = Matrix(head.weight.rows(), head.weight.cols());
    m_b_ = v_b_ = Vector(head.bias.dim());
  }
  ++t_;
  const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
  auto adam = [&](std::span<double> param, std::span<const double> grad, std::span<double> m,
                  std::span<double> v) {
    for (std::size_t i = 0; i < param.size(); ++i) {
      m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * grad[i];
      v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * grad[i] * grad[i];
      param[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + kEps);
    }
  };
  adam(next.weight.values(), grads.weight.values(), m_w_.values(), v_w_.values());
  adam(next.bias.values(), grads.bias.values(), m_b_.values(), v_b_.values());
  return next;
}

std::vector<AdapterGrads> backprop_to_adapters(const SplitModel& model, const ForwardTrace& trace,
                                               const Matrix& g_hat_rows) {
  if (g_hat_rows.rows() != trace.batch() || g_hat_rows.cols() != model.output_dim()) {
    throw ShapeError("backprop_to_adapters: upstream gradient is " +
                     std::to_string(g_hat_rows.rows()) + "x" + std::to_string(g_hat_rows.cols()) +
                     ", trace expects " + std::to_string(trace.batch()) + "x" +
                     std::to_string(model.output_dim()));
  }
  std::vector<AdapterGrads> grads(model.layers());
  Matrix delta = g_hat_rows;  // no activation after the last layer
  for (std::size_t i = model.layers(); i-- > 0;) {
    const LoraAdapter& ad = model.adapters[i];
    grads[i].grad_a = grad_wrt_a(ad.b, delta, trace.inputs[i]);
    grads[i].grad_b = grad_wrt_b(delta, trace.inputs[i], ad.a);
    if (i == 0) break;
    Matrix upstream = delta * effective_weight(model.encoder[i], ad);
    const Matrix& pre = trace.outputs[i - 1];
    for (std::size_t k = 0; k < upstream.size(); ++k)
      upstream.values()[k] *= activate_derivative(model.activation, pre.values()[k]);
    delta = std::move(upstream);
  }
  return grads;
}

std::vector<AdapterGrads> backprop_to_adapters(const SplitModel& model, const ForwardTrace& trace,
                                               const Vector& g_hat) {
  const Vector rows[] = {g_hat};
  return backprop_to_adapters(model, trace, Matrix::from_rows(rows));
}

Matrix downstream_jacobian(const SplitModel& model, const ForwardTrace& trace, std::size_t layer,
                           std::size_t sample) {
  if (layer >= model.layers()) throw std::out_of_range("downstream_jacobian: layer index");
  if (sample >= trace.batch()) throw std::out_of_range("downstream_jacobian: sample index");
  Matrix jac = Matrix::identity(model.output_dim());
  for (std::size_t j = model.layers() - 1; j > layer; --j) {
    jac = jac * effective_weight(model.encoder[j], model.adapters[j]);
    auto pre = trace.outputs[j - 1].row(sample);
    for (std::size_t r = 0; r < jac.rows(); ++r)
      for (std::size_t c = 0; c < jac.cols(); ++c)
        jac(r, c) *= activate_derivative(model.activation, pre[c]);
  }
  return jac;
}

double jacobian_condition(const SplitModel& model, const ForwardTrace& trace, std::size_t layer,
                          std::size_t sample) {
  return singular_extremes(downstream_jacobian(model, trace, layer, sample)).kappa;
}

double accuracy(const TaskHead& head, const Matrix& z_rows, std::span<const Label> labels) {
  if (labels.empty()) return 0.0;
  const Matrix logits = times_transpose(z_rows, head.weight);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto row = logits.row(i);
    std::size_t best = 0;
    for (std::size_t c = 1; c < row.size(); ++c)
      if (row[c] + head.bias[c] > row[best] + head.bias[best]) best = c;
    if (best == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

}  // namespace fedlora
