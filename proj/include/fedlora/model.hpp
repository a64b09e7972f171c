#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "fedlora/lora.hpp"
#include "fedlora/numerics.hpp"
#include "fedlora/rng.hpp"

namespace fedlora {

using Label = std::size_t;

enum class Activation { Tanh, Relu, Identity };

std::string_view to_string(Activation act);
std::optional<Activation> parse_activation(std::string_view name);

struct ModelConfig {
  std::size_t input_dim = 16;
  std::size_t width = 32;
  std::size_t layers = 2;
  std::size_t rank = 4;
  std::size_t classes = 4;
  double orthonormal_scale = 0.1;
  Activation activation = Activation::Tanh;

  void validate() const;
};

/// Frozen embedding (device side), frozen encoder layers with one LoRA adapter
/// each (server side). The activation follows every encoder layer except the last.
struct SplitModel {
  Matrix embedding;             // width × input_dim
  std::vector<Matrix> encoder;  // each width × width
  std::vector<LoraAdapter> adapters;
  Activation activation = Activation::Tanh;

  std::size_t layers() const { return encoder.size(); }
  std::size_t embed_dim() const { return embedding.rows(); }
  std::size_t output_dim() const { return encoder.empty() ? embed_dim() : encoder.back().rows(); }
};

/// Per-device affine classifier on the encoder output.
struct TaskHead {
  Matrix weight;  // classes × width
  Vector bias;    // classes

  std::size_t classes() const { return weight.rows(); }
};

/// Everything the backward pass needs from one forward call. Rows are samples.
struct ForwardTrace {
  Matrix embedded;              // z^e
  std::vector<Matrix> inputs;   // u^{(i)}
  std::vector<Matrix> outputs;  // v^{(i)} = (W_i + B_i A_i) u^{(i)}, before activation
  Matrix z;                     // encoder output

  std::size_t batch() const { return z.rows(); }
};

SplitModel build_model(const ModelConfig& cfg, AdapterMode mode, RngStream& frozen_rng,
                       RngStream& adapter_rng);
TaskHead init_head(std::size_t classes, std::size_t width);

double activate(Activation act, double x);
double activate_derivative(Activation act, double pre_activation);

/// z^e = w^e·x
Vector embed(const SplitModel& model, const Vector& x);
Matrix embed(const SplitModel& model, const Matrix& x_rows);

std::pair<Vector, ForwardTrace> encoder_forward(const SplitModel& model, const Vector& z_e);
ForwardTrace encoder_forward(const SplitModel& model, const Matrix& z_e_rows);

struct BatchLoss {
  double loss = 0.0;  // mean cross-entropy over the batch
  Matrix grad_z;      // ∂loss/∂z, one row per sample (already divided by batch size)
};

struct SampleLoss {
  double loss = 0.0;
  Vector grad_z;
};

SampleLoss task_loss(const TaskHead& head, const Vector& z, Label label);
BatchLoss task_loss(const TaskHead& head, const Matrix& z_rows, std::span<const Label> labels);

struct HeadGrads {
  Matrix weight;
  Vector bias;
};

HeadGrads head_gradients(const TaskHead& head, const Matrix& z_rows, std::span<const Label> labels);

TaskHead task_head_step(const TaskHead& head, const Vector& z, Label label, double eta_local);
TaskHead task_head_step(const TaskHead& head, const Matrix& z_rows, std::span<const Label> labels,
                        double eta_local);

enum class HeadOptimizerKind { GradientDescent, Adam };

std::string_view to_string(HeadOptimizerKind kind);
std::optional<HeadOptimizerKind> parse_head_optimizer(std::string_view name);

/// Stateful local optimizer for one device's head.
class HeadOptimizer {
 public:
  HeadOptimizer(HeadOptimizerKind kind, double lr) : kind_(kind), lr_(lr) {}

  TaskHead step(const TaskHead& head, const HeadGrads& grads);

 private:
  HeadOptimizerKind kind_;
  double lr_;
  std::size_t t_ = 0;
  Matrix m_w_, v_w_;
  Vector m_b_, v_b_;
};

/// Per-layer adapter gradients for an upstream gradient at the encoder output
/// (rows paired with the trace's samples).
std::vector<AdapterGrads> backprop_to_adapters(const SplitModel& model, const ForwardTrace& trace,
                                               const Matrix& g_hat_rows);
std::vector<AdapterGrads> backprop_to_adapters(const SplitModel& model, const ForwardTrace& trace,
                                               const Vector& g_hat);

/// ∂z/∂v^{(layer)} for one sample of the trace: maps a perturbation of layer
/// `layer`'s pre-activation output to the encoder output.
Matrix downstream_jacobian(const SplitModel& model, const ForwardTrace& trace, std::size_t layer,
                           std::size_t sample = 0);

/// Condition number of downstream_jacobian; kInfinity when rank-deficient.
double jacobian_condition(const SplitModel& model, const ForwardTrace& trace, std::size_t layer,
                          std::size_t sample = 0);

/// Fraction of rows classified correctly by argmax of the head's logits.
double accuracy(const TaskHead& head, const Matrix& z_rows, std::span<const Label> labels);

}  // namespace fedlora
