#include "fedlora/federation.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <future>
#include <numeric>
#include <stdexcept>
#include <string>

namespace fedlora {

namespace {

RngStream cell_stream(const RngStream& rng, const TrainingConfig& cfg) {
  return rng.child("cell", static_cast<std::uint64_t>(cfg.mode))
      .child("epsilon", std::bit_cast<std::uint64_t>(cfg.privacy.epsilon_target));
}

Vector flatten(const Matrix& m) { return Vector(m.raw()); }

Matrix unflatten(const Vector& v, std::size_t rows, std::size_t cols) {
  return Matrix(rows, cols, v.raw());
}

}  // namespace

std::string_view to_string(PowerPolicy policy) {
  return policy == PowerPolicy::FullPower ? "full_power" : "privacy_aware";
}

std::optional<PowerPolicy> parse_power_policy(std::string_view name) {
  if (name == "privacy_aware") return PowerPolicy::PrivacyAware;
  if (name == "full_power") return PowerPolicy::FullPower;
  return std::nullopt;
}

void TrainingConfig::validate() const {
  model.validate();
  if (devices == 0) throw std::invalid_argument("devices must be >= 1");
  if (rounds > 0) {
    PrivacyConfig p = privacy;
    p.rounds = rounds;
    p.validate();
  }
  if (!(n0 >= 0.0)) throw std::invalid_argument("n0 must be >= 0");
  if (!(p_max > 0.0)) throw std::invalid_argument("p_max must be > 0");
  if (!(fading.h_floor > 0.0)) throw std::invalid_argument("h_floor must be > 0");
  if (fading.kind == FadingKind::Constant && !(fading.h0 >= 0.0)) {
    throw std::invalid_argument("h0 must be >= 0");
  }
  if (!(eta >= 0.0)) throw std::invalid_argument("eta must be >= 0");
  if (!(eta_local >= 0.0)) throw std::invalid_argument("eta_local must be >= 0");
  if (samples < 2 * model.classes) throw std::invalid_argument("samples must be >= 2 * classes");
  if (!(fraction > 0.0 && fraction <= 1.0)) throw std::invalid_argument("fraction must lie in (0,1]");
  if (!(margin >= 0.0)) throw std::invalid_argument("margin must be >= 0");
}

double RoundRecord::power_bound_fraction() const {
  if (devices.empty()) return 0.0;
  const auto n = std::count_if(devices.begin(), devices.end(), [](const DeviceRoundStats& d) {
    return d.binding == Binding::PowerBound;
  });
  return static_cast<double>(n) / static_cast<double>(devices.size());
}

double RoundRecord::mean_snr() const {
  if (devices.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& d : devices) acc += d.snr;
  return acc / static_cast<double>(devices.size());
}

double RoundRecord::mean_alpha() const {
  if (devices.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& d : devices) acc += d.alpha;
  return acc / static_cast<double>(devices.size());
}

std::vector<AdapterGrads> aggregate(std::span<const std::vector<AdapterGrads>> per_device,
                                    std::span<const double> sizes) {
  if (per_device.empty()) throw std::invalid_argument("aggregate: no device gradients");
  if (per_device.size() != sizes.size()) {
    throw std::invalid_argument("aggregate: gradient and size lists differ in length");
  }
  const double total = std::accumulate(sizes.begin(), sizes.end(), 0.0);
  for (double s : sizes) {
    if (!(s > 0.0)) throw std::invalid_argument("aggregate: dataset sizes must be positive");
  }
  std::vector<AdapterGrads> out;
  for (const auto& layer : per_device.front()) {
    out.push_back({Matrix(layer.grad_a.rows(), layer.grad_a.cols()),
                   Matrix(layer.grad_b.rows(), layer.grad_b.cols())});
  }
  for (std::size_t k = 0; k < per_device.size(); ++k) {
    if (per_device[k].size() != out.size()) {
      throw std::invalid_argument("aggregate: devices report different layer counts");
    }
    const double w = sizes[k] / total;
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i].grad_a += w * per_device[k][i].grad_a;
      out[i].grad_b += w * per_device[k][i].grad_b;
    }
  }
  return out;
}

struct Federation::SlotResult {
  DeviceRoundStats stats;
  TaskHead head;
  HeadOptimizer optimizer{HeadOptimizerKind::GradientDescent, 0.0};
  std::vector<AdapterGrads> grads;
  std::vector<UplinkMessage> messages;
};

SplitDataset training_data(const TrainingConfig& cfg, const RngStream& rng) {
  return generate(rng.child("data").key(), cfg.samples, cfg.model.input_dim, cfg.model.classes,
                  cfg.margin);
}

Federation::Federation(TrainingConfig cfg, const SplitDataset& data, const RngStream& rng)
    : cfg_(std::move(cfg)),
      fading_rng_(rng.child("fading")),
      noise_rng_(cell_stream(rng, cfg_).child("noise")),
      test_(data.test) {
  cfg_.validate();
  if (cfg_.rounds > 0) cfg_.privacy.rounds = cfg_.rounds;

  RngStream frozen = rng.child("frozen");
  RngStream adapters = cell_stream(rng, cfg_).child("adapters");
  server_.model = build_model(cfg_.model, cfg_.mode, frozen, adapters);

  const auto shards = partition(data.train, cfg_.devices, cfg_.fraction, rng.child("partition").key());
  double total = 0.0;
  for (std::size_t k = 0; k < shards.size(); ++k) {
    DeviceState dev;
    dev.id = k;
    dev.shard = data.train.subset(shards[k]);
    dev.head = init_head(cfg_.model.classes, cfg_.model.width);
    dev.optimizer = HeadOptimizer(cfg_.head_optimizer, cfg_.eta_local);
    total += static_cast<double>(dev.shard.size());
    devices_.push_back(std::move(dev));
  }
  for (const auto& dev : devices_)
    server_.weights.push_back(static_cast<double>(dev.shard.size()) / total);

  spend_.resize(devices_.size());
  alphas_.resize(devices_.size());
  hs_.resize(devices_.size());
  bindings_.resize(devices_.size());
}

Federation::SlotResult Federation::run_slot(std::size_t k, std::size_t t) const {
  const DeviceState& dev = devices_[k];
  const SplitModel& model = server_.model;
  SlotResult out;
  out.stats.device = k;

  // (1) device: embed local data and upload the features.
  const Matrix z_e = embed(model, dev.shard.features);
  out.messages.push_back({k, MessageKind::Features, z_e.rows(), z_e.cols(), 0.0});

  // (2) server: encoder forward with current adapters; z returns over the downlink.
  const ForwardTrace trace = encoder_forward(model, z_e);

  // (3) device: gradient deviation at the current head, then the local head step.
  const BatchLoss loss = task_loss(dev.head, trace.z, dev.shard.labels);
  out.stats.local_loss = loss.loss;
  out.optimizer = dev.optimizer;
  out.head = out.optimizer.step(dev.head, head_gradients(dev.head, trace.z, dev.shard.labels));

  // (4) device: clip, choose α, transmit; server equalizes.
  const Vector g_clipped = clip_gradient(flatten(loss.grad_z), cfg_.privacy.clip_c);
  RngStream fading = fading_rng_.child("round", t).child("device", k);
  RngStream noise = noise_rng_.child("round", t).child("device", k);
  const ChannelState ch{draw_channel(cfg_.fading, fading), cfg_.n0, cfg_.p_max,
                        cfg_.fading.h_floor};
  const PowerDecision decision = cfg_.power_policy == PowerPolicy::PrivacyAware
                                     ? power_control_alpha(cfg_.privacy, ch)
                                     : full_power_alpha(cfg_.privacy, ch);
  if (!power_ok(decision.alpha, cfg_.privacy.clip_c, ch)) {
    throw std::runtime_error("round " + std::to_string(t) + " device " + std::to_string(k) +
                             ": alpha " + std::to_string(decision.alpha) +
                             " violates the power cap");
  }
  const Vector y = transmit_uplink(g_clipped, decision.alpha, ch, noise);
  out.messages.push_back({k, MessageKind::GradientDeviation, trace.z.rows(), trace.z.cols(),
                          decision.alpha * g_clipped.norm()});

  const double c1 = cfg_.privacy.effective_c1();
  out.stats.h = ch.h;
  out.stats.alpha = decision.alpha;
  out.stats.binding = decision.binding;
  out.stats.snr = snr(decision.alpha, cfg_.privacy.clip_c, g_clipped.dim(), cfg_.n0);
  out.stats.epsilon = decision.alpha == 0.0 ? 0.0
                      : cfg_.n0 == 0.0      ? kInfinity
                                            : c1 * decision.alpha * ch.h * cfg_.privacy.clip_c *
                                             cfg_.privacy.composition_factor() / std::sqrt(cfg_.n0);

  // (5) server: chain rule on the received gradient deviation.
  Vector g_hat = equalize(y, ch.h, cfg_.fading.h_floor);
  if (cfg_.descale_gradient) {
    if (decision.alpha > 0.0) {
      g_hat *= 1.0 / decision.alpha;
    } else {
      g_hat = Vector(g_hat.dim());  // nothing was sent about the data
    }
  }
  require_finite(g_hat.values(), "received gradient deviation");
  out.grads = backprop_to_adapters(model, trace, unflatten(g_hat, trace.z.rows(), trace.z.cols()));
  return out;
}

RoundRecord Federation::run_round(std::size_t t) {
  const std::size_t k_devices = devices_.size();
  std::vector<std::optional<SlotResult>> slots(k_devices);

  switch (cfg_.slot_order) {
    case SlotOrder::Ascending:
      for (std::size_t k = 0; k < k_devices; ++k) slots[k] = run_slot(k, t);
      break;
    case SlotOrder::Descending:
      for (std::size_t k = k_devices; k-- > 0;) slots[k] = run_slot(k, t);
      break;
    case SlotOrder::Concurrent: {
      std::vector<std::future<SlotResult>> pending;
      for (std::size_t k = 0; k < k_devices; ++k)
        pending.push_back(std::async(std::launch::async, [this, k, t] { return run_slot(k, t); }));
      for (std::size_t k = 0; k < k_devices; ++k) slots[k] = pending[k].get();
      break;
    }
  }

  RoundRecord record;
  record.round = t;
  std::vector<std::vector<AdapterGrads>> per_device;
  for (std::size_t k = 0; k < k_devices; ++k) {
    SlotResult& slot = *slots[k];
    devices_[k].head = std::move(slot.head);
    devices_[k].optimizer = std::move(slot.optimizer);
    record.train_loss += server_.weights[k] * slot.stats.local_loss;
    record.uplink.insert(record.uplink.end(), slot.messages.begin(), slot.messages.end());
    alphas_[k].push_back(slot.stats.alpha);
    hs_[k].push_back(slot.stats.h);
    bindings_[k].push_back(slot.stats.binding);
    spend_[k] = account_rounds(alphas_[k], hs_[k], bindings_[k], cfg_.privacy, cfg_.n0, k);
    record.realized_epsilon_max = std::max(record.realized_epsilon_max, spend_[k].realized_epsilon);
    record.devices.push_back(slot.stats);
    per_device.push_back(std::move(slot.grads));
  }

  const auto global = aggregate(per_device, server_.weights);
  for (std::size_t i = 0; i < server_.model.layers(); ++i) {
    server_.model.adapters[i] =
        apply_update(server_.model.adapters[i], global[i].grad_a, global[i].grad_b, cfg_.eta);
    require_finite(server_.model.adapters[i].b.values(), "adapter B");
    require_finite(server_.model.adapters[i].a.values(), "adapter A");
  }
  record.test_accuracy = evaluate();
  return record;
}

double Federation::evaluate() const {
  if (test_.size() == 0 || devices_.empty()) return 0.0;
  const ForwardTrace trace = encoder_forward(server_.model, embed(server_.model, test_.features));
  double acc = 0.0;
  for (const auto& dev : devices_) acc += accuracy(dev.head, trace.z, test_.labels);
  return acc / static_cast<double>(devices_.size());
}

TrainingResult run_training(const TrainingConfig& cfg, const RngStream& rng) {
  const SplitDataset data = training_data(cfg, rng);
  Federation fed(cfg, data, rng);
  TrainingResult result;
  for (std::size_t t = 0; t < cfg.rounds; ++t) result.records.push_back(fed.run_round(t));
  result.model = fed.server().model;
  for (const auto& dev : fed.devices()) result.heads.push_back(dev.head);
  result.privacy = fed.privacy();
  return result;
}

}  // namespace fedlora
