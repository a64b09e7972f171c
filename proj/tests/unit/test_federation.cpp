#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "fedlora/federation.hpp"
#include "oracle.hpp"

using namespace fedlora;

namespace {

TrainingConfig small_config() {
  TrainingConfig cfg;
  cfg.model.input_dim = 4;
  cfg.model.width = 8;
  cfg.model.layers = 2;
  cfg.model.rank = 2;
  cfg.model.classes = 3;
  cfg.devices = 4;
  cfg.rounds = 5;
  cfg.samples = 300;
  cfg.fraction = 0.1;
  cfg.privacy.epsilon_target = 5.0;
  cfg.n0 = 1.0;
  cfg.p_max = 1e4;
  cfg.eta = 0.05;
  return cfg;
}

TrainingConfig noiseless(TrainingConfig cfg) {
  cfg.n0 = 0.0;
  cfg.power_policy = PowerPolicy::FullPower;
  cfg.descale_gradient = true;
  cfg.privacy.clip_c = 1e6;
  return cfg;
}

std::vector<AdapterGrads> random_grads(RngStream& rng) {
  return {{sample_gaussian(rng, 2, 3, 1.0), sample_gaussian(rng, 3, 2, 1.0)},
          {sample_gaussian(rng, 2, 3, 1.0), sample_gaussian(rng, 3, 2, 1.0)}};
}

}  // namespace

TEST_SUITE("federation") {
  TEST_CASE("aggregation") {
    RngStream rng(1);
    const auto g0 = random_grads(rng), g1 = random_grads(rng), g2 = random_grads(rng);

    const std::vector<std::vector<AdapterGrads>> one{g0};
    const std::vector<double> s1{7.0};
    const auto single = aggregate(one, s1);
    CHECK(single[1].grad_b == g0[1].grad_b);

    const std::vector<std::vector<AdapterGrads>> two{g0, g1};
    const std::vector<double> w13{1.0, 3.0};
    const auto mix = aggregate(two, w13);
    CHECK(max_abs_diff(mix[0].grad_a, 0.25 * g0[0].grad_a + 0.75 * g1[0].grad_a) <= 1e-15);

    const std::vector<std::vector<AdapterGrads>> same{g2, g2, g2};
    const std::vector<double> s3{2.0, 5.0, 1.0};
    CHECK(max_abs_diff(aggregate(same, s3)[1].grad_a, g2[1].grad_a) <= 1e-15);

    const std::vector<std::vector<AdapterGrads>> abc{g0, g1, g2}, cab{g2, g0, g1};
    const std::vector<double> sabc{1.0, 2.0, 3.0}, scab{3.0, 1.0, 2.0};
    const auto x = aggregate(abc, sabc), y = aggregate(cab, scab);
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(max_abs_diff(x[i].grad_a, y[i].grad_a) <= 1e-14);
      CHECK(max_abs_diff(x[i].grad_b, y[i].grad_b) <= 1e-14);
    }

    const std::vector<std::vector<AdapterGrads>> none;
    const std::vector<double> no_sizes;
    CHECK_THROWS_AS(aggregate(none, no_sizes), std::invalid_argument);
    CHECK_THROWS_AS(aggregate(two, s1), std::invalid_argument);
    const std::vector<double> bad{1.0, 0.0};
    CHECK_THROWS_AS(aggregate(two, bad), std::invalid_argument);
  }

  TEST_CASE("config validation") {
    TrainingConfig cfg = small_config();
    CHECK_NOTHROW(cfg.validate());
    cfg.devices = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = small_config();
    cfg.n0 = -1.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = small_config();
    cfg.fraction = 1.5;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    CHECK(parse_power_policy("full_power") == PowerPolicy::FullPower);
    CHECK_FALSE(parse_power_policy("max").has_value());
  }

  TEST_CASE("one noiseless round equals a centralized step") {
    for (AdapterMode mode : {AdapterMode::UpdateBoth, AdapterMode::FixedOrthonormalA}) {
      TrainingConfig cfg = noiseless(small_config());
      cfg.mode = mode;
      cfg.devices = 1;
      cfg.rounds = 1;
      const RngStream rng(3);
      const SplitDataset data = training_data(cfg, rng);
      Federation fed(cfg, data, rng);
      RngStream perturb(4);
      for (auto& ad : fed.mutable_server().model.adapters)
        ad.b = sample_gaussian(perturb, ad.b.rows(), ad.b.cols(), 0.3);
      for (auto& dev : fed.mutable_devices())
        dev.head = {sample_gaussian(perturb, 3, 8, 0.5), sample_gaussian_vector(perturb, 3, 0.1)};

      const DeviceState& dev = fed.devices()[0];
      oracle::Network net = oracle::to_network(fed.server().model, dev.head);
      const auto xs = oracle::to_dense(dev.shard.features);
      const std::vector<std::size_t> labels(dev.shard.labels.begin(), dev.shard.labels.end());
      oracle::sgd_step(net, oracle::gradients(net, xs, labels), cfg.eta, cfg.eta_local,
                       updates_a(mode));

      fed.run_round(0);
      const auto& model = fed.server().model;
      for (std::size_t i = 0; i < model.layers(); ++i) {
        CHECK(oracle::max_abs(oracle::to_dense(model.adapters[i].a), net.a[i]) <= 1e-10);
        CHECK(oracle::max_abs(oracle::to_dense(model.adapters[i].b), net.b[i]) <= 1e-10);
      }
      CHECK(oracle::max_abs(oracle::to_dense(fed.devices()[0].head.weight), net.head_w) <= 1e-10);
    }
  }

  TEST_CASE("zero server step size leaves adapters unchanged") {
    TrainingConfig cfg = small_config();
    cfg.eta = 0.0;
    cfg.mode = AdapterMode::UpdateBoth;
    const RngStream rng(5);
    Federation fed(cfg, training_data(cfg, rng), rng);
    const SplitModel before = fed.server().model;
    const TaskHead head_before = fed.devices()[0].head;
    fed.run_round(0);
    for (std::size_t i = 0; i < before.layers(); ++i) {
      CHECK(fed.server().model.adapters[i].a == before.adapters[i].a);
      CHECK(fed.server().model.adapters[i].b == before.adapters[i].b);
    }
    CHECK_FALSE(fed.devices()[0].head.weight == head_before.weight);
  }

  TEST_CASE("slot order does not change results") {
    TrainingConfig cfg = small_config();
    cfg.mode = AdapterMode::UpdateBoth;
    const RngStream rng(6);
    cfg.slot_order = SlotOrder::Ascending;
    const TrainingResult asc = run_training(cfg, rng);
    cfg.slot_order = SlotOrder::Descending;
    const TrainingResult desc = run_training(cfg, rng);
    cfg.slot_order = SlotOrder::Concurrent;
    const TrainingResult conc = run_training(cfg, rng);
    for (std::size_t i = 0; i < asc.model.layers(); ++i) {
      CHECK(asc.model.adapters[i].b == desc.model.adapters[i].b);
      CHECK(asc.model.adapters[i].b == conc.model.adapters[i].b);
      CHECK(asc.model.adapters[i].a == conc.model.adapters[i].a);
    }
    for (std::size_t t = 0; t < cfg.rounds; ++t) {
      CHECK(asc.records[t].train_loss == conc.records[t].train_loss);
      CHECK(asc.records[t].test_accuracy == desc.records[t].test_accuracy);
    }
  }

  TEST_CASE("determinism and zero rounds") {
    const TrainingConfig cfg = small_config();
    const TrainingResult a = run_training(cfg, RngStream(8));
    const TrainingResult b = run_training(cfg, RngStream(8));
    CHECK(a.model.adapters[1].b == b.model.adapters[1].b);
    CHECK(a.records.back().train_loss == b.records.back().train_loss);
    const TrainingResult c = run_training(cfg, RngStream(9));
    CHECK_FALSE(a.model.adapters[1].b == c.model.adapters[1].b);

    TrainingConfig none = cfg;
    none.rounds = 0;
    const TrainingResult z = run_training(none, RngStream(8));
    CHECK(z.records.empty());
    CHECK(frobenius_energy(z.model.adapters[0].b) == 0.0);
  }

  TEST_CASE("privacy, power and message audit") {
    for (double eps : {0.5, 5.0, 100.0}) {
      TrainingConfig cfg = small_config();
      cfg.privacy.epsilon_target = eps;
      cfg.fading.kind = FadingKind::RayleighUnitPower;
      cfg.mode = AdapterMode::FixedGaussianA;
      const RngStream rng(10);
      Federation fed(cfg, training_data(cfg, rng), rng);
      const SplitModel before = fed.server().model;
      const double total = std::accumulate(fed.server().weights.begin(),
                                           fed.server().weights.end(), 0.0);
      CHECK(total == doctest::Approx(1.0).epsilon(1e-14));
      for (std::size_t t = 0; t < cfg.rounds; ++t) {
        const RoundRecord rec = fed.run_round(t);
        CHECK(rec.realized_epsilon_max <= eps * (1 + 1e-9));
        for (const auto& d : rec.devices) {
          CHECK(d.epsilon <= eps * (1 + 1e-9));
          CHECK((d.alpha * cfg.privacy.clip_c) * (d.alpha * cfg.privacy.clip_c) <=
                cfg.p_max * (1 + 1e-12));
        }
        CHECK(rec.uplink.size() == 2 * cfg.devices);
        for (const auto& msg : rec.uplink) {
          const DeviceState& dev = fed.devices()[msg.device];
          CHECK(msg.rows == dev.shard.size());
          if (msg.kind == MessageKind::Features) {
            CHECK(msg.cols == before.embed_dim());
            CHECK(msg.payload_norm == 0.0);
          } else {
            CHECK(msg.cols == before.output_dim());
            CHECK(msg.payload_norm <= rec.devices[msg.device].alpha * cfg.privacy.clip_c *
                                          (1 + 1e-12));
          }
        }
        CHECK(rec.power_bound_fraction() >= 0.0);
        CHECK(rec.power_bound_fraction() <= 1.0);
      }
      for (std::size_t i = 0; i < before.layers(); ++i)
        CHECK(fed.server().model.adapters[i].a == before.adapters[i].a);
    }
  }

  TEST_CASE("noiseless training learns a separable task") {
    TrainingConfig cfg = noiseless(small_config());
    cfg.margin = 6.0;
    cfg.rounds = 200;
    cfg.devices = 3;
    cfg.fraction = 0.2;
    const TrainingResult r = run_training(cfg, RngStream(12));
    CHECK(r.records.back().test_accuracy >= 0.95);
    CHECK(r.records.back().train_loss < r.records.front().train_loss);
  }
}
