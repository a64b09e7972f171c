// Python module `fedlora._fedlora`. Matrices and vectors cross the boundary as
// float64 numpy arrays.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>

#include "fedlora/channel.hpp"
#include "fedlora/config.hpp"
#include "fedlora/data.hpp"
#include "fedlora/federation.hpp"
#include "fedlora/grid.hpp"
#include "fedlora/lora.hpp"
#include "fedlora/numerics.hpp"
#include "fedlora/privacy.hpp"

namespace py = pybind11;
using namespace fedlora;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const Array& arr) {
  if (arr.ndim() != 2) throw ShapeError("expected a 2-D array");
  const auto rows = static_cast<std::size_t>(arr.shape(0));
  const auto cols = static_cast<std::size_t>(arr.shape(1));
  return Matrix(rows, cols, std::vector<double>(arr.data(), arr.data() + rows * cols));
}

Vector to_vector(const Array& arr) {
  if (arr.ndim() != 1) throw ShapeError("expected a 1-D array");
  return Vector(std::vector<double>(arr.data(), arr.data() + arr.shape(0)));
}

Array to_numpy(const Matrix& m) {
  const std::vector<py::ssize_t> shape{static_cast<py::ssize_t>(m.rows()),
                                       static_cast<py::ssize_t>(m.cols())};
  return Array(shape, m.raw().data());
}

Array to_numpy(const Vector& v) {
  const std::vector<py::ssize_t> shape{static_cast<py::ssize_t>(v.dim())};
  return Array(shape, v.raw().data());
}

template <typename Enum, typename Parse>
Enum parse_or_throw(const std::string& name, Parse parse) {
  const auto value = parse(name);
  if (!value) throw py::value_error("unknown name: " + name);
  return *value;
}

py::dict record_dict(const RoundRecord& r) {
  py::dict d;
  d["round"] = r.round;
  d["train_loss"] = r.train_loss;
  d["test_accuracy"] = r.test_accuracy;
  d["realized_epsilon_max"] = r.realized_epsilon_max;
  d["power_bound_fraction"] = r.power_bound_fraction();
  d["mean_snr"] = r.mean_snr();
  d["mean_alpha"] = r.mean_alpha();
  py::list alphas, hs;
  for (const auto& dev : r.devices) {
    alphas.append(dev.alpha);
    hs.append(dev.h);
  }
  d["alpha"] = alphas;
  d["h"] = hs;
  return d;
}

}  // namespace

PYBIND11_MODULE(_fedlora, m) {
  m.doc() = "Split federated LoRA simulation core";

  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  m.def("singular_extremes", [](const Array& a) {
    const auto s = singular_extremes(to_matrix(a));
    return py::make_tuple(s.sigma_max, s.sigma_min, s.kappa);
  }, "(sigma_max, sigma_min, kappa) of a matrix");
  m.def("singular_values", [](const Array& a) { return singular_values(to_matrix(a)); });

  m.def("orthonormal_rows", [](std::size_t r, std::size_t d, double scale, std::uint64_t seed) {
    RngStream rng(seed);
    return to_numpy(orthonormal_rows(rng, r, d, scale));
  }, py::arg("r"), py::arg("d"), py::arg("scale") = 1.0, py::arg("seed") = 0);

  m.def("noise_in_delta_w_both", [](const Array& a, const Array& b, const Array& g,
                                    const Array& n, const Array& u, double eta) {
    return to_numpy(noise_in_delta_w_both(to_matrix(a), to_matrix(b), to_vector(g), to_vector(n),
                                          to_vector(u), eta));
  }, py::arg("a"), py::arg("b"), py::arg("g"), py::arg("n"), py::arg("u"), py::arg("eta"));
  m.def("noise_in_delta_w_fixed_a", [](const Array& a, const Array& n, const Array& u,
                                       double eta) {
    return to_numpy(noise_in_delta_w_fixed_a(to_matrix(a), to_vector(n), to_vector(u), eta));
  }, py::arg("a"), py::arg("n"), py::arg("u"), py::arg("eta"));
  m.def("noise_energy_fixed_a", [](const Array& a, const Array& u, double cov_trace, double eta) {
    return noise_energy_fixed_a(to_matrix(a), to_vector(u), cov_trace, eta);
  }, py::arg("a"), py::arg("u"), py::arg("noise_cov_trace"), py::arg("eta"));

  m.def("snr", &snr, py::arg("alpha"), py::arg("clip_c"), py::arg("d"), py::arg("n0"));
  m.def("clip_gradient", [](const Array& g, double c) {
    return to_numpy(clip_gradient(to_vector(g), c));
  }, py::arg("g"), py::arg("clip_c"));
  m.def("epsilon_from_snr", &epsilon_from_snr, py::arg("c1"), py::arg("h"), py::arg("rounds"),
        py::arg("delta"), py::arg("snr"), py::arg("d"));
  m.def("epsilon_from_sigma", &epsilon_from_sigma, py::arg("c1"), py::arg("alpha"),
        py::arg("clip_c"), py::arg("sigma_eff"), py::arg("rounds"), py::arg("delta"));

  m.def("power_control_alpha", [](double epsilon, double delta, double clip_c,
                                  std::size_t rounds, double h, double n0, double p_max,
                                  double c1, const std::string& accountant) {
    PrivacyConfig cfg;
    cfg.epsilon_target = epsilon;
    cfg.delta = delta;
    cfg.clip_c = clip_c;
    cfg.rounds = rounds;
    cfg.c1 = c1;
    cfg.accountant = parse_or_throw<Accountant>(accountant, parse_accountant);
    const auto dec = power_control_alpha(cfg, ChannelState{h, n0, p_max, kDefaultHFloor});
    py::dict d;
    d["alpha"] = dec.alpha;
    d["binding"] = std::string(to_string(dec.binding));
    d["privacy_cap"] = dec.privacy_cap;
    d["power_cap"] = dec.power_cap;
    return d;
  }, py::arg("epsilon"), py::arg("delta"), py::arg("clip_c"), py::arg("rounds"), py::arg("h"),
     py::arg("n0"), py::arg("p_max"), py::arg("c1") = 1.0, py::arg("accountant") = "moments");

  m.def("generate", [](std::uint64_t seed, std::size_t n, std::size_t d_x, std::size_t classes,
                       double margin) {
    const SplitDataset ds = generate(seed, n, d_x, classes, margin);
    return py::make_tuple(to_numpy(ds.train.features), ds.train.labels,
                          to_numpy(ds.test.features), ds.test.labels);
  }, py::arg("seed"), py::arg("n"), py::arg("d_x"), py::arg("classes"), py::arg("margin"));

  m.def("validate_config", [](const std::string& json_text) {
    return serialize_config(parse_config_text(json_text));
  }, "Parse a JSON config and return its canonical form", py::arg("json_text"));

  m.def("run_cell", [](const std::string& json_text, const std::string& mode, double epsilon,
                       std::uint64_t seed) {
    const ExperimentConfig cfg = parse_config_text(json_text);
    const AdapterMode m = parse_or_throw<AdapterMode>(mode, parse_adapter_mode);
    TrainingResult result;
    {
      py::gil_scoped_release release;
      result = run_training(cfg.cell(m, epsilon), RngStream(seed));
    }
    py::list records;
    for (const auto& r : result.records) records.append(record_dict(r));
    return records;
  }, "Run one (mode, epsilon) cell and return per-round metrics", py::arg("config_json"),
     py::arg("mode"), py::arg("epsilon"), py::arg("seed") = 0);

  m.def("csv_header", &csv_header);
  m.attr("SCHEMA_VERSION") = kSchemaVersion;
}
