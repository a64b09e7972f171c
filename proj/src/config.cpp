#include "fedlora/config.hpp"

#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <json.hpp>

namespace fedlora {

namespace {

using json = nlohmann::json;

[[noreturn]] void fail(const std::string& key, const std::string& what) {
  throw ConfigError(key + " " + what);
}

double as_number(const json& j, const std::string& key) {
  if (!j.is_number()) fail(key, "must be a number");
  return j.get<double>();
}

std::size_t as_count(const json& j, const std::string& key) {
  if (!j.is_number_unsigned()) fail(key, "must be a non-negative integer");
  return j.get<std::size_t>();
}

bool as_bool(const json& j, const std::string& key) {
  if (!j.is_boolean()) fail(key, "must be true or false");
  return j.get<bool>();
}

std::string as_string(const json& j, const std::string& key) {
  if (!j.is_string()) fail(key, "must be a string");
  return j.get<std::string>();
}

template <typename Parse>
auto as_enum(const json& j, const std::string& key, Parse parse, const char* choices) {
  auto value = parse(as_string(j, key));
  if (!value) fail(key, std::string("must be one of ") + choices);
  return *value;
}

using Setter = std::function<void(const json&, ExperimentConfig&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"seed", [](const json& j, ExperimentConfig& c) {
         if (!j.is_number_unsigned()) fail("seed", "must be a non-negative integer");
         c.seed = j.get<std::uint64_t>();
       }},
      {"devices", [](const json& j, ExperimentConfig& c) { c.devices = as_count(j, "devices"); }},
      {"rounds", [](const json& j, ExperimentConfig& c) { c.rounds = as_count(j, "rounds"); }},
      {"epsilons", [](const json& j, ExperimentConfig& c) {
         if (!j.is_array()) fail("epsilons", "must be an array of numbers");
         c.epsilons.clear();
         for (std::size_t i = 0; i < j.size(); ++i)
           c.epsilons.push_back(as_number(j[i], "epsilons[" + std::to_string(i) + "]"));
       }},
      {"delta", [](const json& j, ExperimentConfig& c) { c.delta = as_number(j, "delta"); }},
      {"clip", [](const json& j, ExperimentConfig& c) { c.clip = as_number(j, "clip"); }},
      {"c1", [](const json& j, ExperimentConfig& c) { c.c1 = as_number(j, "c1"); }},
      {"accountant", [](const json& j, ExperimentConfig& c) {
         c.accountant = as_enum(j, "accountant", parse_accountant, "moments, strong_composition");
       }},
      {"fading", [](const json& j, ExperimentConfig& c) {
         c.fading = as_enum(j, "fading", parse_fading_kind, "rayleigh, constant");
       }},
      {"h0", [](const json& j, ExperimentConfig& c) { c.h0 = as_number(j, "h0"); }},
      {"h_floor", [](const json& j, ExperimentConfig& c) { c.h_floor = as_number(j, "h_floor"); }},
      {"n0", [](const json& j, ExperimentConfig& c) { c.n0 = as_number(j, "n0"); }},
      {"p_max", [](const json& j, ExperimentConfig& c) { c.p_max = as_number(j, "p_max"); }},
      {"power_policy", [](const json& j, ExperimentConfig& c) {
         c.power_policy =
             as_enum(j, "power_policy", parse_power_policy, "privacy_aware, full_power");
       }},
      {"eta", [](const json& j, ExperimentConfig& c) { c.eta = as_number(j, "eta"); }},
      {"eta_local",
       [](const json& j, ExperimentConfig& c) { c.eta_local = as_number(j, "eta_local"); }},
      {"head_optimizer", [](const json& j, ExperimentConfig& c) {
         c.head_optimizer = as_enum(j, "head_optimizer", parse_head_optimizer, "gd, adam");
       }},
      {"descale_gradient", [](const json& j, ExperimentConfig& c) {
         c.descale_gradient = as_bool(j, "descale_gradient");
       }},
      {"input_dim",
       [](const json& j, ExperimentConfig& c) { c.input_dim = as_count(j, "input_dim"); }},
      {"width", [](const json& j, ExperimentConfig& c) { c.width = as_count(j, "width"); }},
      {"layers", [](const json& j, ExperimentConfig& c) { c.layers = as_count(j, "layers"); }},
      {"rank", [](const json& j, ExperimentConfig& c) { c.rank = as_count(j, "rank"); }},
      {"orthonormal_scale", [](const json& j, ExperimentConfig& c) {
         c.orthonormal_scale = as_number(j, "orthonormal_scale");
       }},
      {"classes", [](const json& j, ExperimentConfig& c) { c.classes = as_count(j, "classes"); }},
      {"activation", [](const json& j, ExperimentConfig& c) {
         c.activation = as_enum(j, "activation", parse_activation, "tanh, relu, identity");
       }},
      {"samples", [](const json& j, ExperimentConfig& c) { c.samples = as_count(j, "samples"); }},
      {"fraction",
       [](const json& j, ExperimentConfig& c) { c.fraction = as_number(j, "fraction"); }},
      {"margin", [](const json& j, ExperimentConfig& c) { c.margin = as_number(j, "margin"); }},
      {"modes", [](const json& j, ExperimentConfig& c) {
         if (!j.is_array()) fail("modes", "must be an array of adapter mode names");
         c.modes.clear();
         for (std::size_t i = 0; i < j.size(); ++i) {
           c.modes.push_back(as_enum(j[i], "modes[" + std::to_string(i) + "]", parse_adapter_mode,
                                     "update_both, fixed_gaussian_a, fixed_orthonormal_a"));
         }
       }},
      {"output_dir",
       [](const json& j, ExperimentConfig& c) { c.output_dir = as_string(j, "output_dir"); }},
  };
  return table;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (devices < 1) fail("devices", "must be >= 1");
  if (epsilons.empty()) fail("epsilons", "must not be empty");
  for (std::size_t i = 0; i < epsilons.size(); ++i) {
    if (!(epsilons[i] > 0.0)) fail("epsilons[" + std::to_string(i) + "]", "must be > 0");
  }
  if (!(delta > 0.0 && delta < 1.0)) fail("delta", "must lie in (0,1)");
  if (!(clip > 0.0)) fail("clip", "must be > 0");
  if (!(c1 > 0.0)) fail("c1", "must be > 0");
  if (!(h0 >= 0.0)) fail("h0", "must be >= 0");
  if (!(h_floor > 0.0)) fail("h_floor", "must be > 0");
  if (!(n0 >= 0.0)) fail("n0", "must be >= 0");
  if (!(p_max > 0.0)) fail("p_max", "must be > 0");
  if (!(eta >= 0.0)) fail("eta", "must be >= 0");
  if (!(eta_local >= 0.0)) fail("eta_local", "must be >= 0");
  if (input_dim < 1) fail("input_dim", "must be >= 1");
  if (width < input_dim) fail("width", "must be >= input_dim");
  if (layers < 1) fail("layers", "must be >= 1");
  if (rank < 1 || rank > width / 2) fail("rank", "must lie in [1, width/2]");
  if (!(orthonormal_scale > 0.0)) fail("orthonormal_scale", "must be > 0");
  if (classes < 2) fail("classes", "must be >= 2");
  if (samples < 2 * classes) fail("samples", "must be >= 2 * classes");
  if (!(fraction > 0.0 && fraction <= 1.0)) fail("fraction", "must lie in (0,1]");
  if (!(margin >= 0.0)) fail("margin", "must be >= 0");
  if (modes.empty()) fail("modes", "must not be empty");
  for (std::size_t i = 0; i < modes.size(); ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (modes[i] == modes[j]) fail("modes[" + std::to_string(i) + "]", "is listed twice");
  for (std::size_t i = 0; i < epsilons.size(); ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (epsilons[i] == epsilons[j]) fail("epsilons[" + std::to_string(i) + "]", "is listed twice");
  if (output_dir.empty()) fail("output_dir", "must not be empty");
}

TrainingConfig ExperimentConfig::cell(AdapterMode mode, double epsilon) const {
  TrainingConfig t;
  t.model = ModelConfig{input_dim, width, layers, rank, classes, orthonormal_scale, activation};
  t.mode = mode;
  t.devices = devices;
  t.rounds = rounds;
  t.privacy = PrivacyConfig{epsilon, delta, clip, rounds == 0 ? 1 : rounds, c1, accountant};
  t.power_policy = power_policy;
  t.fading = FadingModel{fading, h0, h_floor};
  t.n0 = n0;
  t.p_max = p_max;
  t.eta = eta;
  t.eta_local = eta_local;
  t.head_optimizer = head_optimizer;
  t.descale_gradient = descale_gradient;
  t.samples = samples;
  t.fraction = fraction;
  t.margin = margin;
  return t;
}

ExperimentConfig parse_config_text(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("malformed JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  ExperimentConfig cfg;
  for (const auto& [key, value] : doc.items()) {
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError(key + " is not a recognised key");
    it->second(value, cfg);
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

std::string serialize_config(const ExperimentConfig& cfg) {
  json doc;
  if (cfg.seed) doc["seed"] = *cfg.seed;
  doc["devices"] = cfg.devices;
  doc["rounds"] = cfg.rounds;
  doc["epsilons"] = cfg.epsilons;
  doc["delta"] = cfg.delta;
  doc["clip"] = cfg.clip;
  doc["c1"] = cfg.c1;
  doc["accountant"] = std::string(to_string(cfg.accountant));
  doc["fading"] = std::string(to_string(cfg.fading));
  doc["h0"] = cfg.h0;
  doc["h_floor"] = cfg.h_floor;
  doc["n0"] = cfg.n0;
  doc["p_max"] = cfg.p_max;
  doc["power_policy"] = std::string(to_string(cfg.power_policy));
  doc["eta"] = cfg.eta;
  doc["eta_local"] = cfg.eta_local;
  doc["head_optimizer"] = std::string(to_string(cfg.head_optimizer));
  doc["descale_gradient"] = cfg.descale_gradient;
  doc["input_dim"] = cfg.input_dim;
  doc["width"] = cfg.width;
  doc["layers"] = cfg.layers;
  doc["rank"] = cfg.rank;
  doc["orthonormal_scale"] = cfg.orthonormal_scale;
  doc["classes"] = cfg.classes;
  doc["activation"] = std::string(to_string(cfg.activation));
  doc["samples"] = cfg.samples;
  doc["fraction"] = cfg.fraction;
  doc["margin"] = cfg.margin;
  json modes = json::array();
  for (auto m : cfg.modes) modes.push_back(std::string(to_string(m)));
  doc["modes"] = modes;
  doc["output_dir"] = cfg.output_dir;
  return doc.dump(2) + "\n";
}

std::uint64_t resolve_seed(const ExperimentConfig& cfg, std::optional<std::uint64_t> cli_seed) {
  if (cli_seed) return *cli_seed;
  if (cfg.seed) return *cfg.seed;
  if (const char* env = std::getenv("SIM_DEFAULT_SEED"); env && *env) {
    try {
      std::size_t used = 0;
      const auto value = std::stoull(env, &used);
      if (used == std::string_view(env).size()) return value;
    } catch (const std::exception&) {
    }
    throw ConfigError(std::string("SIM_DEFAULT_SEED must be an integer, got '") + env + "'");
  }
  return 0;
}

}  // namespace fedlora
