#include "fedlora/grid.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace fedlora {

namespace {

using json = nlohmann::json;

std::string fmt(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

double parse_double(const std::string& s) {
  if (s == "inf") return kInfinity;
  if (s == "-inf") return -kInfinity;
  return std::stod(s);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

json finite_or_string(double v) {
  if (std::isfinite(v)) return v;
  return fmt(v);
}

}  // namespace

std::vector<EpochRow> epoch_rows(AdapterMode mode, double epsilon,
                                 const std::vector<RoundRecord>& records) {
  std::vector<EpochRow> rows;
  for (const auto& r : records) {
    rows.push_back({mode, epsilon, r.round + 1, r.train_loss, r.test_accuracy,
                    r.realized_epsilon_max, r.power_bound_fraction(), r.mean_snr(),
                    r.mean_alpha()});
  }
  return rows;
}

std::string csv_header() {
  return "schema_version,mode,epsilon_target,epoch,train_loss,test_accuracy,"
         "realized_epsilon_max,power_bound_fraction,mean_snr,mean_alpha";
}

std::string format_csv(const std::vector<EpochRow>& rows) {
  std::string out = csv_header() + "\n";
  for (const auto& r : rows) {
    out += std::to_string(kSchemaVersion) + "," + std::string(to_string(r.mode)) + "," +
           fmt(r.epsilon_target) + "," + std::to_string(r.epoch) + "," + fmt(r.train_loss) + "," +
           fmt(r.test_accuracy) + "," + fmt(r.realized_epsilon_max) + "," +
           fmt(r.power_bound_fraction) + "," + fmt(r.mean_snr) + "," + fmt(r.mean_alpha) + "\n";
  }
  return out;
}

std::vector<EpochRow> parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != csv_header()) {
    throw std::runtime_error("metrics CSV: unexpected header");
  }
  std::vector<EpochRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 10) throw std::runtime_error("metrics CSV: expected 10 columns");
    if (std::stoi(cells[0]) != kSchemaVersion) {
      throw std::runtime_error("metrics CSV: unsupported schema_version " + cells[0]);
    }
    const auto mode = parse_adapter_mode(cells[1]);
    if (!mode) throw std::runtime_error("metrics CSV: unknown mode " + cells[1]);
    rows.push_back({*mode, parse_double(cells[2]), std::stoul(cells[3]), parse_double(cells[4]),
                    parse_double(cells[5]), parse_double(cells[6]), parse_double(cells[7]),
                    parse_double(cells[8]), parse_double(cells[9])});
  }
  return rows;
}

std::string cell_name(AdapterMode mode, double epsilon) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%g", epsilon);
  return std::string(to_string(mode)) + "_eps" + buf;
}

CellSummary summarize_rows(const std::vector<EpochRow>& rows, std::size_t devices) {
  if (rows.empty()) throw std::invalid_argument("summarize: cell has no epochs");
  CellSummary s;
  s.mode = rows.front().mode;
  s.epsilon_target = rows.front().epsilon_target;
  s.csv = cell_name(s.mode, s.epsilon_target) + ".csv";
  s.final_accuracy = rows.back().test_accuracy;
  s.best_accuracy = -1.0;
  for (const auto& r : rows) {
    if (r.test_accuracy > s.best_accuracy) {
      s.best_accuracy = r.test_accuracy;
      s.epochs_to_best = r.epoch;
    }
    s.realized_epsilon_max = std::max(s.realized_epsilon_max, r.realized_epsilon_max);
    const auto power = static_cast<std::size_t>(
        std::llround(r.power_bound_fraction * static_cast<double>(devices)));
    s.power_bound_count += power;
    s.privacy_bound_count += devices - power;
  }
  return s;
}

CellSummary summarize(AdapterMode mode, double epsilon, const std::vector<RoundRecord>& records,
                      std::size_t devices) {
  return summarize_rows(parse_csv(format_csv(epoch_rows(mode, epsilon, records))), devices);
}

std::string summary_json(const std::vector<CellSummary>& cells) {
  json doc;
  doc["schema_version"] = kSchemaVersion;
  json cell_docs = json::array();
  std::vector<double> eps_order;
  for (const auto& c : cells) {
    cell_docs.push_back({{"mode", std::string(to_string(c.mode))},
                         {"epsilon_target", c.epsilon_target},
                         {"csv", c.csv},
                         {"final_accuracy", c.final_accuracy},
                         {"best_accuracy", c.best_accuracy},
                         {"epochs_to_best", c.epochs_to_best},
                         {"realized_epsilon_max", finite_or_string(c.realized_epsilon_max)},
                         {"binding_counts",
                          {{"privacy", c.privacy_bound_count}, {"power", c.power_bound_count}}}});
    if (std::find(eps_order.begin(), eps_order.end(), c.epsilon_target) == eps_order.end()) {
      eps_order.push_back(c.epsilon_target);
    }
  }
  doc["cells"] = cell_docs;

  json ordering = json::array();
  for (double eps : eps_order) {
    std::vector<const CellSummary*> at_eps;
    for (const auto& c : cells)
      if (c.epsilon_target == eps) at_eps.push_back(&c);
    std::stable_sort(at_eps.begin(), at_eps.end(), [](const CellSummary* a, const CellSummary* b) {
      return a->final_accuracy > b->final_accuracy;
    });
    json modes = json::array();
    json accs = json::array();
    for (const auto* c : at_eps) {
      modes.push_back(std::string(to_string(c->mode)));
      accs.push_back(c->final_accuracy);
    }
    ordering.push_back({{"epsilon_target", eps},
                        {"modes_by_final_accuracy", modes},
                        {"final_accuracy", accs}});
  }
  doc["ordering"] = ordering;
  return doc.dump(2) + "\n";
}

int run_grid(const ExperimentConfig& cfg, const GridOptions& opts, std::ostream& log) {
  cfg.validate();
  std::filesystem::create_directories(opts.out_dir);

  ExperimentConfig resolved = cfg;
  resolved.seed = opts.seed;
  resolved.output_dir = opts.out_dir.string();
  write_file(opts.out_dir / "config.json", serialize_config(resolved));

  struct Cell {
    AdapterMode mode;
    double epsilon;
    std::string error;
    bool ok = false;
  };
  std::vector<Cell> cells;
  for (auto mode : cfg.modes)
    for (double eps : cfg.epsilons) cells.push_back({mode, eps, {}, false});

  const RngStream root(opts.seed);
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      Cell& cell = cells[i];
      const std::string name = cell_name(cell.mode, cell.epsilon);
      try {
        const auto result = run_training(cfg.cell(cell.mode, cell.epsilon), root);
        write_file(opts.out_dir / (name + ".csv"),
                   format_csv(epoch_rows(cell.mode, cell.epsilon, result.records)));
        cell.ok = true;
        std::lock_guard lock(log_mutex);
        log << "done " << name << "\n";
      } catch (const std::exception& e) {
        cell.error = e.what();
        std::lock_guard lock(log_mutex);
        log << "FAILED " << name << ": " << e.what() << "\n";
      }
    }
  };
  const std::size_t jobs = std::clamp<std::size_t>(opts.jobs, 1, cells.size());
  std::vector<std::thread> threads;
  for (std::size_t j = 1; j < jobs; ++j) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();

  std::string manifest = "schema_version " + std::to_string(kSchemaVersion) + "\n";
  bool all_ok = true;
  for (const auto& cell : cells) {
    const std::string name = cell_name(cell.mode, cell.epsilon);
    if (cell.ok) {
      manifest += "ok " + name + ".csv\n";
    } else {
      all_ok = false;
      manifest += "failed " + name + " " + cell.error + "\n";
    }
  }
  write_file(opts.out_dir / "MANIFEST", manifest);

  if (std::any_of(cells.begin(), cells.end(), [](const Cell& c) { return c.ok; })) {
    summarize_directory(opts.out_dir);
  }
  return all_ok ? kExitOk : kExitRuntimeFailure;
}

std::string summarize_directory(const std::filesystem::path& dir) {
  const ExperimentConfig cfg = parse_config_text(read_file(dir / "config.json"));
  std::istringstream manifest(read_file(dir / "MANIFEST"));
  std::string line;
  std::vector<CellSummary> cells;
  while (std::getline(manifest, line)) {
    if (!line.starts_with("ok ")) continue;
    const std::string csv = line.substr(3);
    cells.push_back(summarize_rows(parse_csv(read_file(dir / csv)), cfg.devices));
  }
  if (cells.empty()) throw std::runtime_error("summarize: no completed cells in " + dir.string());
  const std::string text = summary_json(cells);
  write_file(dir / "summary.json", text);
  return text;
}

}  // namespace fedlora
