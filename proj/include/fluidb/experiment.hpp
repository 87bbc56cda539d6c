#pragma once

#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "fluidb/dse.hpp"
#include "fluidb/io.hpp"
#include "fluidb/simulator.hpp"
#include "fluidb/zoo.hpp"

namespace fluidb::exp {

namespace fs = std::filesystem;
using io::json;

inline constexpr const char* kOutputDirEnv = "FLUIDB_OUTPUT_DIR";

inline std::string default_output_dir() {
  const char* env = std::getenv(kOutputDirEnv);
  return env != nullptr && *env != '\0' ? env : "fluidb-out";
}

// Flat experiment description. Every key has a command-line flag of the same
// name with '_' written as '-'.
struct ExperimentConfig {
  std::string model = "resnet50";  // built-in name or path to a model .json
  std::string design;              // preset name or design .json; empty runs the DSE per policy
  std::string platform = "zc706";
  std::optional<std::int64_t> dsp_budget;
  std::optional<std::int64_t> bram_budget_words;
  std::vector<std::int64_t> tile_rows = TileGrid{}.tile_rows;
  std::vector<std::int64_t> tile_reduction = TileGrid{}.tile_reduction;
  std::vector<std::int64_t> tile_cols = TileGrid{}.tile_cols;
  std::string mode = "fluid";      // batching layout for the dse subcommand
  std::vector<double> weights;     // w_b for the dse subcommand; empty means all ones
  bool strict_guards = false;      // pad the reduction dimension even for B_P = 1
  std::vector<std::string> policies{"fluidb", "serial"};
  std::vector<double> rates{5, 10, 15, 20, 25};
  double slo_ms = 400.0;
  std::vector<double> slos_ms{100, 200, 300, 400, 500, 600};
  int b_max = 8;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::size_t samples = 2000;
  double warmup_fraction = 0.05;
  std::vector<std::string> modes{"fluid", "r-uniform", "p-uniform"};
  std::int64_t preempt_cost_ns = 0;
  std::int64_t lazy_check_overhead_ns = 0;
  unsigned threads = 0;
  bool write_events = false;
  std::string output_dir = default_output_dir();

  GuardPadding guards() const { return strict_guards ? GuardPadding::kAlways : GuardPadding::kMultiSampleOnly; }

  void validate() const {
    if (b_max < 1) throw ConfigError("b_max must be at least 1");
    if (samples == 0) throw ConfigError("samples must be at least 1");
    if (!(slo_ms > 0.0)) throw ConfigError("slo_ms must be positive");
    for (double r : rates) {
      if (!(r > 0.0)) throw ConfigError("rates must be positive");
    }
    for (double s : slos_ms) {
      if (!(s > 0.0)) throw ConfigError("slos_ms must be positive");
    }
    if (warmup_fraction < 0.0 || warmup_fraction >= 1.0) throw ConfigError("warmup_fraction must be in [0, 1)");
    for (const auto& p : policies) parse_policy(p);
    for (const auto& m : modes) batching_mode_from_string(m);
    batching_mode_from_string(mode);
    if (model.ends_with(".json") && !fs::exists(model)) throw ConfigError("model file '" + model + "' does not exist");
    if (design.ends_with(".json") && !fs::exists(design)) throw ConfigError("design file '" + design + "' does not exist");
  }
};

inline json to_json(const ExperimentConfig& c) {
  json j{{"model", c.model},
         {"design", c.design},
         {"platform", c.platform},
         {"tile_rows", c.tile_rows},
         {"tile_reduction", c.tile_reduction},
         {"tile_cols", c.tile_cols},
         {"mode", c.mode},
         {"weights", c.weights},
         {"strict_guards", c.strict_guards},
         {"policies", c.policies},
         {"rates", c.rates},
         {"slo_ms", c.slo_ms},
         {"slos_ms", c.slos_ms},
         {"b_max", c.b_max},
         {"seeds", c.seeds},
         {"samples", c.samples},
         {"warmup_fraction", c.warmup_fraction},
         {"modes", c.modes},
         {"preempt_cost_ns", c.preempt_cost_ns},
         {"lazy_check_overhead_ns", c.lazy_check_overhead_ns},
         {"threads", c.threads},
         {"write_events", c.write_events},
         {"output_dir", c.output_dir}};
  if (c.dsp_budget) j["dsp_budget"] = *c.dsp_budget;
  if (c.bram_budget_words) j["bram_budget_words"] = *c.bram_budget_words;
  return j;
}

inline ExperimentConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("experiment config must be an object");
  ExperimentConfig c;
  const std::set<std::string> known = [&] {
    std::set<std::string> keys;
    const json defaults = to_json(c);
    for (const auto& [k, v] : defaults.items()) keys.insert(k);
    keys.insert("dsp_budget");
    keys.insert("bram_budget_words");
    return keys;
  }();
  for (const auto& [k, v] : j.items()) {
    if (known.count(k) == 0) throw ConfigError("unknown config key '" + k + "'");
  }
  auto take = [&](const char* key, auto& field) {
    if (j.contains(key)) field = io::get_field<std::decay_t<decltype(field)>>(j, key);
  };
  take("model", c.model);
  take("design", c.design);
  take("platform", c.platform);
  if (j.contains("dsp_budget")) c.dsp_budget = io::get_field<std::int64_t>(j, "dsp_budget");
  if (j.contains("bram_budget_words")) c.bram_budget_words = io::get_field<std::int64_t>(j, "bram_budget_words");
  take("tile_rows", c.tile_rows);
  take("tile_reduction", c.tile_reduction);
  take("tile_cols", c.tile_cols);
  take("mode", c.mode);
  take("weights", c.weights);
  take("strict_guards", c.strict_guards);
  take("policies", c.policies);
  take("rates", c.rates);
  take("slo_ms", c.slo_ms);
  take("slos_ms", c.slos_ms);
  take("b_max", c.b_max);
  take("seeds", c.seeds);
  take("samples", c.samples);
  take("warmup_fraction", c.warmup_fraction);
  take("modes", c.modes);
  take("preempt_cost_ns", c.preempt_cost_ns);
  take("lazy_check_overhead_ns", c.lazy_check_overhead_ns);
  take("threads", c.threads);
  take("write_events", c.write_events);
  take("output_dir", c.output_dir);
  c.validate();
  return c;
}

inline ModelSpec load_model(const std::string& ref) {
  if (ref.ends_with(".json")) return io::model_from_json(io::load_json(ref));
  return zoo::model_by_name(ref);
}

inline NpuDesign load_design(const std::string& ref) {
  if (ref.ends_with(".json")) return io::design_from_json(io::load_json(ref));
  return presets::by_name(ref);
}

inline Platform config_platform(const ExperimentConfig& c) {
  Platform p = platform_by_name(c.platform);
  if (c.dsp_budget) p.dsp_budget = *c.dsp_budget;
  if (c.bram_budget_words) p.bram_budget_words = *c.bram_budget_words;
  return p;
}

inline DseConfig dse_config(const ExperimentConfig& c, BatchingMode mode, std::vector<double> weights) {
  DseConfig d;
  d.grid = {c.tile_rows, c.tile_reduction, c.tile_cols};
  d.platform = config_platform(c);
  d.b_max = c.b_max;
  d.weights = std::move(weights);
  d.mode = mode;
  d.guards = c.guards();
  d.threads = c.threads;
  return d;
}

// NPU tables for every requested policy. Without a fixed design each policy
// gets the DSE winner for its own batching layout and batch-size weighting.
inline std::map<std::string, ServingSetup> build_setups(const ExperimentConfig& c, const ModelSpec& model) {
  std::map<std::string, ServingSetup> out;
  std::map<std::pair<BatchingMode, std::vector<double>>, NpuDesign> searched;
  for (const auto& name : c.policies) {
    if (out.count(name) != 0) continue;
    const PolicySpec p = parse_policy(name);
    const BatchingMode mode = serving_mode(p);
    NpuDesign design;
    if (!c.design.empty()) {
      design = load_design(c.design);
    } else {
      const auto key = std::make_pair(mode, design_weights(p, c.b_max));
      auto it = searched.find(key);
      if (it == searched.end()) it = searched.emplace(key, run_dse(dse_config(c, mode, key.second), model).best_design).first;
      design = it->second;
    }
    out.emplace(name, make_serving_setup(design, model, mode, c.b_max, c.guards()));
  }
  return out;
}

// Highest sustainable rate of one-at-a-time serving: 1 / E[latency to the
// assigned exit] at batch size 1.
inline double single_sample_capacity(const ServingSetup& s) {
  double expected = 0.0;
  for (int e = 0; e < s.model.num_exits(); ++e) {
    expected += s.model.exits.rates[static_cast<std::size_t>(e)] * to_seconds(s.exit_lut.span(0, e, 1));
  }
  return 1.0 / expected;
}

struct GridPoint {
  std::string policy;
  double rate = 0.0;
  double slo_ms = 0.0;
  std::uint64_t seed = 0;
};

struct RunResult {
  GridPoint point;
  MetricsReport metrics;
};

inline ArrivalTrace make_trace(const ModelSpec& model, double rate, std::size_t samples, std::uint64_t seed) {
  return assign_exits(gen_poisson_arrivals(rate, samples, seed), model.exits, seed);
}

inline std::string run_label(const GridPoint& g) {
  return g.policy + "_rate" + io::csv_number(g.rate) + "_slo" + io::csv_number(g.slo_ms) + "_seed" +
         std::to_string(g.seed);
}

inline RunResult run_point(const ExperimentConfig& c, const ServingSetup& setup, const GridPoint& g,
                           EventLog* keep_log = nullptr) {
  const SloConfig slo{from_millis(g.slo_ms), c.b_max};
  const SimOptions opts{Nanos{c.preempt_cost_ns}, Nanos{c.lazy_check_overhead_ns}};
  EventLog log = run_simulation(setup, parse_policy(g.policy), make_trace(setup.model, g.rate, c.samples, g.seed), slo, opts);
  RunResult r{g, compute_metrics(log, slo.slo, peak_ops_per_s(setup.design), c.warmup_fraction)};
  if (keep_log != nullptr) *keep_log = std::move(log);
  return r;
}

// Grid order: rate, then SLO, then policy, then seed.
inline std::vector<GridPoint> make_grid(const ExperimentConfig& c, const std::vector<double>& slos_ms) {
  std::vector<GridPoint> grid;
  for (double rate : c.rates) {
    for (double slo : slos_ms) {
      for (const auto& policy : c.policies) {
        for (auto seed : c.seeds) grid.push_back({policy, rate, slo, seed});
      }
    }
  }
  return grid;
}

inline const std::vector<std::string>& metric_columns() {
  static const std::vector<std::string> cols{"samples",        "processing_rate", "avg_latency_ms",
                                             "p99_latency_ms", "violation_rate",  "utilisation",
                                             "offered_utilisation", "preemptions"};
  return cols;
}

inline std::vector<double> metric_values(const MetricsReport& m) {
  return {static_cast<double>(m.samples), m.processing_rate, m.avg_latency * 1e3, m.p99_latency * 1e3,
          m.violation_rate, m.utilisation, m.offered_utilisation, static_cast<double>(m.preemptions)};
}

inline std::string results_csv(const std::vector<RunResult>& rows) {
  std::vector<std::string> header{"grid_index", "policy", "rate", "slo_ms", "seed"};
  header.insert(header.end(), metric_columns().begin(), metric_columns().end());
  io::CsvWriter csv(header);
  std::size_t index = 0;
  for (const auto& r : rows) {
    std::vector<std::string> cells{std::to_string(index++), r.point.policy, io::csv_number(r.point.rate),
                                   io::csv_number(r.point.slo_ms), std::to_string(r.point.seed)};
    for (double v : metric_values(r.metrics)) cells.push_back(io::csv_number(v));
    csv.row(cells);
  }
  return csv.str();
}

// Arithmetic mean over seeds of every metric column, one row per
// (rate, slo, policy) in first-appearance order.
inline std::string summary_csv(const std::vector<RunResult>& rows) {
  std::vector<std::string> header{"policy", "rate", "slo_ms", "seeds"};
  header.insert(header.end(), metric_columns().begin(), metric_columns().end());
  io::CsvWriter csv(header);
  using Key = std::tuple<std::string, double, double>;
  std::vector<Key> order;
  std::map<Key, std::vector<std::vector<double>>> groups;
  for (const auto& r : rows) {
    const Key k{r.point.policy, r.point.rate, r.point.slo_ms};
    if (groups.count(k) == 0) order.push_back(k);
    groups[k].push_back(metric_values(r.metrics));
  }
  for (const auto& k : order) {
    const auto& g = groups.at(k);
    std::vector<std::string> cells{std::get<0>(k), io::csv_number(std::get<1>(k)), io::csv_number(std::get<2>(k)),
                                   std::to_string(g.size())};
    for (std::size_t col = 0; col < metric_columns().size(); ++col) {
      double sum = 0.0;
      for (const auto& v : g) sum += v[col];
      cells.push_back(io::csv_number(sum / static_cast<double>(g.size())));
    }
    csv.row(cells);
  }
  return csv.str();
}

// Runs every grid point on a bounded pool and writes results in grid order.
// A failing run aborts the sweep after the completed rows are saved.
inline std::vector<RunResult> run_grid(const ExperimentConfig& c, const std::vector<GridPoint>& grid,
                                       const std::string& prefix, std::ostream& out) {
  const ModelSpec model = load_model(c.model);
  const auto setups = build_setups(c, model);
  std::vector<std::optional<RunResult>> results(grid.size());
  std::vector<std::string> failures(grid.size());
  const fs::path dir = c.output_dir;
  parallel_for(grid.size(), c.threads, [&](std::size_t i) {
    try {
      EventLog log;
      results[i] = run_point(c, setups.at(grid[i].policy), grid[i], c.write_events ? &log : nullptr);
      if (c.write_events) io::write_file(dir / "events" / (run_label(grid[i]) + ".log"), to_jsonl(log));
    } catch (const std::exception& e) {
      failures[i] = e.what();
    }
  });
  std::vector<RunResult> done;
  std::string first_failure;
  std::size_t failed = 0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (results[i]) {
      done.push_back(*results[i]);
    } else {
      ++failed;
      if (first_failure.empty()) first_failure = run_label(grid[i]) + ": " + failures[i];
    }
  }
  io::write_file(dir / (prefix + "results.csv"), results_csv(done));
  if (failed != 0) {
    throw Error(std::to_string(failed) + " of " + std::to_string(grid.size()) + " runs failed (first: " +
                first_failure + "); partial results written to " + (dir / (prefix + "results.csv")).string());
  }
  io::write_file(dir / (prefix + "summary.csv"), summary_csv(done));
  io::write_file(dir / (prefix + "config.json"), io::dump(to_json(c)));
  out << "wrote " << done.size() << " runs to " << (dir / (prefix + "results.csv")).string() << "\n";
  return done;
}

// --- subcommands ------------------------------------------------------------

inline DseResult cmd_dse(const ExperimentConfig& c, std::ostream& out) {
  const ModelSpec model = load_model(c.model);
  const DseResult r = run_dse(dse_config(c, batching_mode_from_string(c.mode), c.weights), model);
  const fs::path dir = c.output_dir;
  io::write_file(dir / "design.json", io::dump(io::to_json(r.best_design)));
  io::write_file(dir / "fbcb.json", io::dump(io::to_json(r.fbcb)));
  io::write_file(dir / "latency_lut.json",
                 io::dump(io::to_json(build_latency_lut(r.best_design, model, r.fbcb, c.b_max, c.guards()))));

  std::vector<std::string> header{"t_r", "t_p", "t_c", "dsp", "buffer_words", "objective"};
  for (int b = 1; b <= c.b_max; ++b) header.push_back("gops_b" + std::to_string(b));
  io::CsvWriter csv(header);
  for (const auto& cand : r.candidates) {
    std::vector<std::string> cells{std::to_string(cand.design.tile_rows), std::to_string(cand.design.tile_reduction),
                                   std::to_string(cand.design.tile_cols), std::to_string(cand.design.dsp_usage()),
                                   std::to_string(cand.design.buffer_words()), io::csv_number(cand.objective)};
    for (double t : cand.per_batch_throughput) cells.push_back(io::csv_number(t));
    csv.row(cells);
  }
  io::write_file(dir / "dse_report.csv", csv.str());
  out << "best <" << r.best_design.tile_rows << "," << r.best_design.tile_reduction << "," << r.best_design.tile_cols
      << "> objective " << io::csv_number(r.objective_value) << " over " << r.candidates.size()
      << " feasible designs\n";
  return r;
}

// One simulation: the first policy, rate and seed of the config.
inline RunResult cmd_run(const ExperimentConfig& c, std::ostream& out) {
  if (c.policies.empty() || c.rates.empty() || c.seeds.empty()) throw ConfigError("run needs a policy, a rate and a seed");
  ExperimentConfig one = c;
  one.policies.resize(1);
  const ModelSpec model = load_model(c.model);
  const auto setups = build_setups(one, model);
  const ServingSetup& setup = setups.at(one.policies.front());
  const GridPoint g{one.policies.front(), c.rates.front(), c.slo_ms, c.seeds.front()};
  EventLog log;
  RunResult r = run_point(c, setup, g, &log);
  const fs::path dir = c.output_dir;
  io::write_file(dir / "events" / (run_label(g) + ".log"), to_jsonl(log));
  io::write_file(dir / "run.csv", results_csv({r}));
  out << g.policy << " on <" << setup.design.tile_rows << "," << setup.design.tile_reduction << ","
      << setup.design.tile_cols << ">: rate " << io::csv_number(r.metrics.processing_rate) << "/s, avg "
      << io::csv_number(r.metrics.avg_latency * 1e3) << " ms, p99 " << io::csv_number(r.metrics.p99_latency * 1e3)
      << " ms, violations " << io::csv_number(r.metrics.violation_rate) << ", utilisation "
      << io::csv_number(r.metrics.utilisation) << "\n";
  return r;
}

inline std::vector<RunResult> cmd_sweep(const ExperimentConfig& c, std::ostream& out) {
  return run_grid(c, make_grid(c, {c.slo_ms}), "", out);
}

inline std::vector<RunResult> cmd_slo_sweep(const ExperimentConfig& c, std::ostream& out) {
  return run_grid(c, make_grid(c, c.slos_ms), "slo_", out);
}

struct AblationRow {
  std::string mode;
  int batch = 0;
  double gops = 0.0;
  double latency_ms = 0.0;
  double peak_gops = 0.0;
};

// Whole-network throughput without exits for static batch sizes 1..B_max.
inline std::vector<AblationRow> cmd_ablate(const ExperimentConfig& c, std::ostream& out) {
  const ModelSpec model = load_model(c.model);
  const NpuDesign design = c.design.empty()
                               ? run_dse(dse_config(c, BatchingMode::kFluid, {}), model).best_design
                               : load_design(c.design);
  std::vector<AblationRow> rows;
  io::CsvWriter csv({"mode", "batch", "gops", "latency_ms", "peak_gops"});
  for (const auto& name : c.modes) {
    const BatchingMode mode = batching_mode_from_string(name);
    for (int b = 1; b <= c.b_max; ++b) {
      double latency = 0.0;
      for (const auto& layer : model.layers) latency += mode_layer_latency(design, layer, b, mode, c.guards());
      AblationRow row{name, b, mode_workload_throughput(design, model, b, mode, c.guards()), latency * 1e3,
                      peak_performance(design)};
      csv.row({row.mode, std::to_string(row.batch), io::csv_number(row.gops), io::csv_number(row.latency_ms),
               io::csv_number(row.peak_gops)});
      rows.push_back(row);
    }
  }
  const fs::path dir = c.output_dir;
  io::write_file(dir / "ablation.csv", csv.str());
  io::write_file(dir / "design.json", io::dump(io::to_json(design)));
  out << "wrote " << rows.size() << " rows to " << (dir / "ablation.csv").string() << "\n";
  return rows;
}

// Lowers a network description to the GEMM layer table and places exits.
inline ModelSpec cmd_lower(const std::string& arch, const std::vector<double>& rates, const std::string& output,
                           std::ostream& out) {
  const NetDescriptor net = arch.ends_with(".json") ? io::descriptor_from_json(io::load_json(arch))
                                                    : zoo::descriptor_by_name(arch);
  auto layers = conv_net_to_gemm(net);
  ModelSpec model;
  model.name = net.name;
  if (rates.size() < 2) throw ConfigError("need at least two exit rates");
  const auto placement = place_exits_equidistant(layers, static_cast<int>(rates.size()) - 1);
  for (const auto& w : placement.warnings) out << "warning: " << w << "\n";
  if (placement.layer_indices.size() != rates.size()) {
    throw ConfigError("only " + std::to_string(placement.layer_indices.size()) + " exits fit; give that many rates");
  }
  model.layers = std::move(layers);
  model.exits = {placement.layer_indices, rates};
  model.validate();
  io::write_file(output, io::dump(io::to_json(model)));
  out << model.name << ": " << model.num_layers() << " GEMM layers, " << model.total_macs() << " MACs, exits after";
  for (int e : model.exits.layer_indices) out << " " << e;
  out << "\n";
  return model;
}

}  // namespace fluidb::exp
