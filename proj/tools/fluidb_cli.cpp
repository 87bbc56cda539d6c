#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "fluidb/experiment.hpp"

namespace {

using fluidb::io::json;

enum class Kind { kString, kInt, kDouble, kBool, kDoubles, kInts, kStrings };

struct Key {
  const char* name;
  Kind kind;
  const char* help;
};

const std::vector<Key>& config_keys() {
  static const std::vector<Key> keys{
      {"model", Kind::kString, "built-in model name or model .json"},
      {"design", Kind::kString, "design preset or design .json (default: DSE per policy)"},
      {"platform", Kind::kString, "zc706 or zcu104"},
      {"dsp_budget", Kind::kInt, "override the platform MAC-unit budget"},
      {"bram_budget_words", Kind::kInt, "override the platform on-chip word budget"},
      {"tile_rows", Kind::kInts, "DSE grid values of T_R"},
      {"tile_reduction", Kind::kInts, "DSE grid values of T_P"},
      {"tile_cols", Kind::kInts, "DSE grid values of T_C"},
      {"mode", Kind::kString, "batching layout searched by dse"},
      {"weights", Kind::kDoubles, "per-batch-size DSE weights w_1..w_Bmax"},
      {"strict_guards", Kind::kBool, "pad the reduction dimension even when B_P = 1"},
      {"policies", Kind::kStrings, "serving policies"},
      {"rates", Kind::kDoubles, "arrival rates in samples/s"},
      {"slo_ms", Kind::kDouble, "tail-latency SLO in ms"},
      {"slos_ms", Kind::kDoubles, "SLO values for slo-sweep in ms"},
      {"b_max", Kind::kInt, "maximum batch size"},
      {"seeds", Kind::kInts, "random seeds"},
      {"samples", Kind::kInt, "samples per simulation"},
      {"warmup_fraction", Kind::kDouble, "fraction of samples excluded from metrics"},
      {"modes", Kind::kStrings, "batching layouts compared by ablate"},
      {"preempt_cost_ns", Kind::kInt, "NPU time charged per preemption"},
      {"lazy_check_overhead_ns", Kind::kInt, "NPU time per layerwise scheduler invocation"},
      {"threads", Kind::kInt, "worker threads (0: all cores)"},
      {"write_events", Kind::kBool, "write one event log per sweep run"},
      {"output_dir", Kind::kString, "output directory (default: $FLUIDB_OUTPUT_DIR or fluidb-out)"},
  };
  return keys;
}

json convert(const Key& key, const std::vector<std::string>& raw) {
  auto number = [&](const std::string& s) {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw fluidb::ConfigError(std::string("bad number for --") + key.name + ": " + s);
    return v;
  };
  auto integer = [&](const std::string& s) {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used != s.size()) throw fluidb::ConfigError(std::string("bad integer for --") + key.name + ": " + s);
    return v;
  };
  json out = json::array();
  switch (key.kind) {
    case Kind::kString: return raw.front();
    case Kind::kInt: return integer(raw.front());
    case Kind::kDouble: return number(raw.front());
    case Kind::kBool: return true;
    case Kind::kDoubles:
      for (const auto& s : raw) out.push_back(number(s));
      return out;
    case Kind::kInts:
      for (const auto& s : raw) out.push_back(integer(s));
      return out;
    case Kind::kStrings:
      for (const auto& s : raw) out.push_back(s);
      return out;
  }
  return out;
}

std::string flag_name(const char* key) {
  std::string s = key;
  for (char& ch : s) {
    if (ch == '_') ch = '-';
  }
  return "--" + s;
}

struct ConfigOptions {
  std::string config_file;
  std::map<std::string, std::vector<std::string>> raw;
  std::map<std::string, bool> flags;

  void attach(CLI::App* cmd) {
    cmd->add_option("-c,--config", config_file, "experiment config (.json)")->check(CLI::ExistingFile);
    for (const auto& key : config_keys()) {
      if (key.kind == Kind::kBool) {
        cmd->add_flag(flag_name(key.name), flags[key.name], key.help);
        continue;
      }
      auto* opt = cmd->add_option(flag_name(key.name), raw[key.name], key.help);
      if (key.kind == Kind::kDoubles || key.kind == Kind::kInts || key.kind == Kind::kStrings) {
        opt->delimiter(',')->expected(1, -1);
      } else {
        opt->expected(1);
      }
    }
  }

  fluidb::exp::ExperimentConfig resolve() const {
    json j = config_file.empty() ? json::object() : fluidb::io::load_json(config_file);
    for (const auto& key : config_keys()) {
      if (key.kind == Kind::kBool) {
        if (flags.at(key.name)) j[key.name] = true;
      } else if (!raw.at(key.name).empty()) {
        j[key.name] = convert(key, raw.at(key.name));
      }
    }
    return fluidb::exp::config_from_json(j);
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fluid Batching NPU design-space exploration and serving simulator"};
  app.require_subcommand(1);

  std::map<std::string, ConfigOptions> options;
  const std::vector<std::pair<std::string, std::string>> commands{
      {"dse", "search the tile grid and write design.json, fbcb.json, latency_lut.json, dse_report.csv"},
      {"run", "simulate one policy/rate/seed and write its event log and run.csv"},
      {"sweep", "arrival-rate sweep: results.csv and summary.csv"},
      {"slo-sweep", "SLO sweep: slo_results.csv and slo_summary.csv"},
      {"ablate", "static-batch throughput per batching layout: ablation.csv"},
  };
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, help] : commands) {
    subs[name] = app.add_subcommand(name, help);
    options[name].attach(subs[name]);
  }

  std::string arch;
  std::vector<double> exit_rates;
  std::string lower_output;
  auto* lower = app.add_subcommand("lower", "lower a network description to a model .json with placed exits");
  lower->add_option("--arch", arch, "resnet50, inception_v3 or a network .json")->required();
  lower->add_option("--exit-rates", exit_rates, "marginal exit rates, one per exit")->delimiter(',')->required();
  lower->add_option("-o,--output", lower_output, "model .json to write")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (lower->parsed()) {
      fluidb::exp::cmd_lower(arch, exit_rates, lower_output, std::cout);
      return 0;
    }
    for (const auto& [name, sub] : subs) {
      if (!sub->parsed()) continue;
      const auto cfg = options.at(name).resolve();
      if (name == "dse") fluidb::exp::cmd_dse(cfg, std::cout);
      if (name == "run") fluidb::exp::cmd_run(cfg, std::cout);
      if (name == "sweep") fluidb::exp::cmd_sweep(cfg, std::cout);
      if (name == "slo-sweep") fluidb::exp::cmd_slo_sweep(cfg, std::cout);
      if (name == "ablate") fluidb::exp::cmd_ablate(cfg, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
