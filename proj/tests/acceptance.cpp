// Acceptance checks. One PASS/FAIL line per criterion; exit status 1 if any fail.

#include <chrono>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "fluidb/experiment.hpp"
#include "reference_model.hpp"
#include "stats.hpp"

using namespace fluidb;
using namespace std::chrono_literals;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// --- 1 ---------------------------------------------------------------------

Outcome batched_dims_algebra() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  auto pick = [&](std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
  };
  int bad = 0;
  for (int i = 0; i < 1000; ++i) {
    const LayerSpec l{0, pick(0, 1) ? LayerKind::kConv : LayerKind::kFc, pick(1, 4096), pick(1, 4608), pick(1, 2048)};
    const int b = static_cast<int>(pick(1, 16));
    const int br = static_cast<int>(pick(1, b));
    const std::int64_t tp = pick(1, 64);
    const BatchedLayerDims d = fluid_dims(l, b, br, tp);
    const int bp = LayerPolicy{br, Stacking::kOne}.reduction_batch(b);
    bad += br + bp - 1 != b;
    bad += d.useful_macs != static_cast<std::uint64_t>(b) * l.macs();
    bad += d.cols != l.cols;
    const BatchedLayerDims r_uniform = fluid_dims(l, b, b, tp);
    bad += r_uniform.rows_hat != b * l.rows || r_uniform.reduction_hat != l.reduction;
    const BatchedLayerDims p_uniform = fluid_dims(l, b, 1, tp);
    const std::int64_t p_expect = b == 1 ? l.reduction : b * (l.reduction + l.reduction % tp);
    bad += p_uniform.rows_hat != l.rows || p_uniform.reduction_hat != p_expect;
    bad += (br == b) != (d == r_uniform);
    if (b > 1) bad += (br == 1) != (d == p_uniform);
  }
  const double t = seconds_since(t0);
  return {bad == 0 && t < 1.0, fmt("%d mismatches over 1000 tuples in %.3f s", bad, t)};
}

// --- 2 ---------------------------------------------------------------------

Outcome dse_oracle() {
  const auto t0 = Clock::now();
  const ModelSpec m = zoo::synthetic10();
  DseConfig cfg;
  cfg.grid = {{256, 512, 1024}, {4, 7, 8}, {32, 64, 128}};
  cfg.b_max = 4;
  const DseResult r = run_dse(cfg, m);
  std::vector<test::RefLayer> layers;
  for (const auto& l : m.layers) layers.push_back({l.rows, l.reduction, l.cols});
  const auto ref = test::ref_dse(layers, cfg.grid.tile_rows, cfg.grid.tile_reduction, cfg.grid.tile_cols, 4,
                                 {1, 1, 1, 1}, {});
  const bool same = r.best_design.tile_rows == ref.design.tr && r.best_design.tile_reduction == ref.design.tp &&
                    r.best_design.tile_cols == ref.design.tc && r.objective_value == ref.objective;
  const double t = seconds_since(t0);
  return {same && t < 30.0,
          fmt("winner <%lld,%lld,%lld> objective %.9f, enumerator <%lld,%lld,%lld> %.9f, %.2f s",
              static_cast<long long>(r.best_design.tile_rows), static_cast<long long>(r.best_design.tile_reduction),
              static_cast<long long>(r.best_design.tile_cols), r.objective_value, static_cast<long long>(ref.design.tr),
              static_cast<long long>(ref.design.tp), static_cast<long long>(ref.design.tc), ref.objective, t)};
}

// --- 3 ---------------------------------------------------------------------

Outcome fluid_dominance() {
  const auto t0 = Clock::now();
  const ModelSpec m = zoo::resnet50_4exit();
  const NpuDesign d = presets::zc706_resnet50();
  bool dominates = true;
  int strict = 0;
  double best_gain = 0.0;
  for (int b = 1; b <= 8; ++b) {
    const double fluid = mode_workload_throughput(d, m, b, BatchingMode::kFluid);
    const double r = mode_workload_throughput(d, m, b, BatchingMode::kRUniform);
    const double p = mode_workload_throughput(d, m, b, BatchingMode::kPUniform);
    dominates = dominates && fluid >= r && fluid >= p;
    if (fluid > r && fluid > p) ++strict;
    best_gain = std::max(best_gain, fluid / std::max(r, p));
  }
  const double t = seconds_since(t0);
  return {dominates && strict > 0 && t < 10.0,
          fmt("fluid >= both uniform layouts for b=1..8, strictly better at %d sizes, up to %.2fx, %.2f s", strict,
              best_gain, t)};
}

// --- 4 ---------------------------------------------------------------------

Outcome dsp_occupancy() {
  const std::filesystem::path dir = std::filesystem::path(FLUIDB_SOURCE_DIR) / "designs";
  const std::vector<std::pair<std::string, double>> expected{
      {"zc706-resnet50", 99.56}, {"zcu104-resnet50", 99.53}, {"zc706-inception_v3", 100.0},
      {"zcu104-inception_v3", 99.53}};
  bool ok = true;
  std::string detail;
  for (const auto& [name, pct] : expected) {
    const NpuDesign d = exp::load_design((dir / (name + ".json")).string());
    const double occ = 100.0 * static_cast<double>(d.dsp_usage()) / static_cast<double>(d.dsp_budget);
    ok = ok && std::abs(occ - pct) <= 0.02 + 1e-9 && d == presets::by_name(name);
    detail += fmt("%s %lld/%lld=%.3f%% ", name.c_str(), static_cast<long long>(d.dsp_usage()),
                  static_cast<long long>(d.dsp_budget), occ);
  }
  return {ok, detail};
}

// --- 5 ---------------------------------------------------------------------

std::size_t checks_for_one_inference(const ServingSetup& s, const std::string& policy) {
  ArrivalTrace t;
  t.arrival_times = {0.0};
  t.sample_ids = {0};
  t.assigned_exits = {s.model.num_exits() - 1};
  const EventLog log = run_simulation(s, parse_policy(policy), t, {1s, s.b_max});
  return static_cast<std::size_t>(std::count_if(log.begin(), log.end(), [](const LogRecord& r) { return r.kind == LogKind::kCheck; }));
}

Outcome invocation_ratio() {
  const ModelSpec m = zoo::chain50();
  const NpuDesign d = zc706().design(512, 8, 64);
  const std::size_t layerwise = checks_for_one_inference(make_serving_setup(d, m, BatchingMode::kRUniform, 8), "lazy");
  const std::size_t exit_level = checks_for_one_inference(make_serving_setup(d, m, BatchingMode::kFluid, 8), "fluidb");
  const double ratio = exit_level == 0 ? 0.0 : static_cast<double>(layerwise) / static_cast<double>(exit_level);
  const bool agrees = static_cast<int>(layerwise) == scheduler_invocations_per_inference(m, CheckGranularity::kLayerwise) &&
                      static_cast<int>(exit_level) == scheduler_invocations_per_inference(m, CheckGranularity::kExitLevel);
  return {agrees && std::abs(ratio - 16.6) <= 0.1,
          fmt("%zu layerwise / %zu exit-level checks = %.2fx", layerwise, exit_level, ratio)};
}

// --- 6 ---------------------------------------------------------------------

Outcome preemption_soundness() {
  const ModelSpec m = zoo::synthetic10();
  const ServingSetup s = make_serving_setup(zc706().design(512, 8, 64), m, BatchingMode::kFluid, 8);
  const double sat = exp::single_sample_capacity(make_serving_setup(s.design, m, BatchingMode::kRUniform, 1));
  const Nanos full = s.exit_lut.span(0, m.num_exits() - 1, 1);
  std::size_t preempts = 0;
  std::size_t unsound = 0;
  for (int seed = 1; seed <= 100; ++seed) {
    const double frac = 0.1 + 1.1 * static_cast<double>(seed - 1) / 99.0;
    const Nanos slo = (2 + seed % 4) * full;
    const ArrivalTrace trace = exp::make_trace(m, frac * sat, 1000, static_cast<std::uint64_t>(seed));
    Simulator sim(m, trace);
    PreemptiveScheduler policy(exit_aware_config(m, s.exit_lut, {slo, 8}));
    const EventLog log = sim.run(policy);
    for (const auto& r : log) {
      if (r.kind != LogKind::kPreempt) continue;
      ++preempts;
      const Request& oldest = sim.requests().at(static_cast<std::size_t>(r.sample));
      if (oldest.completion_time - oldest.arrival_time > slo) ++unsound;
    }
  }
  return {unsound == 0 && preempts > 0,
          fmt("%zu preemptions over 100 runs (0.1-1.2x saturation), %zu left the oldest sample past the SLO", preempts,
              unsound)};
}

// --- 7 ---------------------------------------------------------------------

Outcome fbcb_sizing() {
  const std::uint64_t bits = fbcb_size_bits(53, 8);
  const ModelSpec m = zoo::resnet50_4exit();
  const NpuDesign d = presets::zc706_resnet50();
  const LatencyLut lut = build_latency_lut(d, m, build_fbcb(d, m, 8), 8);
  return {bits == 2120 && lut.size() == 32, fmt("%llu bits, %zu LUT entries", static_cast<unsigned long long>(bits), lut.size())};
}

// --- 8 ---------------------------------------------------------------------

struct Trends {
  std::map<std::string, ServingSetup> setups;
  double saturation = 0.0;
  Nanos full_serial{0};

  Trends() {
    exp::ExperimentConfig c;
    c.model = "resnet50";
    c.policies = all_policy_names();
    setups = exp::build_setups(c, zoo::resnet50_4exit());
    const ServingSetup& serial = setups.at("serial");
    saturation = exp::single_sample_capacity(serial);
    full_serial = serial.exit_lut.span(0, serial.model.num_exits() - 1, 1);
  }

  MetricsReport mean(const std::string& policy, double frac, Nanos slo) const {
    const ServingSetup& s = setups.at(policy);
    MetricsReport out;
    const std::vector<std::uint64_t> seeds{1, 2, 3};
    for (auto seed : seeds) {
      const ArrivalTrace t = exp::make_trace(s.model, frac * saturation, 2000, seed);
      const EventLog log = run_simulation(s, parse_policy(policy), t, {slo, 8});
      const MetricsReport m = compute_metrics(log, slo, peak_ops_per_s(s.design));
      const double w = 1.0 / static_cast<double>(seeds.size());
      out.avg_latency += w * m.avg_latency;
      out.p99_latency += w * m.p99_latency;
      out.violation_rate += w * m.violation_rate;
      out.utilisation += w * m.utilisation;
      out.offered_utilisation += w * m.offered_utilisation;
    }
    return out;
  }
};

Outcome trend_low_rate(const Trends& tr) {
  const auto t0 = Clock::now();
  const MetricsReport f = tr.mean("fluidb", 0.3, 400ms);
  const MetricsReport s = tr.mean("serial", 0.3, 400ms);
  const double t = seconds_since(t0);
  const bool ok = f.avg_latency <= 1.15 * s.avg_latency && f.utilisation - s.utilisation >= 0.10 && t < 120.0;
  return {ok, fmt("0.3x saturation: avg %.1f vs %.1f ms, utilisation %.3f vs %.3f (busy time), %.1f s",
                  f.avg_latency * 1e3, s.avg_latency * 1e3, f.utilisation, s.utilisation, t)};
}

Outcome trend_high_rate(const Trends& tr) {
  const auto t0 = Clock::now();
  const MetricsReport f = tr.mean("fluidb", 0.9, 400ms);
  bool ok = true;
  double best_other = 1e9;
  for (const auto& name : all_policy_names()) {
    if (parse_policy(name).kind != PolicyKind::kAdaptB) continue;
    const MetricsReport a = tr.mean(name, 0.9, 400ms);
    ok = ok && f.p99_latency <= a.p99_latency;
    best_other = std::min(best_other, a.p99_latency);
  }
  const double t = seconds_since(t0);
  return {ok && t < 120.0, fmt("0.9x saturation: p99 %.1f ms vs best AdaptB %.1f ms, %.1f s", f.p99_latency * 1e3,
                               best_other * 1e3, t)};
}

Outcome trend_tight_slo(const Trends& tr) {
  const auto t0 = Clock::now();
  const Nanos slo = 3 * tr.full_serial;
  bool ok = true;
  std::string detail = fmt("SLO %.0f ms:", to_millis(slo));
  for (double frac : {0.7, 0.9}) {
    const MetricsReport f = tr.mean("fluidb", frac, slo);
    const MetricsReport l = tr.mean("lazy", frac, slo);
    ok = ok && f.avg_latency < l.avg_latency && f.violation_rate < l.violation_rate;
    detail += fmt(" %.1fx avg %.1f vs %.1f ms, violations %.4f vs %.4f;", frac, f.avg_latency * 1e3,
                  l.avg_latency * 1e3, f.violation_rate, l.violation_rate);
  }
  const double t = seconds_since(t0);
  return {ok && t < 120.0, detail + fmt(" %.1f s", t)};
}

Outcome serving_trends() {
  const Trends tr;
  const Outcome a = trend_low_rate(tr);
  const Outcome b = trend_high_rate(tr);
  const Outcome c = trend_tight_slo(tr);
  return {a.pass && b.pass && c.pass, "(a) " + std::string(a.pass ? "ok " : "FAIL ") + a.detail + " | (b) " +
                                          (b.pass ? "ok " : "FAIL ") + b.detail + " | (c) " + (c.pass ? "ok " : "FAIL ") +
                                          c.detail};
}

// --- 9 ---------------------------------------------------------------------

Outcome determinism() {
  std::size_t runs = 0;
  std::size_t differ = 0;
  for (const auto& name : all_policy_names()) {
    for (std::uint64_t seed : {1, 2}) {
      auto once = [&] {
        const ModelSpec m = zoo::synthetic10();
        const PolicySpec p = parse_policy(name);
        DseConfig cfg;
        cfg.grid = {{256, 512}, {4, 8}, {64, 128}};
        cfg.b_max = 4;
        cfg.mode = serving_mode(p);
        cfg.weights = design_weights(p, 4);
        const ServingSetup s = make_serving_setup(run_dse(cfg, m).best_design, m, cfg.mode, 4);
        return to_jsonl(run_simulation(s, p, exp::make_trace(m, 250.0, 800, seed), {30ms, 4}));
      };
      ++runs;
      differ += once() != once();
    }
  }
  return {differ == 0, fmt("%zu of %zu repeated runs produced different event logs", differ, runs)};
}

// --- 10 --------------------------------------------------------------------

Outcome poisson_statistics() {
  bool ok = true;
  std::string detail;
  for (double rate : {5.0, 25.0, 60.0}) {
    const std::size_t n = 20000;
    const ArrivalTrace t = gen_poisson_arrivals(rate, n, 100 + static_cast<std::uint64_t>(rate));
    const auto gaps = test::interarrivals(t.arrival_times);
    double mean = 0.0;
    for (double g : gaps) mean += g;
    mean /= static_cast<double>(gaps.size());
    const double se = (1.0 / rate) / std::sqrt(static_cast<double>(gaps.size()));
    const double z = (mean - 1.0 / rate) / se;
    const double d = test::ks_statistic_exponential(gaps, rate);
    const double crit = test::ks_critical_001(gaps.size());
    ok = ok && std::abs(z) <= 3.0 && d < crit;
    detail += fmt("rate %g: z=%.2f KS D=%.4f (crit %.4f); ", rate, z, d, crit);
  }
  return {ok, detail};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"batched-dims-algebra", batched_dims_algebra},
      {"dse-oracle", dse_oracle},
      {"fluid-dominance", fluid_dominance},
      {"dsp-occupancy", dsp_occupancy},
      {"invocation-ratio", invocation_ratio},
      {"preemption-soundness", preemption_soundness},
      {"fbcb-sizing", fbcb_sizing},
      {"serving-trends", serving_trends},
      {"determinism", determinism},
      {"poisson-statistics", poisson_statistics},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
