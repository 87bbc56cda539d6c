#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "fluidb/common.hpp"
#include "fluidb/npu_model.hpp"
#include "fluidb/workload.hpp"

namespace fluidb {

// How the batch is laid out across the GEMM dimensions.
enum class BatchingMode {
  kFluid,         // per-layer B_R and PE stacking
  kFluidNoStack,  // per-layer B_R, k fixed to 1
  kRUniform,      // every layer appends samples along R
  kPUniform,      // every layer appends samples along P
  kFcOnly,        // FC layers R-batched, convolutions run sample by sample
};

inline const char* to_string(BatchingMode m) {
  switch (m) {
    case BatchingMode::kFluid: return "fluid";
    case BatchingMode::kFluidNoStack: return "fluid-nostack";
    case BatchingMode::kRUniform: return "r-uniform";
    case BatchingMode::kPUniform: return "p-uniform";
    case BatchingMode::kFcOnly: return "fc-only";
  }
  return "?";
}

inline BatchingMode batching_mode_from_string(const std::string& s) {
  for (auto m : {BatchingMode::kFluid, BatchingMode::kFluidNoStack, BatchingMode::kRUniform,
                 BatchingMode::kPUniform, BatchingMode::kFcOnly}) {
    if (s == to_string(m)) return m;
  }
  throw InvalidArgument("unknown batching mode '" + s + "'");
}

// Best (B_R, k) for one layer at batch b. Ties prefer smaller B_R, then k=1,
// then the smaller stacking factor.
inline LayerPolicy optimise_layer_policy(const NpuDesign& d, const LayerSpec& layer, int batch,
                                         BatchingMode mode = BatchingMode::kFluid,
                                         GuardPadding guards = GuardPadding::kMultiSampleOnly) {
  if (batch < 1) throw InvalidArgument("batch size must be at least 1");
  switch (mode) {
    case BatchingMode::kRUniform:
    case BatchingMode::kFcOnly: return {batch, Stacking::kOne};
    case BatchingMode::kPUniform: return {1, Stacking::kOne};
    default: break;
  }
  static constexpr Stacking kPreference[] = {Stacking::kOne, Stacking::kHalf, Stacking::kTwo};
  LayerPolicy best{1, Stacking::kOne};
  double best_latency = policy_layer_latency(d, layer, batch, best, guards);
  for (int row_batch = 1; row_batch <= batch; ++row_batch) {
    for (Stacking k : kPreference) {
      if (mode == BatchingMode::kFluidNoStack && k != Stacking::kOne) continue;
      if (!stacking_supported(d, k)) continue;
      const LayerPolicy candidate{row_batch, k};
      const double t = policy_layer_latency(d, layer, batch, candidate, guards);
      if (t < best_latency) {
        best_latency = t;
        best = candidate;
      }
    }
  }
  return best;
}

// Latency of one layer at batch b under a batching mode and its optimal policy.
inline double mode_layer_latency(const NpuDesign& d, const LayerSpec& layer, int batch, BatchingMode mode,
                                 GuardPadding guards = GuardPadding::kMultiSampleOnly) {
  if (mode == BatchingMode::kFcOnly && layer.kind == LayerKind::kConv) {
    return static_cast<double>(batch) * policy_layer_latency(d, layer, 1, {1, Stacking::kOne}, guards);
  }
  return policy_layer_latency(d, layer, batch, optimise_layer_policy(d, layer, batch, mode, guards), guards);
}

inline Fbcb build_fbcb(const NpuDesign& d, const ModelSpec& model, int b_max, BatchingMode mode = BatchingMode::kFluid,
                       GuardPadding guards = GuardPadding::kMultiSampleOnly) {
  Fbcb fbcb(model.num_layers(), b_max);
  for (int l = 0; l < model.num_layers(); ++l) {
    for (int b = 1; b <= b_max; ++b) {
      fbcb.set(l, b, optimise_layer_policy(d, model.layers[static_cast<std::size_t>(l)], b, mode, guards));
    }
  }
  return fbcb;
}

// Useful GOp/s over the whole network at batch b with the given per-layer
// policies (one per layer).
inline double workload_throughput(const NpuDesign& d, const ModelSpec& model, int batch,
                                  const std::vector<LayerPolicy>& policies,
                                  GuardPadding guards = GuardPadding::kMultiSampleOnly) {
  if (policies.size() != model.layers.size()) throw InvalidArgument("need one policy per layer");
  double latency = 0.0;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    latency += policy_layer_latency(d, model.layers[l], batch, policies[l], guards);
  }
  return 2.0 * static_cast<double>(batch) * static_cast<double>(model.total_macs()) / latency / 1e9;
}

// Same quantity for a whole batching mode, including the FC-only layout.
inline double mode_workload_throughput(const NpuDesign& d, const ModelSpec& model, int batch, BatchingMode mode,
                                       GuardPadding guards = GuardPadding::kMultiSampleOnly) {
  double latency = 0.0;
  for (const auto& layer : model.layers) latency += mode_layer_latency(d, layer, batch, mode, guards);
  return 2.0 * static_cast<double>(batch) * static_cast<double>(model.total_macs()) / latency / 1e9;
}

struct TileGrid {
  std::vector<std::int64_t> tile_rows{256, 512, 1024, 2048, 4096};
  std::vector<std::int64_t> tile_reduction{2, 4, 7, 8, 10, 16, 32};
  std::vector<std::int64_t> tile_cols{16, 32, 64, 128, 172, 225, 256};
};

struct DseConfig {
  TileGrid grid;
  Platform platform = zc706();
  int b_max = 8;
  std::vector<double> weights;  // w_b for b = 1..B_max; empty means all ones
  BatchingMode mode = BatchingMode::kFluid;
  GuardPadding guards = GuardPadding::kMultiSampleOnly;
  unsigned threads = 0;  // 0: hardware concurrency

  std::vector<double> effective_weights() const {
    if (weights.empty()) return std::vector<double>(static_cast<std::size_t>(b_max), 1.0);
    return weights;
  }

  void validate() const {
    if (b_max < 1) throw InvalidArgument("B_max must be at least 1");
    const auto w = effective_weights();
    if (static_cast<int>(w.size()) != b_max) throw InvalidArgument("need one weight per batch size");
    bool any_positive = false;
    for (double x : w) {
      if (x < 0.0) throw InvalidArgument("weights must be non-negative");
      any_positive = any_positive || x > 0.0;
    }
    if (!any_positive) throw InvalidArgument("at least one weight must be positive");
  }
};

// Weights that put the whole objective on a single batch size.
inline std::vector<double> single_batch_weights(int b_max, int batch) {
  std::vector<double> w(static_cast<std::size_t>(b_max), 0.0);
  w.at(static_cast<std::size_t>(batch - 1)) = 1.0;
  return w;
}

struct DseCandidate {
  NpuDesign design;
  double objective = 0.0;
  std::vector<double> per_batch_throughput;  // GOp/s for b = 1..B_max
};

struct DseResult {
  NpuDesign best_design;
  Fbcb fbcb;
  double objective_value = 0.0;
  std::vector<double> per_batch_throughput;
  std::vector<DseCandidate> candidates;  // every feasible point, grid order
};

inline std::vector<NpuDesign> feasible_designs(const DseConfig& cfg) {
  std::vector<NpuDesign> out;
  for (auto t_r : cfg.grid.tile_rows) {
    for (auto t_p : cfg.grid.tile_reduction) {
      for (auto t_c : cfg.grid.tile_cols) {
        NpuDesign d = cfg.platform.design(t_r, t_p, t_c);
        if (d.feasible()) out.push_back(std::move(d));
      }
    }
  }
  return out;
}

inline DseCandidate evaluate_design(const DseConfig& cfg, const ModelSpec& model, const NpuDesign& d) {
  const auto weights = cfg.effective_weights();
  DseCandidate c{d, 0.0, {}};
  for (int b = 1; b <= cfg.b_max; ++b) {
    const double t = mode_workload_throughput(d, model, b, cfg.mode, cfg.guards);
    c.per_batch_throughput.push_back(t);
    c.objective += weights[static_cast<std::size_t>(b - 1)] * t;
  }
  return c;
}

// Exhaustive search over the tile grid. Candidates are evaluated
// independently; the winner is the highest objective, earliest in grid order.
inline DseResult run_dse(const DseConfig& cfg, const ModelSpec& model) {
  cfg.validate();
  model.validate();
  const auto designs = feasible_designs(cfg);
  if (designs.empty()) throw NoFeasibleDesign("every grid point exceeds the DSP or on-chip memory budget");

  std::vector<DseCandidate> evaluated(designs.size());
  parallel_for(designs.size(), cfg.threads, [&](std::size_t i) { evaluated[i] = evaluate_design(cfg, model, designs[i]); });

  std::size_t best = 0;
  for (std::size_t i = 1; i < evaluated.size(); ++i) {
    if (evaluated[i].objective > evaluated[best].objective) best = i;
  }
  DseResult result;
  result.best_design = evaluated[best].design;
  result.objective_value = evaluated[best].objective;
  result.per_batch_throughput = evaluated[best].per_batch_throughput;
  result.fbcb = build_fbcb(result.best_design, model, cfg.b_max, cfg.mode, cfg.guards);
  result.candidates = std::move(evaluated);
  return result;
}

}  // namespace fluidb
