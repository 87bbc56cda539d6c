#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <string>
#include <vector>

#include "fluidb/common.hpp"
#include "fluidb/workload.hpp"

namespace fluidb {

// Tiled-GEMM accelerator: T_C processing elements, each a MAC tree of width
// T_P, with T_R rows streamed per tile.
struct NpuDesign {
  std::string name;
  std::int64_t tile_rows = 1;       // T_R
  std::int64_t tile_reduction = 1;  // T_P
  std::int64_t tile_cols = 1;       // T_C
  double clock_hz = 150e6;
  double mem_bandwidth_bytes_per_s = 12.8e9;
  std::int64_t word_bytes = 2;
  std::int64_t dsp_budget = 0;
  std::int64_t bram_budget_words = 0;

  std::int64_t dsp_usage() const { return tile_reduction * tile_cols; }

  // Double-buffered input, weight and output tiles.
  std::int64_t buffer_words() const {
    return 2 * (tile_rows * tile_reduction + tile_reduction * tile_cols + tile_rows * tile_cols);
  }

  bool feasible() const {
    return tile_rows >= 1 && tile_reduction >= 1 && tile_cols >= 1 && dsp_usage() <= dsp_budget &&
           buffer_words() <= bram_budget_words;
  }

  void validate() const {
    if (tile_rows < 1 || tile_reduction < 1 || tile_cols < 1) {
      throw InvalidArgument("tile sizes must be positive");
    }
    if (!(clock_hz > 0.0) || !(mem_bandwidth_bytes_per_s > 0.0) || word_bytes < 1) {
      throw InvalidArgument("clock, bandwidth and word size must be positive");
    }
    if (dsp_usage() > dsp_budget) {
      throw InvalidArgument("design uses " + std::to_string(dsp_usage()) + " MAC units but the budget is " +
                            std::to_string(dsp_budget));
    }
    if (buffer_words() > bram_budget_words) {
      throw InvalidArgument("double-buffered tiles need " + std::to_string(buffer_words()) +
                            " words but on-chip memory holds " + std::to_string(bram_budget_words));
    }
  }

  friend bool operator==(const NpuDesign&, const NpuDesign&) = default;
};

struct Platform {
  std::string name;
  double clock_hz;
  double mem_bandwidth_bytes_per_s;
  std::int64_t word_bytes;
  std::int64_t dsp_budget;
  std::int64_t bram_budget_words;

  NpuDesign design(std::int64_t t_r, std::int64_t t_p, std::int64_t t_c) const {
    return NpuDesign{name + "<" + std::to_string(t_r) + "," + std::to_string(t_p) + "," + std::to_string(t_c) + ">",
                     t_r, t_p, t_c, clock_hz, mem_bandwidth_bytes_per_s, word_bytes, dsp_budget,
                     bram_budget_words};
  }
};

// On-chip word budgets are backed out of the reported BRAM occupancy of the
// shipped design points; DRAM bandwidth is not reported and uses the default.
inline Platform zc706() { return {"zc706", 150e6, 12.8e9, 2, 900, 1'258'400}; }
inline Platform zcu104() { return {"zcu104", 200e6, 12.8e9, 2, 1728, 2'490'600}; }

inline Platform platform_by_name(const std::string& name) {
  if (name == "zc706") return zc706();
  if (name == "zcu104") return zcu104();
  throw InvalidArgument("unknown platform '" + name + "'");
}

namespace presets {
inline NpuDesign zc706_resnet50() { return zc706().design(4652, 7, 128); }
inline NpuDesign zcu104_resnet50() { return zcu104().design(6832, 10, 172); }
inline NpuDesign zc706_inception_v3() { return zc706().design(2742, 4, 225); }
inline NpuDesign zcu104_inception_v3() { return zcu104().design(6832, 10, 172); }

inline std::vector<NpuDesign> all() {
  return {zc706_resnet50(), zcu104_resnet50(), zc706_inception_v3(), zcu104_inception_v3()};
}

inline NpuDesign by_name(const std::string& name) {
  if (name == "zc706-resnet50") return zc706_resnet50();
  if (name == "zcu104-resnet50") return zcu104_resnet50();
  if (name == "zc706-inception_v3") return zc706_inception_v3();
  if (name == "zcu104-inception_v3") return zcu104_inception_v3();
  throw InvalidArgument("unknown design preset '" + name + "'");
}
}  // namespace presets

enum class Stacking : std::uint8_t { kHalf, kOne, kTwo };

inline constexpr Stacking kAllStackings[] = {Stacking::kHalf, Stacking::kOne, Stacking::kTwo};

inline const char* to_string(Stacking k) {
  switch (k) {
    case Stacking::kHalf: return "1/2";
    case Stacking::kOne: return "1";
    case Stacking::kTwo: return "2";
  }
  return "?";
}

inline Stacking stacking_from_string(const std::string& s) {
  if (s == "1/2" || s == "0.5") return Stacking::kHalf;
  if (s == "1") return Stacking::kOne;
  if (s == "2") return Stacking::kTwo;
  throw InvalidArgument("stacking factor must be one of 1/2, 1, 2 (got '" + s + "')");
}

inline bool stacking_supported(const NpuDesign& d, Stacking k) {
  switch (k) {
    case Stacking::kOne: return true;
    case Stacking::kHalf: return d.tile_reduction % 2 == 0 && d.tile_rows >= 2;
    case Stacking::kTwo: return d.tile_cols >= 2 && d.tile_rows >= 2;
  }
  return false;
}

// Reconfigures <T_R, T_P, T_C> into <T_R/2, k*T_P, T_C/k>.
inline NpuDesign stack_pes(const NpuDesign& d, Stacking k) {
  if (k == Stacking::kOne) return d;
  if (!stacking_supported(d, k)) {
    throw UnsupportedStacking("k=" + std::string(to_string(k)) + " on <" + std::to_string(d.tile_rows) + "," +
                              std::to_string(d.tile_reduction) + "," + std::to_string(d.tile_cols) + ">");
  }
  NpuDesign s = d;
  s.tile_rows = d.tile_rows / 2;
  if (k == Stacking::kTwo) {
    s.tile_reduction = d.tile_reduction * 2;
    s.tile_cols = d.tile_cols / 2;
  } else {
    s.tile_reduction = d.tile_reduction / 2;
    s.tile_cols = d.tile_cols * 2;
  }
  return s;
}

inline Stacking stacking_from_double(double k) {
  if (k == 0.5) return Stacking::kHalf;
  if (k == 1.0) return Stacking::kOne;
  if (k == 2.0) return Stacking::kTwo;
  throw InvalidArgument("stacking factor must be 1/2, 1 or 2");
}

struct BatchedLayerDims {
  std::int64_t rows_hat = 1;       // R^
  std::int64_t reduction_hat = 1;  // P^
  std::int64_t cols = 1;           // C
  std::uint64_t useful_macs = 0;   // B_act * R * P * C

  friend bool operator==(const BatchedLayerDims&, const BatchedLayerDims&) = default;
};

enum class GuardPadding {
  kMultiSampleOnly,  // guards only when more than one sample shares the P axis
  kAlways,           // pad even a single sample group
};

struct LayerPolicy {
  int row_batch = 1;  // B_R
  Stacking stacking = Stacking::kOne;

  int reduction_batch(int batch) const { return batch - row_batch + 1; }  // B_P

  friend bool operator==(const LayerPolicy&, const LayerPolicy&) = default;
};

inline BatchedLayerDims fluid_dims(const LayerSpec& layer, int batch, int row_batch, std::int64_t tile_reduction,
                                   GuardPadding guards = GuardPadding::kMultiSampleOnly) {
  if (batch < 1 || row_batch < 1 || row_batch > batch) {
    throw InvalidPolicy("B_R=" + std::to_string(row_batch) + " outside [1, " + std::to_string(batch) + "]");
  }
  if (tile_reduction < 1) throw InvalidArgument("T_P must be positive");
  const std::int64_t reduction_batch = batch - row_batch + 1;
  BatchedLayerDims d;
  d.rows_hat = row_batch * layer.rows;
  if (reduction_batch == 1 && guards == GuardPadding::kMultiSampleOnly) {
    d.reduction_hat = layer.reduction;
  } else {
    d.reduction_hat = reduction_batch * (layer.reduction + layer.reduction % tile_reduction);
  }
  d.cols = layer.cols;
  d.useful_macs = static_cast<std::uint64_t>(batch) * layer.macs();
  return d;
}

inline std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

// Adder-tree depth plus fixed control latency, charged once per layer.
inline std::int64_t pipeline_fill_cycles(std::int64_t tile_reduction) {
  const auto width = static_cast<std::uint64_t>(tile_reduction);
  const std::int64_t depth = width <= 1 ? 0 : static_cast<std::int64_t>(std::bit_width(width - 1));
  return depth + 4;
}

inline std::int64_t compute_cycles(const NpuDesign& d, const BatchedLayerDims& dims) {
  return ceil_div(dims.rows_hat, d.tile_rows) * ceil_div(dims.reduction_hat, d.tile_reduction) *
             ceil_div(dims.cols, d.tile_cols) * d.tile_rows +
         pipeline_fill_cycles(d.tile_reduction);
}

inline double memory_bytes(const NpuDesign& d, const BatchedLayerDims& dims) {
  const double r = static_cast<double>(dims.rows_hat);
  const double p = static_cast<double>(dims.reduction_hat);
  const double c = static_cast<double>(dims.cols);
  return static_cast<double>(d.word_bytes) * (r * p + p * c + r * c);
}

// Roofline latency: the slower of compute and off-chip traffic.
inline double layer_latency(const NpuDesign& d, const BatchedLayerDims& dims) {
  if (dims.rows_hat < 1 || dims.reduction_hat < 1 || dims.cols < 1) {
    throw InvalidArgument("batched layer dimensions must be positive");
  }
  const double compute = static_cast<double>(compute_cycles(d, dims)) / d.clock_hz;
  const double memory = memory_bytes(d, dims) / d.mem_bandwidth_bytes_per_s;
  return std::max(compute, memory);
}

// Ops/s (one multiply and one add per MAC per cycle).
inline double peak_ops_per_s(const NpuDesign& d) {
  return 2.0 * static_cast<double>(d.tile_reduction) * static_cast<double>(d.tile_cols) * d.clock_hz;
}

inline double peak_performance(const NpuDesign& d) { return peak_ops_per_s(d) / 1e9; }

inline double policy_layer_latency(const NpuDesign& d, const LayerSpec& layer, int batch, const LayerPolicy& policy,
                                   GuardPadding guards = GuardPadding::kMultiSampleOnly) {
  const NpuDesign stacked = stack_pes(d, policy.stacking);
  return layer_latency(stacked, fluid_dims(layer, batch, policy.row_batch, stacked.tile_reduction, guards));
}

// GOp/s achieved by one layer under a policy.
inline double layer_throughput(const NpuDesign& d, const LayerSpec& layer, int batch, const LayerPolicy& policy,
                               GuardPadding guards = GuardPadding::kMultiSampleOnly) {
  const double useful_ops = 2.0 * static_cast<double>(batch) * static_cast<double>(layer.macs());
  return useful_ops / policy_layer_latency(d, layer, batch, policy, guards) / 1e9;
}

// Fluid Batching Control Block: the per-(layer, batch size) policy table.
class Fbcb {
 public:
  Fbcb() = default;
  Fbcb(int num_layers, int b_max) : num_layers_(num_layers), b_max_(b_max) {
    if (num_layers < 1 || b_max < 1) throw InvalidArgument("FBCB needs at least one layer and batch size");
    entries_.assign(static_cast<std::size_t>(num_layers) * static_cast<std::size_t>(b_max), LayerPolicy{});
  }

  int num_layers() const { return num_layers_; }
  int b_max() const { return b_max_; }
  std::size_t size() const { return entries_.size(); }

  const LayerPolicy& at(int layer, int batch) const { return entries_[offset(layer, batch)]; }

  void set(int layer, int batch, LayerPolicy policy) {
    if (policy.row_batch < 1 || policy.row_batch > batch) {
      throw InvalidPolicy("B_R=" + std::to_string(policy.row_batch) + " invalid for batch " + std::to_string(batch));
    }
    entries_[offset(layer, batch)] = policy;
  }

  friend bool operator==(const Fbcb&, const Fbcb&) = default;

 private:
  std::size_t offset(int layer, int batch) const {
    if (layer < 0 || layer >= num_layers_ || batch < 1 || batch > b_max_) {
      throw LookupError("FBCB entry (l=" + std::to_string(layer) + ", b=" + std::to_string(batch) + ") outside " +
                        std::to_string(num_layers_) + "x" + std::to_string(b_max_));
    }
    return static_cast<std::size_t>(layer) * static_cast<std::size_t>(b_max_) + static_cast<std::size_t>(batch - 1);
  }

  int num_layers_ = 0;
  int b_max_ = 0;
  std::vector<LayerPolicy> entries_;
};

struct FbcbEntry {
  int row_batch;        // B_R
  int reduction_batch;  // B_P
  Stacking stacking;    // k
};

inline FbcbEntry fbcb_lookup(const Fbcb& fbcb, int layer, int batch) {
  const LayerPolicy& p = fbcb.at(layer, batch);
  return {p.row_batch, p.reduction_batch(batch), p.stacking};
}

// Storage for L x B_max entries of (B_R, k): ceil(log2 B_max) bits for B_R
// plus two bits for the three stacking states.
inline std::uint64_t fbcb_size_bits(std::uint64_t num_layers, std::uint64_t b_max) {
  if (num_layers < 1 || b_max < 1) throw InvalidArgument("L and B_max must be positive");
  const std::uint64_t row_bits = b_max <= 1 ? 0 : static_cast<std::uint64_t>(std::bit_width(b_max - 1));
  return num_layers * b_max * (row_bits + 2);
}

inline constexpr int kFromStart = -1;

// Model latency of the layers in (exit_layer[from], exit_layer[to]] at batch B,
// with from = kFromStart meaning the first layer.
inline double segment_latency(const NpuDesign& d, const ModelSpec& model, const Fbcb& fbcb, int from_exit,
                              int to_exit, int batch, GuardPadding guards = GuardPadding::kMultiSampleOnly) {
  if (to_exit < 0 || to_exit >= model.num_exits() || from_exit < kFromStart || from_exit >= to_exit) {
    throw LookupError("segment from exit " + std::to_string(from_exit) + " to " + std::to_string(to_exit));
  }
  const int first = from_exit == kFromStart ? 0 : model.segment_last_layer(from_exit) + 1;
  const int last = model.segment_last_layer(to_exit);
  double total = 0.0;
  for (int l = first; l <= last; ++l) {
    total += policy_layer_latency(d, model.layers[static_cast<std::size_t>(l)], batch, fbcb.at(l, batch), guards);
  }
  return total;
}

// Per-exit-segment latencies for every batch size, quantised to nanoseconds so
// the scheduler's estimates and the simulated NPU agree exactly.
class LatencyLut {
 public:
  LatencyLut() = default;
  LatencyLut(int num_exits, int b_max) : num_exits_(num_exits), b_max_(b_max) {
    if (num_exits < 1 || b_max < 1) throw InvalidArgument("latency LUT needs at least one exit and batch size");
    table_.assign(static_cast<std::size_t>(num_exits) * static_cast<std::size_t>(b_max), Nanos{0});
  }

  int num_exits() const { return num_exits_; }
  int b_max() const { return b_max_; }
  std::size_t size() const { return table_.size(); }

  Nanos at(int exit, int batch) const { return table_[offset(exit, batch)]; }
  double seconds(int exit, int batch) const { return to_seconds(at(exit, batch)); }
  void set(int exit, int batch, Nanos t) { table_[offset(exit, batch)] = t; }

  // Sum of segments first..last (inclusive) at one batch size.
  Nanos span(int first, int last, int batch) const {
    Nanos total{0};
    for (int i = first; i <= last; ++i) total += at(i, batch);
    return total;
  }

  void validate() const {
    for (int i = 0; i < num_exits_; ++i) {
      for (int b = 1; b <= b_max_; ++b) {
        if (at(i, b) <= Nanos{0}) throw ConfigError("latency LUT entry must be positive");
        if (b > 1 && at(i, b) < at(i, b - 1)) throw ConfigError("latency LUT must be non-decreasing in batch size");
      }
    }
  }

 private:
  std::size_t offset(int exit, int batch) const {
    if (exit < 0 || exit >= num_exits_ || batch < 1 || batch > b_max_) {
      throw LookupError("latency LUT entry (exit=" + std::to_string(exit) + ", b=" + std::to_string(batch) + ")");
    }
    return static_cast<std::size_t>(exit) * static_cast<std::size_t>(b_max_) + static_cast<std::size_t>(batch - 1);
  }

  int num_exits_ = 0;
  int b_max_ = 0;
  std::vector<Nanos> table_;
};

inline LatencyLut build_latency_lut(const NpuDesign& d, const ModelSpec& model, const Fbcb& fbcb, int b_max,
                                    GuardPadding guards = GuardPadding::kMultiSampleOnly) {
  if (b_max > fbcb.b_max() || fbcb.num_layers() != model.num_layers()) {
    throw ConfigError("FBCB dimensions do not cover the model and batch range");
  }
  LatencyLut lut(model.num_exits(), b_max);
  for (int i = 0; i < model.num_exits(); ++i) {
    for (int b = 1; b <= b_max; ++b) {
      lut.set(i, b, to_nanos(segment_latency(d, model, fbcb, i - 1, i, b, guards)));
    }
  }
  return lut;
}

}  // namespace fluidb
