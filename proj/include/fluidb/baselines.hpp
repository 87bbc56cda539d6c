#pragma once

#include <algorithm>
#include <optional>
#include <string>

#include "fluidb/common.hpp"
#include "fluidb/dse.hpp"
#include "fluidb/npu_model.hpp"
#include "fluidb/scheduler.hpp"
#include "fluidb/serving.hpp"

namespace fluidb {

enum class AdaptBMode { kFcOnly, kRUniform };

struct AdaptBConfig {
  int b_max = 8;
  Nanos timeout{0};  // T_timeout, batch-forming window
  AdaptBMode mode = AdaptBMode::kRUniform;

  void validate() const {
    if (b_max < 1) throw InvalidArgument("B_max must be at least 1");
    if (timeout < Nanos{0}) throw InvalidArgument("T_timeout must be non-negative");
  }
};

enum class TimeoutSize { kSmall, kMedium, kLarge };

// Batch-forming windows as a fraction of the tail-latency SLO: 5%, 45%, 95%.
inline Nanos adaptb_timeout(Nanos slo, TimeoutSize size) {
  const double fraction = size == TimeoutSize::kSmall ? 0.05 : size == TimeoutSize::kMedium ? 0.45 : 0.95;
  return Nanos{static_cast<std::int64_t>(std::llround(static_cast<double>(slo.count()) * fraction))};
}

struct DispatchDecision {
  int size = 0;                 // samples to dispatch now; 0 means wait
  std::optional<Nanos> wake_at; // when the partial batch becomes due
};

// Full batches go immediately; a partial batch goes once its oldest sample has
// waited T_timeout.
inline DispatchDecision adaptb_dispatch(std::size_t queued, Nanos oldest_arrival, const AdaptBConfig& cfg, Nanos now) {
  if (queued == 0) return {};
  if (queued >= static_cast<std::size_t>(cfg.b_max)) return {cfg.b_max, std::nullopt};
  const Nanos due = oldest_arrival + cfg.timeout;
  if (now >= due) return {static_cast<int>(queued), std::nullopt};
  return {0, due};
}

// Convolutions run once per sample; FC layers run once on the R-batched input.
inline double fc_only_latency(const NpuDesign& d, const ModelSpec& model, int batch) {
  if (batch < 1) throw InvalidArgument("batch size must be at least 1");
  double total = 0.0;
  for (const auto& layer : model.layers) total += mode_layer_latency(d, layer, batch, BatchingMode::kFcOnly);
  return total;
}

// Model-level batching: the batch runs every exit segment in order, shrinking
// only as members exit, and is never preempted. SERIAL is B_max = 1 with no
// batch-forming window.
class ModelLevelBatching : public ServingPolicy {
 public:
  ModelLevelBatching(const ModelSpec& model, LatencyLut lut, AdaptBConfig cfg)
      : boundaries_(exit_boundaries(model, std::move(lut))), cfg_(cfg) {
    cfg_.validate();
    if (boundaries_.times.b_max() < cfg_.b_max) throw ConfigError("latency LUT does not cover B_max");
  }

  void on_arrival(ServingContext& ctx) override { try_dispatch(ctx); }

  void on_timeout(ServingContext& ctx, std::int64_t) override {
    pending_wake_.reset();
    try_dispatch(ctx);
  }

  void on_job_done(ServingContext& ctx, const Job& job) override {
    std::vector<SampleId> staying;
    for (SampleId id : active_.members) {
      const int exit = ctx.request(id).assigned_exit;
      if (exit == job.boundary) {
        ctx.complete(id, active_.id, exit);
      } else {
        staying.push_back(id);
      }
    }
    active_.members = std::move(staying);
    if (active_.empty() || job.boundary == boundaries_.num_boundaries() - 1) {
      active_ = {};
      running_ = false;
      try_dispatch(ctx);
      return;
    }
    run(ctx, job.boundary + 1);
  }

 private:
  void try_dispatch(ServingContext& ctx) {
    if (running_) return;
    auto& q = ctx.queue();
    if (q.empty()) return;
    const DispatchDecision d = adaptb_dispatch(q.size(), ctx.request(q.front()).arrival_time, cfg_, ctx.now());
    if (d.size == 0) {
      if (d.wake_at && pending_wake_ != d.wake_at) {
        pending_wake_ = d.wake_at;
        ctx.schedule_timeout(*d.wake_at, q.front());
      }
      return;
    }
    active_ = {};
    active_.id = ctx.new_batch_id();
    for (int i = 0; i < d.size; ++i) {
      const SampleId id = q.front();
      q.pop_front();
      ctx.dispatch(id, active_.id);
      active_.members.push_back(id);
    }
    running_ = true;
    run(ctx, 0);
  }

  void run(ServingContext& ctx, int boundary) {
    active_.position = boundary;
    Job job;
    job.batch = active_.id;
    job.boundary = boundary;
    job.first_layer = boundaries_.first_layer(boundary);
    job.last_layer = boundaries_.last_layer[static_cast<std::size_t>(boundary)];
    job.size = active_.size();
    job.duration = boundaries_.times.at(boundary, active_.size());
    job.useful_macs = static_cast<std::uint64_t>(active_.size()) * boundaries_.segment_macs[static_cast<std::size_t>(boundary)];
    ctx.start_job(job);
  }

  BoundaryTable boundaries_;
  AdaptBConfig cfg_;
  BatchState active_;
  bool running_ = false;
  std::optional<Nanos> pending_wake_;
};

struct LazyBatchingConfig {
  SloConfig slo;
  Nanos check_overhead{0};  // per layerwise scheduler invocation
};

// Layer-level preemption with the B x single-sample overhead estimate. Once the
// batch is full no preemption is considered, even after members exit.
inline PreemptiveConfig lazy_batching_config(const ModelSpec& model, LatencyLut layer_times,
                                             const LazyBatchingConfig& cfg) {
  PreemptiveConfig out;
  out.boundaries = layer_boundaries(model, std::move(layer_times));
  out.slo = cfg.slo;
  out.estimator = OverheadEstimator::kScaledSingleSample;
  out.check_final_boundary = true;
  out.check_overhead = cfg.check_overhead;
  return out;
}

// Coarse estimate used by the layerwise baseline for a batch of `batch`
// samples over a span whose single-sample latency is known.
inline Nanos lazy_batch_estimate(Nanos single_sample, int batch) { return batch * single_sample; }

}  // namespace fluidb
