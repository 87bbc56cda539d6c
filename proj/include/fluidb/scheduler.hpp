#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fluidb/common.hpp"
#include "fluidb/npu_model.hpp"
#include "fluidb/serving.hpp"
#include "fluidb/workload.hpp"

namespace fluidb {

struct BatchState {
  BatchId id = kNone;
  std::vector<SampleId> members;  // dispatch order
  int position = 0;               // boundary the batch is executing towards

  int size() const { return static_cast<int>(members.size()); }
  bool empty() const { return members.empty(); }
};

// Remaining time before the oldest member of the active batch breaks the SLO.
// Negative once the deadline has passed.
inline Nanos compute_slack(const Request& oldest, Nanos now, const SloConfig& slo) {
  const Nanos wait = oldest.dispatch_time - oldest.arrival_time;
  const Nanos exec_so_far = now - oldest.dispatch_time;
  return slo.slo - (wait + exec_so_far);
}

struct PreemptionDecision {
  bool preempt = false;
  int b_incr = 0;
  Nanos overhead{0};
  Nanos slack{0};
};

// Preempt at intermediate exit `exit` iff the new batch can reach the exit and
// the merged batch can finish the network inside the slack.
inline PreemptionDecision preemption_criterion(const LatencyLut& lut, int exit, int b_incr, int b_merged,
                                               Nanos slack) {
  if (exit < 0 || exit >= lut.num_exits() - 1) {
    throw InvalidArgument("preemption is only evaluated at intermediate exits");
  }
  if (b_incr < 1 || b_merged < b_incr || b_merged > lut.b_max()) {
    throw InvalidArgument("B_incr=" + std::to_string(b_incr) + ", B_merged=" + std::to_string(b_merged) +
                          " outside the latency table");
  }
  const Nanos overhead = lut.span(0, exit, b_incr) + lut.span(exit + 1, lut.num_exits() - 1, b_merged);
  return {overhead < slack, b_incr, overhead, slack};
}

// Exits at which a running batch may be preempted: all but the final one.
inline std::vector<int> preemptible_points(const ModelSpec& model) {
  std::vector<int> points;
  for (int i = 0; i + 1 < model.num_exits(); ++i) points.push_back(i);
  return points;
}

enum class CheckGranularity { kLayerwise, kExitLevel };

// Scheduler invocations per inference for a sample that runs the whole network.
inline int scheduler_invocations_per_inference(const ModelSpec& model, CheckGranularity g) {
  return g == CheckGranularity::kLayerwise ? model.num_layers()
                                           : static_cast<int>(preemptible_points(model).size());
}

// Execution granularity and cost tables for a preemptive scheduler. Each
// boundary closes one unit of work (an exit segment or a single layer).
struct BoundaryTable {
  std::vector<int> last_layer;                  // per boundary
  std::vector<int> exit_boundary;               // exit index -> boundary index
  std::vector<std::uint64_t> segment_macs;      // per-sample MACs per boundary
  LatencyLut times;                             // (boundary, batch) -> duration

  int num_boundaries() const { return static_cast<int>(last_layer.size()); }
  int first_layer(int boundary) const { return boundary == 0 ? 0 : last_layer[static_cast<std::size_t>(boundary - 1)] + 1; }
};

// Boundaries at the exits, timed by a per-exit latency LUT.
inline BoundaryTable exit_boundaries(const ModelSpec& model, LatencyLut lut) {
  if (lut.num_exits() != model.num_exits()) throw ConfigError("latency LUT and model disagree on exit count");
  BoundaryTable t;
  t.last_layer = model.exits.layer_indices;
  for (int e = 0; e < model.num_exits(); ++e) {
    t.exit_boundary.push_back(e);
    std::uint64_t macs = 0;
    for (int l = model.segment_first_layer(e); l <= model.segment_last_layer(e); ++l) {
      macs += model.layers[static_cast<std::size_t>(l)].macs();
    }
    t.segment_macs.push_back(macs);
  }
  t.times = std::move(lut);
  return t;
}

// One boundary per layer; `layer_times` has one row per layer.
inline BoundaryTable layer_boundaries(const ModelSpec& model, LatencyLut layer_times) {
  if (layer_times.num_exits() != model.num_layers()) throw ConfigError("per-layer table and model disagree on depth");
  BoundaryTable t;
  for (int l = 0; l < model.num_layers(); ++l) {
    t.last_layer.push_back(l);
    t.segment_macs.push_back(model.layers[static_cast<std::size_t>(l)].macs());
  }
  t.exit_boundary = model.exits.layer_indices;
  t.times = std::move(layer_times);
  return t;
}

enum class OverheadEstimator {
  kBatchedLut,           // exact batched latencies from the LUT
  kScaledSingleSample,   // B x single-sample latency
};

struct PreemptiveConfig {
  BoundaryTable boundaries;
  SloConfig slo;
  OverheadEstimator estimator = OverheadEstimator::kBatchedLut;
  bool check_final_boundary = false;  // also count an invocation after the last boundary
  Nanos check_overhead{0};            // NPU time charged per scheduler invocation
  Nanos preempt_cost{0};              // write-back charged per preemption
};

// B x single-sample estimate of the preemption overhead.
inline Nanos scaled_single_sample_overhead(const LatencyLut& times, int boundary, int b_incr, int b_merged) {
  const Nanos to_here = times.span(0, boundary, 1);
  const Nanos rest = times.span(boundary + 1, times.num_exits() - 1, 1);
  return b_incr * to_here + b_merged * rest;
}

// Batch-level scheduler that preempts the active batch at boundaries,
// runs newly queued samples from the start up to the boundary (without nested
// preemption) and merges them back in.
class PreemptiveScheduler : public ServingPolicy {
 public:
  explicit PreemptiveScheduler(PreemptiveConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.slo.validate();
    if (cfg_.boundaries.times.b_max() < cfg_.slo.b_max) {
      throw ConfigError("latency table covers batch sizes up to " + std::to_string(cfg_.boundaries.times.b_max()) +
                        " but B_max is " + std::to_string(cfg_.slo.b_max));
    }
    if (cfg_.boundaries.times.num_exits() != cfg_.boundaries.num_boundaries()) {
      throw ConfigError("latency table rows do not match the boundaries");
    }
  }

  std::int64_t preemptions() const { return preemptions_; }

  void on_arrival(ServingContext& ctx) override {
    if (phase_ == Phase::kIdle && !ctx.npu_busy()) start_batch(ctx);
  }

  void on_job_done(ServingContext& ctx, const Job& job) override {
    if (phase_ == Phase::kActive) {
      on_exit_reached(ctx, job.boundary);
    } else if (phase_ == Phase::kCatchUp) {
      on_catch_up_boundary(ctx, job.boundary);
    }
  }

  // Pure decision used at a boundary: should `queued` samples be backfilled
  // into an active batch of `remaining` members whose oldest is `oldest`?
  PreemptionDecision decide(const Request& oldest, int boundary, int remaining, std::size_t queued, Nanos now) const {
    PreemptionDecision d;
    if (remaining >= cfg_.slo.b_max || queued == 0) return d;
    const int b_incr = std::min(static_cast<int>(queued), cfg_.slo.b_max - remaining);
    const int b_merged = remaining + b_incr;
    const Nanos slack = compute_slack(oldest, now, cfg_.slo);
    if (cfg_.estimator == OverheadEstimator::kBatchedLut) return preemption_criterion(cfg_.boundaries.times, boundary, b_incr, b_merged, slack);
    const Nanos overhead = scaled_single_sample_overhead(cfg_.boundaries.times, boundary, b_incr, b_merged);
    return {overhead < slack, b_incr, overhead, slack};
  }

 private:
  enum class Phase { kIdle, kActive, kCatchUp };

  int last_boundary() const { return cfg_.boundaries.num_boundaries() - 1; }

  void start_batch(ServingContext& ctx) {
    auto& q = ctx.queue();
    if (q.empty()) return;
    active_ = take_from_queue(ctx, std::min<std::size_t>(q.size(), static_cast<std::size_t>(cfg_.slo.b_max)));
    phase_ = Phase::kActive;
    run(ctx, active_, 0, cfg_.check_overhead);
  }

  BatchState take_from_queue(ServingContext& ctx, std::size_t n) {
    BatchState b;
    b.id = ctx.new_batch_id();
    auto& q = ctx.queue();
    for (std::size_t i = 0; i < n; ++i) {
      const SampleId id = q.front();
      q.pop_front();
      ctx.dispatch(id, b.id);
      b.members.push_back(id);
    }
    return b;
  }

  void run(ServingContext& ctx, BatchState& batch, int boundary, Nanos extra) {
    batch.position = boundary;
    Job job;
    job.batch = batch.id;
    job.boundary = boundary;
    job.first_layer = cfg_.boundaries.first_layer(boundary);
    job.last_layer = cfg_.boundaries.last_layer[static_cast<std::size_t>(boundary)];
    job.size = batch.size();
    job.duration = cfg_.boundaries.times.at(boundary, batch.size()) + extra;
    job.useful_macs = static_cast<std::uint64_t>(batch.size()) * cfg_.boundaries.segment_macs[static_cast<std::size_t>(boundary)];
    ctx.start_job(job);
  }

  void release_exits(ServingContext& ctx, BatchState& batch, int boundary) {
    std::vector<SampleId> staying;
    staying.reserve(batch.members.size());
    for (SampleId id : batch.members) {
      const int exit = ctx.request(id).assigned_exit;
      if (cfg_.boundaries.exit_boundary[static_cast<std::size_t>(exit)] == boundary) {
        ctx.complete(id, batch.id, exit);
      } else {
        staying.push_back(id);
      }
    }
    batch.members = std::move(staying);
  }

  const Request& oldest_member(ServingContext& ctx, const BatchState& batch) const {
    const Request* oldest = &ctx.request(batch.members.front());
    for (SampleId id : batch.members) {
      const Request& r = ctx.request(id);
      if (r.arrival_time < oldest->arrival_time) oldest = &r;
    }
    return *oldest;
  }

  void on_exit_reached(ServingContext& ctx, int boundary) {
    release_exits(ctx, active_, boundary);
    const bool last = boundary == last_boundary();
    if (!last || cfg_.check_final_boundary) {
      ctx.log({ctx.now(), LogKind::kCheck, active_.id, kNone, kNone, active_.size(), 0, boundary});
    }
    if (last || active_.empty()) {
      end_batch(ctx);
      return;
    }
    backfill_or_continue(ctx, boundary);
  }

  void backfill_or_continue(ServingContext& ctx, int boundary) {
    auto& q = ctx.queue();
    if (active_.size() < cfg_.slo.b_max && !q.empty()) {
      const Request& oldest = oldest_member(ctx, active_);
      const PreemptionDecision d = decide(oldest, boundary, active_.size(), q.size(), ctx.now());
      if (d.preempt) {
        const SampleId oldest_id = oldest.sample_id;
        const int remaining = active_.size();
        catch_up_ = take_from_queue(ctx, static_cast<std::size_t>(d.b_incr));
        ++preemptions_;
        LogRecord rec{ctx.now(), LogKind::kPreempt, active_.id, oldest_id, catch_up_.id, d.b_incr, remaining, boundary};
        rec.duration = d.overhead;
        rec.slack = d.slack;
        ctx.log(rec);
        phase_ = Phase::kCatchUp;
        target_ = boundary;
        run(ctx, catch_up_, 0, cfg_.preempt_cost);
        return;
      }
    }
    run(ctx, active_, boundary + 1, cfg_.check_overhead);
  }

  void on_catch_up_boundary(ServingContext& ctx, int boundary) {
    release_exits(ctx, catch_up_, boundary);
    if (boundary < target_ && !catch_up_.empty()) {
      run(ctx, catch_up_, boundary + 1, Nanos{0});
      return;
    }
    active_.members.insert(active_.members.end(), catch_up_.members.begin(), catch_up_.members.end());
    ctx.log({ctx.now(), LogKind::kMerge, active_.id, kNone, catch_up_.id, active_.size(), 0, target_});
    catch_up_ = {};
    phase_ = Phase::kActive;
    backfill_or_continue(ctx, target_);
  }

  void end_batch(ServingContext& ctx) {
    phase_ = Phase::kIdle;
    active_ = {};
    start_batch(ctx);
  }

  PreemptiveConfig cfg_;
  Phase phase_ = Phase::kIdle;
  BatchState active_;
  BatchState catch_up_;
  int target_ = 0;
  std::int64_t preemptions_ = 0;
};

// Exit-aware scheduling: preemption only at intermediate exits, with overheads
// taken from the batched per-exit latency table.
inline PreemptiveConfig exit_aware_config(const ModelSpec& model, LatencyLut lut, SloConfig slo,
                                          Nanos preempt_cost = Nanos{0}) {
  PreemptiveConfig cfg;
  cfg.boundaries = exit_boundaries(model, std::move(lut));
  cfg.slo = slo;
  cfg.estimator = OverheadEstimator::kBatchedLut;
  cfg.preempt_cost = preempt_cost;
  return cfg;
}

}  // namespace fluidb
