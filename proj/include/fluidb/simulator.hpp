#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <queue>
#include <string>
#include <vector>

#include "fluidb/baselines.hpp"
#include "fluidb/common.hpp"
#include "fluidb/dse.hpp"
#include "fluidb/npu_model.hpp"
#include "fluidb/scheduler.hpp"
#include "fluidb/serving.hpp"
#include "fluidb/workload.hpp"

namespace fluidb {

// Simultaneous events are processed arrivals first, then NPU completions,
// then batch-forming timeouts; remaining ties by ascending id.
enum class EventKind : int { kArrival = 0, kSegmentDone = 1, kTimeoutFire = 2 };

struct Event {
  Nanos time{0};
  EventKind kind = EventKind::kArrival;
  std::int64_t id = 0;

  friend bool operator>(const Event& a, const Event& b) {
    if (a.time != b.time) return a.time > b.time;
    if (a.kind != b.kind) return static_cast<int>(a.kind) > static_cast<int>(b.kind);
    return a.id > b.id;
  }
};

class Simulator final : private ServingContext {
 public:
  Simulator(const ModelSpec& model, const ArrivalTrace& trace) : model_(model) {
    if (trace.assigned_exits.size() != trace.size() || trace.sample_ids.size() != trace.size()) {
      throw ConfigError("arrival trace needs one sample id and one exit per arrival");
    }
    requests_.reserve(trace.size());
    for (std::size_t i = 0; i < trace.size(); ++i) {
      if (trace.sample_ids[i] != static_cast<SampleId>(i)) throw ConfigError("sample ids must be dense and ordered");
      if (i > 0 && trace.arrival_times[i] < trace.arrival_times[i - 1]) {
        throw ConfigError("arrival times must be non-decreasing");
      }
      const int exit = trace.assigned_exits[i];
      if (exit < 0 || exit >= model.num_exits()) throw ConfigError("assigned exit outside the model's exits");
      Request r;
      r.sample_id = trace.sample_ids[i];
      r.arrival_time = to_nanos(trace.arrival_times[i]);
      r.assigned_exit = exit;
      requests_.push_back(r);
    }
  }

  EventLog run(ServingPolicy& policy) {
    policy_ = &policy;
    for (const auto& r : requests_) events_.push({r.arrival_time, EventKind::kArrival, r.sample_id});
    while (!events_.empty()) {
      const Event ev = events_.top();
      events_.pop();
      now_ = ev.time;
      switch (ev.kind) {
        case EventKind::kArrival:
          queue_.push_back(ev.id);
          log({now_, LogKind::kArrival, kNone, ev.id});
          policy.on_arrival(*this);
          break;
        case EventKind::kSegmentDone: {
          const Job job = running_;
          busy_ = false;
          policy.on_job_done(*this, job);
          break;
        }
        case EventKind::kTimeoutFire: {
          const std::int64_t tag = timeout_tags_.at(ev.id);
          timeout_tags_.erase(ev.id);
          log({now_, LogKind::kTimeout, kNone, tag});
          policy.on_timeout(*this, tag);
          break;
        }
      }
    }
    std::size_t unfinished = 0;
    for (const auto& r : requests_) unfinished += r.completed() ? 0 : 1;
    if (unfinished != 0 || !queue_.empty()) {
      throw Error("simulation drained with " + std::to_string(unfinished) + " unfinished samples");
    }
    return std::move(log_);
  }

  const std::vector<Request>& requests() const { return requests_; }

 private:
  Nanos now() const override { return now_; }
  std::deque<SampleId>& queue() override { return queue_; }
  const Request& request(SampleId id) const override { return requests_.at(static_cast<std::size_t>(id)); }
  BatchId new_batch_id() override { return next_batch_++; }
  bool npu_busy() const override { return busy_; }

  void dispatch(SampleId id, BatchId batch) override {
    Request& r = requests_.at(static_cast<std::size_t>(id));
    if (r.dispatched()) throw Error("sample " + std::to_string(id) + " dispatched twice");
    r.dispatch_time = now_;
    log({now_, LogKind::kDispatch, batch, id});
  }

  void complete(SampleId id, BatchId batch, int exit) override {
    Request& r = requests_.at(static_cast<std::size_t>(id));
    if (r.completed()) throw Error("sample " + std::to_string(id) + " completed twice");
    if (exit != r.assigned_exit) throw Error("sample " + std::to_string(id) + " left at the wrong exit");
    r.completion_time = now_;
    r.completed_exit = exit;
    LogRecord rec{now_, LogKind::kExit, batch, id};
    rec.position = exit;
    log(rec);
  }

  void start_job(Job job) override {
    if (busy_) throw Error("NPU job started while another is running");
    if (job.duration < Nanos{0}) throw Error("negative job duration");
    job.id = next_job_++;
    busy_ = true;
    running_ = job;
    LogRecord rec{now_, LogKind::kJob, job.batch, kNone, kNone, job.size, job.first_layer, job.last_layer};
    rec.duration = job.duration;
    rec.macs = job.useful_macs;
    log(rec);
    events_.push({now_ + job.duration, EventKind::kSegmentDone, job.id});
  }

  void schedule_timeout(Nanos at, std::int64_t tag) override {
    if (at < now_) throw Error("timeout scheduled in the past");
    const std::int64_t id = next_timeout_++;
    timeout_tags_[id] = tag;
    events_.push({at, EventKind::kTimeoutFire, id});
  }

  void log(const LogRecord& record) override { log_.push_back(record); }

  const ModelSpec& model_;
  std::vector<Request> requests_;
  std::priority_queue<Event, std::vector<Event>, std::greater<>> events_;
  std::deque<SampleId> queue_;
  std::map<std::int64_t, std::int64_t> timeout_tags_;
  EventLog log_;
  ServingPolicy* policy_ = nullptr;
  Nanos now_{0};
  bool busy_ = false;
  Job running_;
  BatchId next_batch_ = 0;
  std::int64_t next_job_ = 0;
  std::int64_t next_timeout_ = 0;
};

// ---------------------------------------------------------------------------
// Policies and the NPU tables they run on.
// ---------------------------------------------------------------------------

enum class PolicyKind { kFluidB, kSerial, kAdaptB, kLazy };

struct PolicySpec {
  std::string name;
  PolicyKind kind = PolicyKind::kFluidB;
  AdaptBMode adaptb_mode = AdaptBMode::kRUniform;
  TimeoutSize timeout = TimeoutSize::kSmall;
};

inline PolicySpec parse_policy(const std::string& name) {
  PolicySpec p;
  p.name = name;
  if (name == "fluidb") {
    p.kind = PolicyKind::kFluidB;
  } else if (name == "serial") {
    p.kind = PolicyKind::kSerial;
  } else if (name == "lazy") {
    p.kind = PolicyKind::kLazy;
  } else if ((name.rfind("fc-adaptb-", 0) == 0 || name.rfind("r-adaptb-", 0) == 0) &&
             (name.back() == 's' || name.back() == 'm' || name.back() == 'l') &&
             name.size() == (name[0] == 'f' ? 11U : 10U)) {
    p.kind = PolicyKind::kAdaptB;
    p.adaptb_mode = name[0] == 'f' ? AdaptBMode::kFcOnly : AdaptBMode::kRUniform;
    p.timeout = name.back() == 's' ? TimeoutSize::kSmall : name.back() == 'm' ? TimeoutSize::kMedium : TimeoutSize::kLarge;
  } else {
    throw InvalidArgument("unknown policy '" + name + "'");
  }
  return p;
}

inline std::vector<std::string> all_policy_names() {
  return {"fluidb", "serial", "fc-adaptb-s", "fc-adaptb-m", "fc-adaptb-l",
          "r-adaptb-s", "r-adaptb-m", "r-adaptb-l", "lazy"};
}

// Batching layout the NPU uses under each policy.
inline BatchingMode serving_mode(const PolicySpec& p) {
  switch (p.kind) {
    case PolicyKind::kFluidB: return BatchingMode::kFluid;
    case PolicyKind::kAdaptB: return p.adaptb_mode == AdaptBMode::kFcOnly ? BatchingMode::kFcOnly : BatchingMode::kRUniform;
    default: return BatchingMode::kRUniform;
  }
}

// Batch-size weights used when searching each policy's NPU design.
inline std::vector<double> design_weights(const PolicySpec& p, int b_max) {
  if (p.kind == PolicyKind::kFluidB) return std::vector<double>(static_cast<std::size_t>(b_max), 1.0);
  return single_batch_weights(b_max, b_max);
}

struct ServingSetup {
  ModelSpec model;
  NpuDesign design;
  BatchingMode mode = BatchingMode::kFluid;
  int b_max = 1;
  LatencyLut exit_lut;   // (exit segment, b)
  LatencyLut layer_lut;  // (layer, b)
};

inline ServingSetup make_serving_setup(const NpuDesign& design, const ModelSpec& model, BatchingMode mode, int b_max,
                                       GuardPadding guards = GuardPadding::kMultiSampleOnly) {
  model.validate();
  ServingSetup s;
  s.model = model;
  s.design = design;
  s.mode = mode;
  s.b_max = b_max;
  s.layer_lut = LatencyLut(model.num_layers(), b_max);
  s.exit_lut = LatencyLut(model.num_exits(), b_max);
  std::vector<std::vector<double>> seconds(static_cast<std::size_t>(model.num_layers()));
  for (int l = 0; l < model.num_layers(); ++l) {
    for (int b = 1; b <= b_max; ++b) {
      const double t = mode_layer_latency(design, model.layers[static_cast<std::size_t>(l)], b, mode, guards);
      seconds[static_cast<std::size_t>(l)].push_back(t);
      s.layer_lut.set(l, b, to_nanos(t));
    }
  }
  for (int e = 0; e < model.num_exits(); ++e) {
    for (int b = 1; b <= b_max; ++b) {
      double t = 0.0;
      for (int l = model.segment_first_layer(e); l <= model.segment_last_layer(e); ++l) {
        t += seconds[static_cast<std::size_t>(l)][static_cast<std::size_t>(b - 1)];
      }
      s.exit_lut.set(e, b, to_nanos(t));
    }
  }
  s.exit_lut.validate();
  return s;
}

struct SimOptions {
  Nanos preempt_cost{0};
  Nanos lazy_check_overhead{0};
};

inline std::unique_ptr<ServingPolicy> make_policy(const PolicySpec& p, const ServingSetup& setup, const SloConfig& slo,
                                                  const SimOptions& opts = {}) {
  slo.validate();
  if (setup.b_max < slo.b_max) throw ConfigError("serving tables built for a smaller B_max than requested");
  switch (p.kind) {
    case PolicyKind::kFluidB:
      return std::make_unique<PreemptiveScheduler>(exit_aware_config(setup.model, setup.exit_lut, slo, opts.preempt_cost));
    case PolicyKind::kLazy:
      return std::make_unique<PreemptiveScheduler>(
          lazy_batching_config(setup.model, setup.layer_lut, {slo, opts.lazy_check_overhead}));
    case PolicyKind::kSerial:
      return std::make_unique<ModelLevelBatching>(setup.model, setup.exit_lut, AdaptBConfig{1, Nanos{0}, AdaptBMode::kRUniform});
    case PolicyKind::kAdaptB:
      return std::make_unique<ModelLevelBatching>(setup.model, setup.exit_lut,
                                                  AdaptBConfig{slo.b_max, adaptb_timeout(slo.slo, p.timeout), p.adaptb_mode});
  }
  throw InvalidArgument("unhandled policy");
}

inline EventLog run_simulation(const ServingSetup& setup, const PolicySpec& policy, const ArrivalTrace& trace,
                               const SloConfig& slo, const SimOptions& opts = {}) {
  auto p = make_policy(policy, setup, slo, opts);
  Simulator sim(setup.model, trace);
  return sim.run(*p);
}

// ---------------------------------------------------------------------------
// Metrics.
// ---------------------------------------------------------------------------

struct MetricsReport {
  std::size_t samples = 0;          // measured (post warm-up)
  double processing_rate = 0.0;     // completions per second
  double avg_latency = 0.0;         // seconds
  double p99_latency = 0.0;         // seconds, nearest rank
  double violation_rate = 0.0;      // fraction with latency > T_SLO
  double utilisation = 0.0;         // useful ops / (peak x NPU busy time)
  double offered_utilisation = 0.0; // useful ops / (peak x makespan)
  std::int64_t preemptions = 0;
};

// Nearest-rank percentile of an unsorted sample set, q in (0, 1].
inline double nearest_rank_percentile(std::vector<double> values, double q) {
  if (values.empty()) throw EmptyReport("no values");
  std::sort(values.begin(), values.end());
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(values.size())));
  return values[std::max<std::size_t>(rank, 1) - 1];
}

inline MetricsReport compute_metrics(const EventLog& log, Nanos slo, double peak_ops_per_s,
                                     double warmup_fraction = 0.05) {
  std::map<SampleId, Nanos> arrival;
  std::map<SampleId, Nanos> completion;
  Nanos busy{0};
  long double useful_ops = 0.0L;
  MetricsReport m;
  for (const auto& r : log) {
    switch (r.kind) {
      case LogKind::kArrival: arrival[r.sample] = r.time; break;
      case LogKind::kExit: completion[r.sample] = r.time; break;
      case LogKind::kJob:
        busy += r.duration;
        useful_ops += 2.0L * static_cast<long double>(r.macs);
        break;
      case LogKind::kPreempt: ++m.preemptions; break;
      default: break;
    }
  }
  if (arrival.empty() || completion.empty()) throw EmptyReport("event log has no completed samples");

  const auto warmup = static_cast<std::size_t>(std::floor(warmup_fraction * static_cast<double>(arrival.size())));
  std::vector<double> latencies;
  Nanos first_measured = Nanos::max();
  Nanos last_measured = Nanos::min();
  std::size_t index = 0;
  for (const auto& [id, t_arrival] : arrival) {
    if (index++ < warmup) continue;
    const auto it = completion.find(id);
    if (it == completion.end()) throw EmptyReport("sample " + std::to_string(id) + " never completed");
    latencies.push_back(to_seconds(it->second - t_arrival));
    first_measured = std::min(first_measured, t_arrival);
    last_measured = std::max(last_measured, it->second);
  }
  if (latencies.empty()) throw EmptyReport("every sample fell inside the warm-up window");

  m.samples = latencies.size();
  double sum = 0.0;
  std::size_t violations = 0;
  for (double l : latencies) {
    sum += l;
    violations += l > to_seconds(slo) ? 1 : 0;
  }
  m.avg_latency = sum / static_cast<double>(latencies.size());
  m.p99_latency = nearest_rank_percentile(latencies, 0.99);
  m.violation_rate = static_cast<double>(violations) / static_cast<double>(latencies.size());
  const double window = to_seconds(last_measured - first_measured);
  m.processing_rate = window > 0.0 ? static_cast<double>(latencies.size()) / window : 0.0;

  Nanos first_arrival = Nanos::max();
  Nanos last_completion = Nanos::min();
  for (const auto& [id, t] : arrival) first_arrival = std::min(first_arrival, t);
  for (const auto& [id, t] : completion) last_completion = std::max(last_completion, t);
  const double makespan = to_seconds(last_completion - first_arrival);
  if (busy > Nanos{0}) m.utilisation = static_cast<double>(useful_ops / (peak_ops_per_s * to_seconds(busy)));
  if (makespan > 0.0) m.offered_utilisation = static_cast<double>(useful_ops / (peak_ops_per_s * makespan));
  return m;
}

}  // namespace fluidb
