#pragma once

#include <cstdint>
#include <deque>
#include <sstream>
#include <string>
#include <vector>

#include "fluidb/common.hpp"

// Types shared by the serving policies and the event-driven simulator.
namespace fluidb {

struct Request {
  SampleId sample_id = kNone;
  Nanos arrival_time{0};
  int assigned_exit = 0;
  Nanos dispatch_time{-1};
  Nanos completion_time{-1};
  int completed_exit = -1;

  bool dispatched() const { return dispatch_time.count() >= 0; }
  bool completed() const { return completion_time.count() >= 0; }
};

struct SloConfig {
  Nanos slo{0};  // T_SLO, tail-latency objective
  int b_max = 1;

  void validate() const {
    if (slo <= Nanos{0}) throw InvalidArgument("T_SLO must be positive");
    if (b_max < 1) throw InvalidArgument("B_max must be at least 1");
  }
};

// One NPU invocation: `size` samples through layers [first_layer, last_layer].
struct Job {
  std::int64_t id = kNone;
  BatchId batch = kNone;
  int boundary = 0;  // index of the boundary reached when the job ends
  int first_layer = 0;
  int last_layer = 0;
  int size = 0;
  Nanos duration{0};
  std::uint64_t useful_macs = 0;
};

enum class LogKind { kArrival, kDispatch, kJob, kExit, kCheck, kPreempt, kMerge, kTimeout };

inline const char* to_string(LogKind k) {
  switch (k) {
    case LogKind::kArrival: return "arrival";
    case LogKind::kDispatch: return "dispatch";
    case LogKind::kJob: return "job";
    case LogKind::kExit: return "exit";
    case LogKind::kCheck: return "check";
    case LogKind::kPreempt: return "preempt";
    case LogKind::kMerge: return "merge";
    case LogKind::kTimeout: return "timeout";
  }
  return "?";
}

// Fields beyond time/kind/batch/sample are interpreted per kind:
//   job:     size, position = last layer, first = first layer, duration, macs
//   exit:    position = exit index
//   check:   size = active batch size, position = boundary
//   preempt: other_batch = catch-up batch, size = B_incr, first = B_rem,
//            position = boundary, duration = T_overhead, slack = T_slack,
//            sample = oldest member of the preempted batch
//   merge:   other_batch = catch-up batch, size = merged batch size,
//            position = boundary
struct LogRecord {
  Nanos time{0};
  LogKind kind = LogKind::kArrival;
  BatchId batch = kNone;
  SampleId sample = kNone;
  BatchId other_batch = kNone;
  std::int64_t size = 0;
  std::int64_t first = 0;
  std::int64_t position = 0;
  Nanos duration{0};
  Nanos slack{0};
  std::uint64_t macs = 0;

  friend bool operator==(const LogRecord&, const LogRecord&) = default;
};

using EventLog = std::vector<LogRecord>;

inline std::string to_json_line(const LogRecord& r) {
  std::ostringstream os;
  os << "{\"time_ns\":" << r.time.count() << ",\"kind\":\"" << to_string(r.kind) << "\",\"batch_id\":" << r.batch
     << ",\"sample_id\":" << r.sample << ",\"detail\":{";
  switch (r.kind) {
    case LogKind::kJob:
      os << "\"size\":" << r.size << ",\"first_layer\":" << r.first << ",\"last_layer\":" << r.position
         << ",\"duration_ns\":" << r.duration.count() << ",\"macs\":" << r.macs;
      break;
    case LogKind::kExit: os << "\"exit\":" << r.position; break;
    case LogKind::kCheck: os << "\"size\":" << r.size << ",\"boundary\":" << r.position; break;
    case LogKind::kPreempt:
      os << "\"new_batch\":" << r.other_batch << ",\"b_incr\":" << r.size << ",\"b_rem\":" << r.first
         << ",\"boundary\":" << r.position << ",\"overhead_ns\":" << r.duration.count()
         << ",\"slack_ns\":" << r.slack.count();
      break;
    case LogKind::kMerge:
      os << "\"new_batch\":" << r.other_batch << ",\"size\":" << r.size << ",\"boundary\":" << r.position;
      break;
    default: break;
  }
  os << "}}";
  return os.str();
}

inline std::string to_jsonl(const EventLog& log) {
  std::string out;
  for (const auto& r : log) {
    out += to_json_line(r);
    out += '\n';
  }
  return out;
}

// Services a policy needs from the engine driving it.
class ServingContext {
 public:
  virtual ~ServingContext() = default;

  virtual Nanos now() const = 0;
  virtual std::deque<SampleId>& queue() = 0;
  virtual const Request& request(SampleId id) const = 0;
  virtual BatchId new_batch_id() = 0;
  // Marks a queued sample as dispatched into `batch` (caller pops it).
  virtual void dispatch(SampleId id, BatchId batch) = 0;
  virtual void complete(SampleId id, BatchId batch, int exit) = 0;
  virtual bool npu_busy() const = 0;
  virtual void start_job(Job job) = 0;
  virtual void schedule_timeout(Nanos at, std::int64_t tag) = 0;
  virtual void log(const LogRecord& record) = 0;
};

class ServingPolicy {
 public:
  virtual ~ServingPolicy() = default;

  virtual void on_arrival(ServingContext& ctx) = 0;
  virtual void on_job_done(ServingContext& ctx, const Job& job) = 0;
  virtual void on_timeout(ServingContext& /*ctx*/, std::int64_t /*tag*/) {}
};

}  // namespace fluidb
