#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace maldistill::orchestrator {

using JobId = std::uint64_t;
using WorkerId = std::size_t;

enum class JobStatus { queued, running, succeeded, failed_permanent };
enum class Health { up, crashed, replacing };

std::string to_string(JobStatus s);
std::string to_string(Health h);

struct AnalysisJob {
  JobId id = 0;
  std::string sample_id;
  JobStatus status = JobStatus::queued;
  std::size_t attempts = 0;  // executions started so far
  std::size_t max_resubmit = 3;
  std::string result_path;
  std::optional<WorkerId> worker;

  bool terminal() const {
    return status == JobStatus::succeeded || status == JobStatus::failed_permanent;
  }
};

struct WorkerState {
  WorkerId worker_id = 0;
  Health health = Health::up;
  double last_heartbeat = 0;
  std::optional<JobId> job;
  double ready_at = 0;  // when a replacing worker comes back up
};

struct PoolConfig {
  std::size_t n_workers = 12;
  double heartbeat_interval = 5.0;  // seconds
  double crash_timeout = 15.0;
  std::size_t max_resubmit = 3;
  double replacement_delay = 30.0;

  void validate() const;
};

nlohmann::json to_json(const PoolConfig& c);
PoolConfig pool_config_from_json(const nlohmann::json& j);

/// One state transition, for the line-delimited event log.
struct Event {
  double time = 0;
  std::string entity;      // "job:<id>" or "worker:<id>"
  std::string transition;  // "<from>-><to>"
  nlohmann::json detail = nlohmann::json::object();
};

nlohmann::json to_json(const Event& e);
void write_event_log(std::ostream& out, const std::vector<Event>& events);

enum class ActionKind { mark_crashed, requeue, fail_permanent, start_replacement, worker_ready, assign };
std::string to_string(ActionKind k);

struct Action {
  ActionKind kind;
  WorkerId worker;
  std::optional<JobId> job;
};

/// Reports from a sandbox backend. `attempt` identifies the execution a
/// completion or crash refers to; reports for superseded executions are
/// ignored.
struct BackendEvent {
  enum class Kind { heartbeat, completed, crashed };
  Kind kind;
  WorkerId worker;
  double time = 0;
  std::optional<JobId> job;
  std::size_t attempt = 0;
  std::string result_path;
};

struct SubmitResult {
  JobId id;
  bool accepted;
};

/// Single-owner job/worker state machine. Advanced only by submit, backend
/// events and monitor ticks; never blocks and owns no threads.
class Orchestrator {
 public:
  explicit Orchestrator(PoolConfig config, double now = 0);

  /// Queues a new job. A sample that already has a job, active or
  /// terminal, is rejected and the existing id returned.
  SubmitResult submit(const std::string& sample_id, double now);

  /// Applies one backend report. Returns false for stale or unknown reports.
  bool handle(const BackendEvent& e);

  /// Crash detection, replacement and assignment, in that order.
  std::vector<Action> monitor_tick(double now);

  const PoolConfig& config() const { return config_; }
  const AnalysisJob& job(JobId id) const;
  const std::map<JobId, AnalysisJob>& jobs() const { return jobs_; }
  const std::vector<WorkerState>& workers() const { return workers_; }
  const std::deque<JobId>& queue() const { return queue_; }
  const std::vector<Event>& events() const { return events_; }
  bool all_terminal() const;

  /// Throws std::logic_error unless every job sits in exactly one of the
  /// queue, one worker, or a terminal state, and attempt budgets hold.
  void check_invariants() const;

 private:
  void log(double t, const std::string& entity, const std::string& from, const std::string& to,
           nlohmann::json detail = nlohmann::json::object());
  void set_job_status(AnalysisJob& j, JobStatus s, double t, nlohmann::json detail = {});
  void set_health(WorkerState& w, Health h, double t);
  /// Takes the job away from a lost execution: requeue or fail permanently.
  void release_lost_job(WorkerState& w, double now, std::vector<Action>* actions);
  void crash_worker(WorkerState& w, double now, std::vector<Action>* actions);

  PoolConfig config_;
  std::map<JobId, AnalysisJob> jobs_;
  std::map<std::string, JobId> by_sample_;
  std::vector<WorkerState> workers_;
  std::deque<JobId> queue_;
  std::vector<Event> events_;
  JobId next_id_ = 1;
};

/// P(attempts = k) for k = 1..1+max_resubmit when each execution crashes
/// independently with probability p. Index 0 is unused.
std::vector<double> attempts_distribution(double crash_prob, std::size_t max_resubmit);

}  // namespace maldistill::orchestrator
