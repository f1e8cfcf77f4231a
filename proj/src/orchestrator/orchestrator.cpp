#include "maldistill/orchestrator/orchestrator.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

namespace maldistill::orchestrator {

std::string to_string(JobStatus s) {
  switch (s) {
    case JobStatus::queued: return "queued";
    case JobStatus::running: return "running";
    case JobStatus::succeeded: return "succeeded";
    case JobStatus::failed_permanent: return "failed_permanent";
  }
  return "?";
}

std::string to_string(Health h) {
  switch (h) {
    case Health::up: return "up";
    case Health::crashed: return "crashed";
    case Health::replacing: return "replacing";
  }
  return "?";
}

std::string to_string(ActionKind k) {
  switch (k) {
    case ActionKind::mark_crashed: return "mark_crashed";
    case ActionKind::requeue: return "requeue";
    case ActionKind::fail_permanent: return "fail_permanent";
    case ActionKind::start_replacement: return "start_replacement";
    case ActionKind::worker_ready: return "worker_ready";
    case ActionKind::assign: return "assign";
  }
  return "?";
}

void PoolConfig::validate() const {
  if (n_workers < 1) throw std::invalid_argument("pool: n_workers must be >= 1");
  if (!(heartbeat_interval > 0) || !std::isfinite(heartbeat_interval)) {
    throw std::invalid_argument("pool: heartbeat_interval must be positive");
  }
  if (!(crash_timeout > heartbeat_interval) || !std::isfinite(crash_timeout)) {
    throw std::invalid_argument("pool: crash_timeout must exceed heartbeat_interval");
  }
  if (!(replacement_delay >= 0) || !std::isfinite(replacement_delay)) {
    throw std::invalid_argument("pool: replacement_delay must be >= 0");
  }
}

nlohmann::json to_json(const PoolConfig& c) {
  return {{"n_workers", c.n_workers},
          {"heartbeat_interval", c.heartbeat_interval},
          {"crash_timeout", c.crash_timeout},
          {"max_resubmit", c.max_resubmit},
          {"replacement_delay", c.replacement_delay}};
}

PoolConfig pool_config_from_json(const nlohmann::json& j) {
  PoolConfig c;
  c.n_workers = j.value("n_workers", c.n_workers);
  c.heartbeat_interval = j.value("heartbeat_interval", c.heartbeat_interval);
  c.crash_timeout = j.value("crash_timeout", c.crash_timeout);
  c.max_resubmit = j.value("max_resubmit", c.max_resubmit);
  c.replacement_delay = j.value("replacement_delay", c.replacement_delay);
  c.validate();
  return c;
}

nlohmann::json to_json(const Event& e) {
  nlohmann::json j = {{"t", e.time}, {"entity", e.entity}, {"transition", e.transition}};
  if (!e.detail.empty()) j["detail"] = e.detail;
  return j;
}

void write_event_log(std::ostream& out, const std::vector<Event>& events) {
  for (const auto& e : events) out << to_json(e).dump() << "\n";
}

Orchestrator::Orchestrator(PoolConfig config, double now) : config_(std::move(config)) {
  config_.validate();
  workers_.resize(config_.n_workers);
  for (WorkerId w = 0; w < workers_.size(); ++w) {
    workers_[w].worker_id = w;
    workers_[w].last_heartbeat = now;
  }
}

void Orchestrator::log(double t, const std::string& entity, const std::string& from,
                       const std::string& to, nlohmann::json detail) {
  events_.push_back({t, entity, from + "->" + to, detail.is_null() ? nlohmann::json::object() : detail});
}

void Orchestrator::set_job_status(AnalysisJob& j, JobStatus s, double t, nlohmann::json detail) {
  log(t, "job:" + std::to_string(j.id), to_string(j.status), to_string(s), std::move(detail));
  j.status = s;
}

void Orchestrator::set_health(WorkerState& w, Health h, double t) {
  log(t, "worker:" + std::to_string(w.worker_id), to_string(w.health), to_string(h));
  w.health = h;
}

SubmitResult Orchestrator::submit(const std::string& sample_id, double now) {
  if (auto it = by_sample_.find(sample_id); it != by_sample_.end()) return {it->second, false};
  AnalysisJob j;
  const JobId id = next_id_++;
  j.id = id;
  j.sample_id = sample_id;
  j.max_resubmit = config_.max_resubmit;
  events_.push_back({now, "job:" + std::to_string(j.id), "none->queued", {{"sample", sample_id}}});
  by_sample_.emplace(sample_id, j.id);
  queue_.push_back(j.id);
  jobs_.emplace(id, std::move(j));
  return {id, true};
}

const AnalysisJob& Orchestrator::job(JobId id) const {
  auto it = jobs_.find(id);
  if (it == jobs_.end()) throw std::out_of_range("unknown job id " + std::to_string(id));
  return it->second;
}

bool Orchestrator::all_terminal() const {
  return std::all_of(jobs_.begin(), jobs_.end(), [](const auto& kv) { return kv.second.terminal(); });
}

void Orchestrator::release_lost_job(WorkerState& w, double now, std::vector<Action>* actions) {
  if (!w.job) return;
  AnalysisJob& j = jobs_.at(*w.job);
  w.job.reset();
  j.worker.reset();
  if (j.attempts >= 1 + j.max_resubmit) {
    set_job_status(j, JobStatus::failed_permanent, now, {{"attempts", j.attempts}});
    if (actions) actions->push_back({ActionKind::fail_permanent, w.worker_id, j.id});
  } else {
    set_job_status(j, JobStatus::queued, now, {{"attempts", j.attempts}});
    queue_.push_back(j.id);
    if (actions) actions->push_back({ActionKind::requeue, w.worker_id, j.id});
  }
}

void Orchestrator::crash_worker(WorkerState& w, double now, std::vector<Action>* actions) {
  set_health(w, Health::crashed, now);
  if (actions) actions->push_back({ActionKind::mark_crashed, w.worker_id, w.job});
  release_lost_job(w, now, actions);
  set_health(w, Health::replacing, now);
  w.ready_at = now + config_.replacement_delay;
  if (actions) actions->push_back({ActionKind::start_replacement, w.worker_id, std::nullopt});
}

bool Orchestrator::handle(const BackendEvent& e) {
  if (e.worker >= workers_.size()) return false;
  WorkerState& w = workers_[e.worker];
  if (w.health != Health::up) return false;
  switch (e.kind) {
    case BackendEvent::Kind::heartbeat:
      w.last_heartbeat = std::max(w.last_heartbeat, e.time);
      return true;
    case BackendEvent::Kind::completed: {
      if (!e.job || w.job != e.job) return false;
      AnalysisJob& j = jobs_.at(*e.job);
      if (j.status != JobStatus::running || j.attempts != e.attempt) return false;
      j.result_path = e.result_path;
      j.worker.reset();
      w.job.reset();
      w.last_heartbeat = std::max(w.last_heartbeat, e.time);
      set_job_status(j, JobStatus::succeeded, e.time, {{"attempts", j.attempts}});
      return true;
    }
    case BackendEvent::Kind::crashed:
      if (e.job && (w.job != e.job || jobs_.at(*e.job).attempts != e.attempt)) return false;
      crash_worker(w, e.time, nullptr);
      return true;
  }
  return false;
}

std::vector<Action> Orchestrator::monitor_tick(double now) {
  std::vector<Action> actions;
  for (auto& w : workers_) {
    if (w.health == Health::up && now - w.last_heartbeat > config_.crash_timeout) {
      crash_worker(w, now, &actions);
    }
  }
  for (auto& w : workers_) {
    if (w.health == Health::replacing && now >= w.ready_at) {
      set_health(w, Health::up, now);
      w.last_heartbeat = now;
      actions.push_back({ActionKind::worker_ready, w.worker_id, std::nullopt});
    }
  }
  for (auto& w : workers_) {
    if (queue_.empty()) break;
    if (w.health != Health::up || w.job) continue;
    AnalysisJob& j = jobs_.at(queue_.front());
    queue_.pop_front();
    ++j.attempts;
    j.worker = w.worker_id;
    w.job = j.id;
    set_job_status(j, JobStatus::running, now, {{"worker", w.worker_id}, {"attempt", j.attempts}});
    actions.push_back({ActionKind::assign, w.worker_id, j.id});
  }
  return actions;
}

void Orchestrator::check_invariants() const {
  std::map<JobId, std::size_t> in_queue, on_worker;
  for (JobId id : queue_) ++in_queue[id];
  for (const auto& w : workers_) {
    if (!w.job) continue;
    if (w.health != Health::up) {
      throw std::logic_error("worker " + std::to_string(w.worker_id) + " is " + to_string(w.health) +
                             " but holds job " + std::to_string(*w.job));
    }
    ++on_worker[*w.job];
  }
  for (const auto& [id, j] : jobs_) {
    const std::size_t q = in_queue.count(id) ? in_queue.at(id) : 0;
    const std::size_t r = on_worker.count(id) ? on_worker.at(id) : 0;
    const std::size_t places = q + r + (j.terminal() ? 1 : 0);
    if (places != 1) {
      throw std::logic_error("job " + std::to_string(id) + " is in " + std::to_string(places) +
                             " places (queue " + std::to_string(q) + ", workers " + std::to_string(r) +
                             ", status " + to_string(j.status) + ")");
    }
    if ((j.status == JobStatus::queued) != (q == 1) || (j.status == JobStatus::running) != (r == 1)) {
      throw std::logic_error("job " + std::to_string(id) + " status " + to_string(j.status) +
                             " disagrees with its location");
    }
    if (j.status == JobStatus::running &&
        (!j.worker || workers_.at(*j.worker).job != std::optional<JobId>(id))) {
      throw std::logic_error("job " + std::to_string(id) + " points at the wrong worker");
    }
    if (j.attempts > 1 + j.max_resubmit) {
      throw std::logic_error("job " + std::to_string(id) + " exceeded its attempt budget");
    }
    if (j.status == JobStatus::failed_permanent && j.attempts != 1 + j.max_resubmit) {
      throw std::logic_error("job " + std::to_string(id) + " failed before exhausting its budget");
    }
  }
}

std::vector<double> attempts_distribution(double p, std::size_t max_resubmit) {
  if (!(p >= 0 && p <= 1)) throw std::invalid_argument("crash probability must lie in [0, 1]");
  const std::size_t budget = 1 + max_resubmit;
  std::vector<double> out(budget + 1, 0.0);
  for (std::size_t k = 1; k < budget; ++k) out[k] = std::pow(p, static_cast<double>(k - 1)) * (1 - p);
  out[budget] = std::pow(p, static_cast<double>(budget - 1));
  return out;
}

}  // namespace maldistill::orchestrator
