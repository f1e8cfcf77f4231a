#include "maldistill/orchestrator/simulation.hpp"

#include <cmath>
#include <cstdio>
#include <queue>
#include <stdexcept>

#include "maldistill/core/random.hpp"

namespace maldistill::orchestrator {

void SimulationConfig::validate() const {
  pool.validate();
  if (!(crash_prob >= 0 && crash_prob <= 1)) {
    throw std::invalid_argument("simulation: crash_prob must lie in [0, 1]");
  }
  if (!(min_duration > 0) || !(max_duration >= min_duration) || !std::isfinite(max_duration)) {
    throw std::invalid_argument("simulation: need 0 < min_duration <= max_duration");
  }
  if (!(max_time > 0)) throw std::invalid_argument("simulation: max_time must be positive");
}

nlohmann::json to_json(const SimulationConfig& c) {
  return {{"pool", to_json(c.pool)},
          {"n_jobs", c.n_jobs},
          {"crash_prob", c.crash_prob},
          {"seed", c.seed},
          {"min_duration", c.min_duration},
          {"max_duration", c.max_duration},
          {"forced_success_attempt", c.forced_success_attempt},
          {"max_time", c.max_time}};
}

SimulationConfig simulation_config_from_json(const nlohmann::json& j) {
  SimulationConfig c;
  if (j.contains("pool")) c.pool = pool_config_from_json(j.at("pool"));
  c.n_jobs = j.value("n_jobs", c.n_jobs);
  c.crash_prob = j.value("crash_prob", c.crash_prob);
  c.seed = j.value("seed", c.seed);
  c.min_duration = j.value("min_duration", c.min_duration);
  c.max_duration = j.value("max_duration", c.max_duration);
  c.forced_success_attempt = j.value("forced_success_attempt", c.forced_success_attempt);
  c.max_time = j.value("max_time", c.max_time);
  c.validate();
  return c;
}

std::vector<std::size_t> SimulationResult::attempts_histogram() const {
  std::vector<std::size_t> hist;
  for (const auto& [_, j] : jobs) {
    if (hist.size() <= j.attempts) hist.resize(j.attempts + 1, 0);
    ++hist[j.attempts];
  }
  return hist;
}

std::size_t SimulationResult::count(JobStatus s) const {
  std::size_t n = 0;
  for (const auto& [_, j] : jobs) n += j.status == s;
  return n;
}

nlohmann::json summary_json(const SimulationResult& r) {
  return {{"jobs", r.jobs.size()},
          {"succeeded", r.count(JobStatus::succeeded)},
          {"failed_permanent", r.count(JobStatus::failed_permanent)},
          {"executions", r.executions},
          {"crashes", r.crashes},
          {"ticks", r.ticks},
          {"end_time", r.end_time},
          {"attempts_histogram", r.attempts_histogram()}};
}

namespace {

enum class SimKind { tick, heartbeat, complete, fall_silent };

struct SimEvent {
  double time;
  std::uint64_t seq;
  SimKind kind;
  WorkerId worker = 0;
  std::uint64_t incarnation = 0;
  JobId job = 0;
  std::size_t attempt = 0;

  bool operator>(const SimEvent& o) const {
    return time != o.time ? time > o.time : seq > o.seq;
  }
};

struct SimWorker {
  bool alive = true;
  std::uint64_t incarnation = 0;
};

}  // namespace

SimulationResult run_simulation(const SimulationConfig& config) {
  config.validate();
  const PoolConfig& pool = config.pool;
  Orchestrator orch(pool, 0.0);
  core::Rng rng(config.seed);
  std::priority_queue<SimEvent, std::vector<SimEvent>, std::greater<>> agenda;
  std::uint64_t seq = 0;
  auto schedule = [&](SimEvent e) {
    e.seq = seq++;
    agenda.push(e);
  };

  char name[32];
  for (std::size_t i = 0; i < config.n_jobs; ++i) {
    std::snprintf(name, sizeof name, "sample-%06zu", i);
    orch.submit(name, 0.0);
  }
  std::vector<SimWorker> sim(pool.n_workers);
  for (WorkerId w = 0; w < sim.size(); ++w) {
    const double phase = pool.heartbeat_interval * static_cast<double>(w + 1) / static_cast<double>(sim.size());
    schedule({phase, 0, SimKind::heartbeat, w, 0});
  }
  schedule({0.0, 0, SimKind::tick});

  SimulationResult result;
  auto start_execution = [&](double now, WorkerId w, JobId id) {
    const std::size_t attempt = orch.job(id).attempts;
    const bool forced = config.forced_success_attempt > 0 && attempt >= config.forced_success_attempt;
    const bool crash = !forced && rng.bernoulli(config.crash_prob);
    const double duration = rng.uniform(config.min_duration, config.max_duration);
    ++result.executions;
    if (crash) {
      ++result.crashes;
      schedule({now + rng.uniform(0.0, duration), 0, SimKind::fall_silent, w, sim[w].incarnation, id, attempt});
    } else {
      schedule({now + duration, 0, SimKind::complete, w, sim[w].incarnation, id, attempt});
    }
  };

  while (!orch.all_terminal()) {
    if (agenda.empty()) throw std::logic_error("simulation agenda ran dry before all jobs finished");
    const SimEvent e = agenda.top();
    agenda.pop();
    if (e.time > config.max_time) {
      throw std::runtime_error("simulation exceeded max_time " + std::to_string(config.max_time));
    }
    result.end_time = e.time;
    switch (e.kind) {
      case SimKind::tick: {
        ++result.ticks;
        for (const auto& a : orch.monitor_tick(e.time)) {
          SimWorker& w = sim[a.worker];
          if (a.kind == ActionKind::assign) {
            start_execution(e.time, a.worker, *a.job);
          } else if (a.kind == ActionKind::mark_crashed) {
            w.alive = false;
            ++w.incarnation;
          } else if (a.kind == ActionKind::worker_ready) {
            w.alive = true;
            ++w.incarnation;
            schedule({e.time + pool.heartbeat_interval, 0, SimKind::heartbeat, a.worker, w.incarnation});
          }
        }
        schedule({e.time + pool.heartbeat_interval, 0, SimKind::tick});
        break;
      }
      case SimKind::heartbeat:
        if (sim[e.worker].alive && sim[e.worker].incarnation == e.incarnation) {
          orch.handle({BackendEvent::Kind::heartbeat, e.worker, e.time, std::nullopt, 0, ""});
          schedule({e.time + pool.heartbeat_interval, 0, SimKind::heartbeat, e.worker, e.incarnation});
        }
        break;
      case SimKind::complete:
        if (sim[e.worker].incarnation == e.incarnation) {
          orch.handle({BackendEvent::Kind::completed, e.worker, e.time, e.job, e.attempt,
                       "reports/" + orch.job(e.job).sample_id + ".json"});
        }
        break;
      case SimKind::fall_silent:
        if (sim[e.worker].incarnation == e.incarnation) {
          sim[e.worker].alive = false;
          ++sim[e.worker].incarnation;
        }
        break;
    }
    orch.check_invariants();
  }
  result.jobs = orch.jobs();
  result.events = orch.events();
  return result;
}

}  // namespace maldistill::orchestrator
