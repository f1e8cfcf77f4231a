#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "maldistill/orchestrator/orchestrator.hpp"

namespace maldistill::orchestrator {

struct SimulationConfig {
  PoolConfig pool;
  std::size_t n_jobs = 200;
  /// Probability that an execution crashes its worker. 1 is allowed: the
  /// resubmission budget still ends every job.
  double crash_prob = 0.0;
  std::uint64_t seed = 0;
  double min_duration = 30.0;  // seconds of analysis per execution
  double max_duration = 90.0;
  /// Executions from this attempt on never crash; 0 disables the override.
  std::size_t forced_success_attempt = 0;
  /// Simulated-time guard against a livelock.
  double max_time = 1e9;

  void validate() const;
};

nlohmann::json to_json(const SimulationConfig& c);
SimulationConfig simulation_config_from_json(const nlohmann::json& j);

struct SimulationResult {
  std::map<JobId, AnalysisJob> jobs;
  std::vector<Event> events;
  std::size_t ticks = 0;
  std::size_t executions = 0;
  std::size_t crashes = 0;
  double end_time = 0;

  /// hist[k] = number of jobs that finished after k executions.
  std::vector<std::size_t> attempts_histogram() const;
  std::size_t count(JobStatus s) const;
};

/// Seeded discrete-event run of the orchestrator against simulated workers
/// that heartbeat while alive, finish after a uniform analysis time, or fall
/// silent mid-run when the execution draws a crash. Invariants are checked
/// after every event; returns once every job is terminal.
SimulationResult run_simulation(const SimulationConfig& config);

nlohmann::json summary_json(const SimulationResult& r);

}  // namespace maldistill::orchestrator
