#include <doctest.h>

#include <chrono>
#include <cmath>
#include <set>
#include <sstream>

#include "maldistill/core/random.hpp"
#include "maldistill/orchestrator/orchestrator.hpp"
#include "maldistill/orchestrator/simulation.hpp"

using namespace maldistill;
using namespace maldistill::orchestrator;

namespace {

PoolConfig small_pool(std::size_t workers = 2) {
  PoolConfig p;
  p.n_workers = workers;
  p.heartbeat_interval = 1;
  p.crash_timeout = 3;
  p.replacement_delay = 5;
  return p;
}

BackendEvent heartbeat(WorkerId w, double t) {
  return {BackendEvent::Kind::heartbeat, w, t, std::nullopt, 0, ""};
}

BackendEvent completed(WorkerId w, double t, JobId j, std::size_t attempt) {
  return {BackendEvent::Kind::completed, w, t, j, attempt, "r.json"};
}

bool has(const std::vector<Action>& actions, ActionKind k) {
  return std::any_of(actions.begin(), actions.end(), [&](const Action& a) { return a.kind == k; });
}

// P(attempts = k) by stepping the absorbing chain "execution k crashes or not".
std::vector<double> markov_attempts(double p, std::size_t max_resubmit) {
  std::vector<double> out(max_resubmit + 2, 0.0);
  double alive = 1.0;  // probability mass still running at attempt k
  for (std::size_t k = 1; k <= max_resubmit + 1; ++k) {
    const double crash = alive * p;
    out[k] += alive - crash;
    alive = crash;
    if (k == max_resubmit + 1) out[k] += alive;
  }
  return out;
}

}  // namespace

TEST_CASE("submit queues fresh samples and rejects repeats") {
  Orchestrator o(small_pool());
  const auto a = o.submit("s1", 0);
  CHECK(a.accepted);
  CHECK(o.job(a.id).status == JobStatus::queued);
  CHECK(o.job(a.id).attempts == 0);
  const auto again = o.submit("s1", 0);
  CHECK_FALSE(again.accepted);
  CHECK(again.id == a.id);

  o.monitor_tick(0);
  CHECK(o.job(a.id).status == JobStatus::running);
  CHECK(o.handle(completed(*o.job(a.id).worker, 1, a.id, 1)));
  CHECK(o.job(a.id).status == JobStatus::succeeded);
  CHECK(o.job(a.id).result_path == "r.json");
  const auto after = o.submit("s1", 2);
  CHECK_FALSE(after.accepted);
  CHECK(after.id == a.id);

  Orchestrator big(small_pool());
  std::set<JobId> ids;
  for (int i = 0; i < 1000; ++i) ids.insert(big.submit("x" + std::to_string(i), 0).id);
  CHECK(ids.size() == 1000);
  CHECK_NOTHROW(big.check_invariants());
}

TEST_CASE("ticks assign queued jobs to idle workers in order") {
  Orchestrator o(small_pool(2));
  const auto j1 = o.submit("a", 0).id, j2 = o.submit("b", 0).id, j3 = o.submit("c", 0).id;
  const auto actions = o.monitor_tick(0);
  REQUIRE(actions.size() == 2);
  CHECK(actions[0].kind == ActionKind::assign);
  CHECK(actions[0].worker == 0);
  CHECK(*actions[0].job == j1);
  CHECK(*actions[1].job == j2);
  CHECK(o.job(j1).attempts == 1);
  CHECK(o.job(j3).status == JobStatus::queued);
  CHECK(o.queue().size() == 1);
  o.check_invariants();
}

TEST_CASE("quiet pool yields no actions") {
  Orchestrator o(small_pool(3));
  for (double t = 1; t < 10; t += 1) {
    for (WorkerId w = 0; w < 3; ++w) o.handle(heartbeat(w, t));
    CHECK(o.monitor_tick(t).empty());
  }
}

TEST_CASE("a silent worker is marked crashed, its job requeued, and it is replaced") {
  Orchestrator o(small_pool(1));
  const auto id = o.submit("a", 0).id;
  o.monitor_tick(0);
  o.handle(heartbeat(0, 1));
  CHECK(o.monitor_tick(4).empty());  // 3 s since the heartbeat: not past the timeout
  const auto actions = o.monitor_tick(4.5);
  CHECK(has(actions, ActionKind::mark_crashed));
  CHECK(has(actions, ActionKind::requeue));
  CHECK(has(actions, ActionKind::start_replacement));
  CHECK_FALSE(has(actions, ActionKind::assign));
  CHECK(o.workers()[0].health == Health::replacing);
  CHECK_FALSE(o.workers()[0].job.has_value());
  CHECK(o.job(id).status == JobStatus::queued);
  CHECK(o.job(id).attempts == 1);
  o.check_invariants();

  CHECK(o.monitor_tick(9).empty());
  const auto back = o.monitor_tick(9.5);
  CHECK(has(back, ActionKind::worker_ready));
  CHECK(has(back, ActionKind::assign));
  CHECK(o.job(id).attempts == 2);
  CHECK(o.workers()[0].health == Health::up);
}

TEST_CASE("the fourth crash exhausts the budget") {
  auto pool = small_pool(1);
  pool.replacement_delay = 0;
  Orchestrator o(pool);
  const auto id = o.submit("a", 0).id;
  double t = 0;
  o.monitor_tick(t);
  for (int crash = 1; crash <= 4; ++crash) {
    CHECK(o.job(id).attempts == static_cast<std::size_t>(crash));
    t += 10;
    const auto actions = o.monitor_tick(t);  // detects, replaces at once, reassigns
    o.check_invariants();
    if (crash < 4) {
      CHECK(has(actions, ActionKind::requeue));
      CHECK(o.job(id).status == JobStatus::running);
    } else {
      CHECK(has(actions, ActionKind::fail_permanent));
      CHECK(o.job(id).status == JobStatus::failed_permanent);
      CHECK(o.job(id).attempts == 4);
    }
    o.handle(heartbeat(0, t));
  }
  CHECK(o.all_terminal());
}

TEST_CASE("reports from superseded executions are ignored") {
  auto pool = small_pool(2);
  Orchestrator o(pool);
  const auto id = o.submit("a", 0).id;
  o.monitor_tick(0);
  CHECK(*o.job(id).worker == 0);
  o.handle(heartbeat(1, 3));
  o.monitor_tick(3.5);  // worker 0 silent since 0: crashed, job goes to worker 1
  CHECK(*o.job(id).worker == 1);
  CHECK(o.job(id).attempts == 2);
  CHECK_FALSE(o.handle(completed(0, 4, id, 1)));  // the dead VM's late report
  CHECK_FALSE(o.handle(completed(1, 4, id, 1)));  // right worker, stale attempt
  CHECK(o.job(id).status == JobStatus::running);
  CHECK(o.handle(completed(1, 4, id, 2)));
  CHECK(o.job(id).status == JobStatus::succeeded);
  CHECK_FALSE(o.handle(heartbeat(0, 5)));  // replacing workers do not heartbeat
  CHECK_FALSE(o.handle(heartbeat(7, 5)));
  o.check_invariants();
}

TEST_CASE("an explicit crash report requeues at once") {
  Orchestrator o(small_pool(1));
  const auto id = o.submit("a", 0).id;
  o.monitor_tick(0);
  CHECK(o.handle({BackendEvent::Kind::crashed, 0, 1, id, 1, ""}));
  CHECK(o.workers()[0].health == Health::replacing);
  CHECK(o.job(id).status == JobStatus::queued);
  o.check_invariants();
}

TEST_CASE("random operation sequences preserve conservation") {
  core::Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    auto pool = small_pool(1 + rng.below(4));
    Orchestrator o(pool);
    double t = 0;
    for (int step = 0; step < 300; ++step) {
      t += rng.uniform(0, 1.5);
      const auto r = rng.below(5);
      if (r == 0) {
        o.submit("s" + std::to_string(rng.below(40)), t);
      } else if (r == 1) {
        o.handle(heartbeat(rng.below(pool.n_workers), t));
      } else if (r == 2) {
        const WorkerId w = rng.below(pool.n_workers);
        const auto& ws = o.workers()[w];
        if (ws.job) o.handle(completed(w, t, *ws.job, o.job(*ws.job).attempts));
      } else {
        o.monitor_tick(t);
      }
      REQUIRE_NOTHROW(o.check_invariants());
    }
  }
}

TEST_CASE("pool config validation and JSON") {
  PoolConfig p;
  CHECK(p.n_workers == 12);
  CHECK(p.max_resubmit == 3);
  CHECK_NOTHROW(p.validate());
  auto bad = p;
  bad.n_workers = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = p;
  bad.crash_timeout = bad.heartbeat_interval;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  CHECK(to_json(pool_config_from_json(to_json(p))) == to_json(p));
}

TEST_CASE("closed-form attempts distribution agrees with the chain") {
  for (double p : {0.0, 0.1, 0.3, 0.7, 1.0}) {
    for (std::size_t b : {0u, 1u, 3u, 5u}) {
      const auto closed = attempts_distribution(p, b);
      const auto chain = markov_attempts(p, b);
      double total = 0;
      for (std::size_t k = 1; k < closed.size(); ++k) {
        CHECK(closed[k] == doctest::Approx(chain[k]).epsilon(1e-12));
        total += closed[k];
      }
      CHECK(total == doctest::Approx(1.0));
    }
  }
}

TEST_CASE("simulation without crashes succeeds first time") {
  SimulationConfig c;
  c.n_jobs = 50;
  const auto r = run_simulation(c);
  CHECK(r.count(JobStatus::succeeded) == 50);
  for (const auto& [_, j] : r.jobs) CHECK(j.attempts == 1);
  CHECK(r.crashes == 0);
}

TEST_CASE("every execution crashing exhausts every budget") {
  SimulationConfig c;
  c.n_jobs = 30;
  c.crash_prob = 1.0;
  const auto r = run_simulation(c);
  CHECK(r.count(JobStatus::failed_permanent) == 30);
  for (const auto& [_, j] : r.jobs) CHECK(j.attempts == 4);
  CHECK(r.executions == 120);

  c.forced_success_attempt = 4;
  const auto forced = run_simulation(c);
  CHECK(forced.count(JobStatus::succeeded) == 30);
  for (const auto& [_, j] : forced.jobs) CHECK(j.attempts == 4);
}

TEST_CASE("attempts histogram matches the geometric oracle") {
  const auto t0 = std::chrono::steady_clock::now();
  SimulationConfig c;
  c.n_jobs = 200;
  c.crash_prob = 0.3;
  c.seed = 2024;
  const auto r = run_simulation(c);
  CHECK(r.count(JobStatus::succeeded) + r.count(JobStatus::failed_permanent) == 200);
  const auto expect = markov_attempts(0.3, 3);
  auto hist = r.attempts_histogram();
  hist.resize(expect.size(), 0);
  CHECK(hist[0] == 0);
  for (std::size_t k = 1; k < expect.size(); ++k) {
    const double mean = 200 * expect[k];
    const double sd = std::sqrt(200 * expect[k] * (1 - expect[k]));
    CAPTURE(k);
    CAPTURE(hist[k]);
    CHECK(std::abs(static_cast<double>(hist[k]) - mean) <= 3 * sd);
  }
  CHECK(r.count(JobStatus::failed_permanent) == hist[4] - [&] {
    std::size_t late_success = 0;
    for (const auto& [_, j] : r.jobs) late_success += j.attempts == 4 && j.status == JobStatus::succeeded;
    return late_success;
  }());
  CHECK(std::chrono::steady_clock::now() - t0 < std::chrono::seconds(10));
}

TEST_CASE("simulations are seed-determined and logged as JSON lines") {
  SimulationConfig c;
  c.n_jobs = 40;
  c.crash_prob = 0.3;
  c.seed = 5;
  const auto a = run_simulation(c), b = run_simulation(c);
  std::ostringstream la, lb;
  write_event_log(la, a.events);
  write_event_log(lb, b.events);
  CHECK(la.str() == lb.str());
  c.seed = 6;
  std::ostringstream lc;
  write_event_log(lc, run_simulation(c).events);
  CHECK(lc.str() != la.str());

  std::istringstream in(la.str());
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j.contains("t"));
    CHECK(j.contains("entity"));
    CHECK(j["transition"].get<std::string>().find("->") != std::string::npos);
    ++n;
  }
  CHECK(n == a.events.size());
  CHECK(summary_json(a)["jobs"] == 40);
}

TEST_CASE("simulation config validation") {
  SimulationConfig c;
  c.crash_prob = 1.5;
  CHECK_THROWS_AS(run_simulation(c), std::invalid_argument);
  c = {};
  c.min_duration = 10;
  c.max_duration = 5;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.max_time = 50;
  c.n_jobs = 100;
  CHECK_THROWS_AS(run_simulation(c), std::runtime_error);
  c = {};
  c.crash_prob = 0.25;
  c.seed = 9;
  CHECK(to_json(simulation_config_from_json(to_json(c))) == to_json(c));
}
