#include "maldistill/eval/timing.hpp"

#include <chrono>
#include <cstdio>
#include <exception>
#include <sstream>

namespace maldistill::eval {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0, Clock::time_point t1) {
  return std::chrono::duration<double, std::milli>(t1 - t0).count();
}

}  // namespace

TimingReport time_breakdown(const Pipeline& pipeline, std::size_t n_samples) {
  struct Named {
    const char* name;
    const StageFn* fn;
  };
  const Named stages[] = {{"analysis", &pipeline.analysis},
                          {"feature_extraction", &pipeline.feature_extraction},
                          {"inference", &pipeline.inference}};
  if (n_samples > 0) {
    try {
      for (const auto& s : stages) {
        if (*s.fn) (*s.fn)(0);
      }
    } catch (const std::exception&) {
      // The measured pass records the failure for sample 0.
    }
  }
  TimingReport r;
  double sums[3] = {0, 0, 0};
  double e2e_sum = 0;
  for (std::size_t i = 0; i < n_samples; ++i) {
    double ms[3] = {0, 0, 0};
    bool ok = true;
    const auto start = Clock::now();
    for (std::size_t k = 0; k < 3 && ok; ++k) {
      if (!*stages[k].fn) continue;
      const auto t0 = Clock::now();
      try {
        (*stages[k].fn)(i);
      } catch (const std::exception& e) {
        r.failures.push_back({i, stages[k].name, e.what()});
        ok = false;
      }
      ms[k] = ms_since(t0, Clock::now());
    }
    const double e2e = ms_since(start, Clock::now());
    if (!ok) continue;
    for (std::size_t k = 0; k < 3; ++k) sums[k] += ms[k];
    e2e_sum += e2e;
    ++r.n_measured;
  }
  if (r.n_measured > 0) {
    const double n = static_cast<double>(r.n_measured);
    r.analysis_ms = sums[0] / n;
    r.feature_extraction_ms = sums[1] / n;
    r.inference_ms = sums[2] / n;
    r.end_to_end_ms = e2e_sum / n;
  }
  return r;
}

nlohmann::json to_json(const TimingReport& r) {
  nlohmann::json failures = nlohmann::json::array();
  for (const auto& f : r.failures) {
    failures.push_back({{"sample", f.sample}, {"stage", f.stage}, {"message", f.message}});
  }
  return {{"analysis_ms", r.analysis_ms},
          {"feature_extraction_ms", r.feature_extraction_ms},
          {"inference_ms", r.inference_ms},
          {"end_to_end_ms", r.end_to_end_ms},
          {"n_measured", r.n_measured},
          {"n_failed", r.failures.size()},
          {"failures", failures}};
}

std::string render_timing_table(const std::vector<std::pair<std::string, TimingReport>>& rows) {
  std::size_t name_w = 7;  // "Methods"
  for (const auto& [name, _] : rows) name_w = std::max(name_w, name.size());
  std::ostringstream out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-*s  %12s  %12s  %12s  %12s\n", static_cast<int>(name_w), "Methods",
                "Analysis", "Feat-Extr.", "Inference", "E2E Delay");
  out << buf;
  for (const auto& [name, r] : rows) {
    std::snprintf(buf, sizeof buf, "%-*s  %12.3f  %12.3f  %12.3f  %12.3f\n", static_cast<int>(name_w),
                  name.c_str(), r.analysis_ms, r.feature_extraction_ms, r.inference_ms, r.end_to_end_ms);
    out << buf;
  }
  return out.str();
}

}  // namespace maldistill::eval
