#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace maldistill::eval {

/// Work for one sample, identified by its index. An empty stage costs zero.
using StageFn = std::function<void(std::size_t sample)>;

struct Pipeline {
  StageFn analysis;
  StageFn feature_extraction;
  StageFn inference;
};

struct StageFailure {
  std::size_t sample;
  std::string stage;
  std::string message;
};

/// Mean wall-clock milliseconds per successful sample.
struct TimingReport {
  double analysis_ms = 0;
  double feature_extraction_ms = 0;
  double inference_ms = 0;
  double end_to_end_ms = 0;
  std::size_t n_measured = 0;
  std::vector<StageFailure> failures;
};

/// Runs every stage for samples [0, n) on a monotonic clock after one
/// unmeasured warm-up pass over sample 0. A sample whose stage throws is
/// recorded in `failures` and left out of every mean.
TimingReport time_breakdown(const Pipeline& pipeline, std::size_t n_samples);

nlohmann::json to_json(const TimingReport& r);

/// Aligned text table with columns Methods, Analysis, Feat-Extr., Inference,
/// E2E Delay (milliseconds), one row per named report.
std::string render_timing_table(const std::vector<std::pair<std::string, TimingReport>>& rows);

}  // namespace maldistill::eval
