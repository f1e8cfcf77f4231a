#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "maldistill/distill/losses.hpp"
#include "maldistill/distill/train.hpp"
#include "maldistill/eval/synthetic.hpp"
#include "maldistill/orchestrator/simulation.hpp"

namespace maldistill::cli {

inline const std::vector<std::string> kCommands = {"extract", "select", "gen-data", "train",
                                                   "distill", "eval",   "bench",    "orchestrate-sim"};

/// Everything one subcommand needs. Written next to every artifact as
/// manifest.json; passing that file back through --config reproduces the run.
struct RunConfig {
  std::string command;
  std::uint64_t seed = 0;

  std::vector<std::string> inputs;    // raw samples, listings, reports or a feature file
  std::string labels;                 // JSON object mapping sample id to 0/1
  std::string data;                   // dataset directory
  std::vector<std::string> teachers;  // teacher checkpoint directories
  std::string checkpoint;             // checkpoint directory for eval and bench
  std::vector<std::string> arch;      // builtin names or spec paths; several build a latent aggregation
  std::vector<std::string> views;     // view per arch entry; inferred when empty

  std::string view = "ember";  // extract
  std::size_t ngram = 3;
  std::size_t hash_dim = std::size_t{1} << 20;

  std::string method = "mi";  // select: mi or prune
  double percentile = 98.0;
  double threshold = 0.95;

  std::string split = "test";  // eval: train, val, test or all
  std::size_t samples = 100;   // bench

  distill::TrainConfig train;
  distill::DistillConfig distill;
  eval::SyntheticSpec synthetic;
  orchestrator::SimulationConfig simulation;

  /// Propagates `seed` into every section that draws random numbers.
  void apply_seed();
  void validate() const;
};

/// Output paths are not part of the document, so a re-run may target a new directory.
nlohmann::json to_json(const RunConfig& c);
/// Missing keys keep their defaults; unknown keys are rejected.
RunConfig run_config_from_json(const nlohmann::json& j);

/// Seed for the `salt`-th independently initialised component of a run.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt);

/// Honours MALDISTILL_THREADS by capping the BLAS thread pool.
void apply_thread_limit();

/// Runs one subcommand. args[0] is the program name. Progress goes to `out`;
/// a failure writes one JSON line {"error", "message"} to `err`, removes the
/// files this run created and returns nonzero.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int dispatch(int argc, const char* const* argv);

}  // namespace maldistill::cli
