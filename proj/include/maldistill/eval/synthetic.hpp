#pragma once

#include <cstdint>

#include "json.hpp"
#include "maldistill/eval/dataset.hpp"

namespace maldistill::eval {

/// Linear-Gaussian multi-view generator. Each sample draws a label y and
/// n_components class-evidence latents c_k = (2y - 1) * separation + N(0, 1).
/// The static view carries the first round(rho * n_components) latents, the
/// dynamic view the rest, and the opcode view all of them at opcode_strength.
/// Every latent is written into a localized window of its view with a fixed
/// sign; views also receive private nuisance factors and measurement
/// noise. Dynamic and opcode values are thresholded to binary.
struct SyntheticSpec {
  std::size_t n_samples = 2000;
  double class_balance = 0.5;  // probability of the malicious class
  std::size_t static_dim = 2381;
  std::size_t dynamic_dim = 4096;
  std::size_t opcode_dim = 1024;  // 0 omits the opcode view
  double static_strength = 1.0;
  double dynamic_strength = 1.0;
  double opcode_strength = 0.25;
  double rho = 0.5;
  double noise = 1.0;
  std::size_t n_components = 16;
  double separation = 0.5;
  std::size_t window = 32;
  std::size_t n_nuisance = 4;
  double binary_threshold = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
  /// Latents expressed by the static view; the dynamic view gets the rest.
  std::size_t static_components() const;
};

nlohmann::json to_json(const SyntheticSpec& s);
SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j);

/// Views: ember (dense static), apiarg (binary dynamic) and, when opcode_dim
/// is non-zero, opcode (binary). Fully determined by the spec.
Dataset generate_synthetic(const SyntheticSpec& spec);

/// Accuracy of the Bayes rule that sees `k` noise-free latents, balanced
/// classes: Phi(separation * sqrt(k)).
double latent_bayes_accuracy(double separation, std::size_t k);

}  // namespace maldistill::eval
