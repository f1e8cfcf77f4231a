#pragma once

#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "maldistill/core/tensor.hpp"
#include "maldistill/nn/model.hpp"

namespace maldistill::distill {

enum class LossKind { kd_kl, kd_mse };

std::string to_string(LossKind k);
/// Accepts "kd-kl", "kd_kl", "kd-mse" and "kd_mse".
LossKind parse_loss_kind(const std::string& s);

inline constexpr double kProbFloor = 1e-12;

struct DistillConfig {
  double alpha = 0.5;
  double tau = 5.0;
  LossKind loss = LossKind::kd_mse;
  std::size_t teacher_count = 1;

  void validate() const;
};

nlohmann::json to_json(const DistillConfig& c);
DistillConfig distill_config_from_json(const nlohmann::json& j);

/// -sum_i y_i ln max(p_i, 1e-12).
double ce_loss(std::span<const double> p, std::span<const double> y);
/// tau^2 * KL(softmax(zT/tau) || softmax(zS/tau)).
double kd_kl_term(std::span<const double> z_t, std::span<const double> z_s, double tau);
/// ||zS - zT||^2.
double kd_mse_term(std::span<const double> z_t, std::span<const double> z_s);
/// alpha * CE(softmax(zS), y) + (1 - alpha) * term.
double kd_loss(const DistillConfig& cfg, std::span<const double> z_s,
               std::span<const double> z_t, std::span<const double> y);

/// d/dzS of kd_loss for one sample.
std::vector<double> kd_loss_grad(const DistillConfig& cfg, std::span<const double> z_s,
                                 std::span<const double> z_t, std::span<const double> y);

struct BatchLoss {
  double loss = 0;       // mean over the batch
  core::TensorF grad;    // d loss / d logits, [N, K]
};

/// Mean cross-entropy over a [N, K] batch of logits with integer labels.
BatchLoss ce_batch(const core::TensorF& logits, std::span<const int> labels);
/// Mean kd_loss over a batch. With alpha = 1 this is ce_batch exactly.
BatchLoss kd_batch(const DistillConfig& cfg, const core::TensorF& student_logits,
                   const core::TensorF& teacher_logits, std::span<const int> labels);

/// Element-wise mean of the members' eval-mode logits.
core::TensorF ensemble_logits(std::span<nn::Network<float>* const> members,
                              std::span<const core::TensorF> views);

}  // namespace maldistill::distill
