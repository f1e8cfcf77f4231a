#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "maldistill/distill/losses.hpp"
#include "maldistill/featurize/feature_matrix.hpp"
#include "maldistill/nn/model.hpp"

namespace maldistill::distill {

struct TrainConfig {
  std::size_t epochs = 100;
  double lr = 0.02;
  std::vector<std::size_t> lr_drop_epochs{50};
  double drop_factor = 10.0;
  double momentum = 0.9;
  double weight_decay = 1e-3;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;

  void validate() const;
  /// Learning rate in effect during 0-based epoch `epoch`.
  double lr_at(std::size_t epoch) const;
  /// Schedule used for the opcode view: drops at epochs 30 and 80.
  static TrainConfig opcode_profile();
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

/// Aligned feature views of one sample set plus labels. Views are borrowed.
struct TrainData {
  std::vector<const featurize::FeatureMatrix*> views;
  std::vector<int> labels;
  std::vector<std::string> ids;

  std::size_t size() const { return labels.size(); }
  void validate() const;
  std::vector<core::TensorF> batch(std::span<const std::size_t> rows) const;
};

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0;
  double loss = 0;
  double train_accuracy = 0;
  double val_accuracy = -1;  // -1 when no validation data was given
};

nlohmann::json to_json(const EpochLog& e);

struct TrainResult {
  std::vector<EpochLog> log;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Cross-entropy training with SGD/momentum. Shuffling draws from a stream
/// seeded by tc.seed; parameter initialization is the network's own.
TrainResult train_supervised(nn::Network<float>& net, const TrainData& data, const TrainConfig& tc,
                             const TrainData* val = nullptr, const EpochCallback& on_epoch = {});

/// Trains `student` on kd_loss against the averaged logits of `teachers`,
/// which read `teacher_data` (the same samples, possibly other views).
/// Teachers run in eval mode and are never updated.
TrainResult train_distilled(nn::Network<float>& student, const TrainData& student_data,
                            std::span<nn::Network<float>* const> teachers,
                            const TrainData& teacher_data, const DistillConfig& cfg,
                            const TrainConfig& tc, const TrainData* val = nullptr,
                            const EpochCallback& on_epoch = {});

/// Eval-mode logits for every sample, [N, 2].
core::TensorF infer_logits(nn::Network<float>& net, const TrainData& data, std::size_t batch = 256);
core::TensorF infer_ensemble(std::span<nn::Network<float>* const> members, const TrainData& data,
                             std::size_t batch = 256);

std::vector<int> argmax_rows(const core::TensorF& logits);
double accuracy(const std::vector<int>& predictions, const std::vector<int>& labels);

}  // namespace maldistill::distill
