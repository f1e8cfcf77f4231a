#include "maldistill/distill/train.hpp"

#include <cmath>
#include <numeric>

#include "maldistill/core/optim.hpp"
#include "maldistill/core/random.hpp"

namespace maldistill::distill {

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (!(lr > 0) || !std::isfinite(lr)) throw std::invalid_argument("lr must be positive");
  if (!(drop_factor > 0)) throw std::invalid_argument("drop_factor must be positive");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (momentum < 0 || momentum >= 1) throw std::invalid_argument("momentum must lie in [0, 1)");
  if (weight_decay < 0) throw std::invalid_argument("weight_decay must be >= 0");
}

double TrainConfig::lr_at(std::size_t epoch) const {
  double rate = lr;
  for (auto m : lr_drop_epochs) {
    if (epoch >= m) rate /= drop_factor;
  }
  return rate;
}

TrainConfig TrainConfig::opcode_profile() {
  TrainConfig c;
  c.lr_drop_epochs = {30, 80};
  return c;
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},           {"lr", c.lr},
          {"lr_drop_epochs", c.lr_drop_epochs}, {"drop_factor", c.drop_factor},
          {"momentum", c.momentum},       {"weight_decay", c.weight_decay},
          {"batch_size", c.batch_size},   {"seed", c.seed}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.lr = j.value("lr", c.lr);
  c.lr_drop_epochs = j.value("lr_drop_epochs", c.lr_drop_epochs);
  c.drop_factor = j.value("drop_factor", c.drop_factor);
  c.momentum = j.value("momentum", c.momentum);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

void TrainData::validate() const {
  if (labels.empty()) throw std::invalid_argument("training data is empty");
  if (views.empty()) throw std::invalid_argument("training data has no feature views");
  for (const auto* v : views) {
    if (!v || v->n_samples() != labels.size()) {
      throw std::invalid_argument("feature view row count does not match the labels");
    }
  }
  if (!ids.empty() && ids.size() != labels.size()) {
    throw std::invalid_argument("sample id count does not match the labels");
  }
  for (int y : labels) {
    if (y != 0 && y != 1) throw std::invalid_argument("training labels must be 0 or 1");
  }
}

std::vector<core::TensorF> TrainData::batch(std::span<const std::size_t> rows) const {
  std::vector<core::TensorF> out;
  out.reserve(views.size());
  for (const auto* v : views) out.push_back(v->gather(rows));
  return out;
}

nlohmann::json to_json(const EpochLog& e) {
  nlohmann::json j = {{"epoch", e.epoch},
                      {"lr", e.lr},
                      {"loss", e.loss},
                      {"train_accuracy", e.train_accuracy}};
  if (e.val_accuracy >= 0) j["val_accuracy"] = e.val_accuracy;
  return j;
}

std::vector<int> argmax_rows(const core::TensorF& logits) {
  std::vector<int> out(logits.dim(0));
  const std::size_t k = logits.dim(1);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < k; ++c) {
      if (logits.at(i, c) > logits.at(i, best)) best = c;
    }
    out[i] = static_cast<int>(best);
  }
  return out;
}

double accuracy(const std::vector<int>& predictions, const std::vector<int>& labels) {
  if (predictions.size() != labels.size() || labels.empty()) {
    throw std::invalid_argument("accuracy: length mismatch");
  }
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hit += predictions[i] == labels[i];
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

namespace {

template <typename Forward>
core::TensorF infer_rows(const TrainData& data, std::size_t batch, Forward&& forward) {
  data.validate();
  if (batch < 1) throw std::invalid_argument("inference batch must be >= 1");
  core::TensorF out({data.size(), nn::kNumClasses});
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < data.size(); start += batch) {
    rows.resize(std::min(batch, data.size() - start));
    std::iota(rows.begin(), rows.end(), start);
    const auto views = data.batch(rows);
    const auto logits = forward(std::span<const core::TensorF>(views));
    std::copy(logits.values().begin(), logits.values().end(),
              out.data() + start * nn::kNumClasses);
  }
  return out;
}

using LossFn = std::function<BatchLoss(const core::TensorF& logits, std::span<const std::size_t> rows,
                                       std::span<const int> labels)>;

TrainResult run_training(nn::Network<float>& net, const TrainData& data, const TrainConfig& tc,
                         const TrainData* val, const EpochCallback& on_epoch, const LossFn& loss_fn) {
  tc.validate();
  data.validate();
  if (data.views.size() != net.input_dims().size()) {
    throw std::invalid_argument("network expects " + std::to_string(net.input_dims().size()) +
                                " feature views, got " + std::to_string(data.views.size()));
  }
  for (std::size_t v = 0; v < data.views.size(); ++v) {
    if (data.views[v]->n_features() != net.input_dims()[v]) {
      throw std::invalid_argument("feature view " + std::to_string(v) + " has " +
                                  std::to_string(data.views[v]->n_features()) +
                                  " columns but the network expects " +
                                  std::to_string(net.input_dims()[v]));
    }
  }

  core::SgdMomentum<float> opt(net.parameters(), {tc.momentum, tc.weight_decay});
  core::Rng shuffle_rng(tc.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  std::vector<int> batch_labels;
  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    const double lr = tc.lr_at(epoch);
    shuffle_rng.shuffle(order);
    double loss_sum = 0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += tc.batch_size) {
      const std::size_t end = std::min(order.size(), start + tc.batch_size);
      std::span<const std::size_t> rows(order.data() + start, end - start);
      batch_labels.resize(rows.size());
      for (std::size_t k = 0; k < rows.size(); ++k) batch_labels[k] = data.labels[rows[k]];

      const auto views = data.batch(rows);
      nn::ModelOutput<float> out;
      try {
        out = net.forward(std::span<const core::TensorF>(views), core::Mode::train);
      } catch (const std::invalid_argument& e) {
        throw TrainingError("forward pass failed at epoch " + std::to_string(epoch) + ", batch starting at " +
                            std::to_string(start) + ": " + e.what());
      }
      if (!out.logits.all_finite()) {
        throw TrainingError("non-finite logits at epoch " + std::to_string(epoch) + ", batch starting at " +
                            std::to_string(start) + " (lr " + std::to_string(lr) + ")");
      }
      const auto loss = loss_fn(out.logits, rows, batch_labels);
      if (!std::isfinite(loss.loss)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch starting at " +
                            std::to_string(start) + " (lr " + std::to_string(lr) + ")");
      }
      opt.zero_grad();
      net.backward(loss.grad);
      opt.step(lr);
      for (auto* p : net.parameters()) {
        if (!p->value.all_finite()) {
          throw TrainingError("parameter '" + p->name + "' became non-finite at epoch " +
                              std::to_string(epoch) + " (lr " + std::to_string(lr) + ")");
        }
      }

      loss_sum += loss.loss * static_cast<double>(rows.size());
      const auto pred = argmax_rows(out.logits);
      for (std::size_t k = 0; k < rows.size(); ++k) correct += pred[k] == batch_labels[k];
    }
    EpochLog e;
    e.epoch = epoch;
    e.lr = lr;
    e.loss = loss_sum / static_cast<double>(data.size());
    e.train_accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
    if (val) e.val_accuracy = accuracy(argmax_rows(infer_logits(net, *val)), val->labels);
    result.log.push_back(e);
    if (on_epoch) on_epoch(e);
  }
  return result;
}

}  // namespace

core::TensorF infer_logits(nn::Network<float>& net, const TrainData& data, std::size_t batch) {
  return infer_rows(data, batch, [&](std::span<const core::TensorF> views) {
    return net.forward(views, core::Mode::eval).logits;
  });
}

core::TensorF infer_ensemble(std::span<nn::Network<float>* const> members, const TrainData& data,
                             std::size_t batch) {
  return infer_rows(data, batch, [&](std::span<const core::TensorF> views) {
    return ensemble_logits(members, views);
  });
}

TrainResult train_supervised(nn::Network<float>& net, const TrainData& data, const TrainConfig& tc,
                             const TrainData* val, const EpochCallback& on_epoch) {
  return run_training(net, data, tc, val, on_epoch,
                      [](const core::TensorF& logits, std::span<const std::size_t>,
                         std::span<const int> labels) { return ce_batch(logits, labels); });
}

TrainResult train_distilled(nn::Network<float>& student, const TrainData& student_data,
                            std::span<nn::Network<float>* const> teachers,
                            const TrainData& teacher_data, const DistillConfig& cfg,
                            const TrainConfig& tc, const TrainData* val,
                            const EpochCallback& on_epoch) {
  cfg.validate();
  student_data.validate();
  teacher_data.validate();
  if (teachers.empty()) throw std::invalid_argument("distillation needs at least one teacher");
  if (teacher_data.labels != student_data.labels ||
      (!teacher_data.ids.empty() && !student_data.ids.empty() && teacher_data.ids != student_data.ids)) {
    throw std::invalid_argument("teacher and student data are not aligned sample by sample");
  }
  // The teachers are frozen and deterministic in eval mode, so their logits
  // for every training sample are computed once up front.
  const core::TensorF teacher_logits = cfg.alpha == 1.0
                                           ? core::TensorF({student_data.size(), nn::kNumClasses})
                                           : infer_ensemble(teachers, teacher_data);
  core::TensorF batch_teacher;
  return run_training(
      student, student_data, tc, val, on_epoch,
      [&](const core::TensorF& logits, std::span<const std::size_t> rows, std::span<const int> labels) {
        batch_teacher = core::TensorF({rows.size(), nn::kNumClasses});
        for (std::size_t k = 0; k < rows.size(); ++k) {
          for (std::size_t c = 0; c < nn::kNumClasses; ++c) {
            batch_teacher.at(k, c) = teacher_logits.at(rows[k], c);
          }
        }
        return kd_batch(cfg, logits, batch_teacher, labels);
      });
}

}  // namespace maldistill::distill
