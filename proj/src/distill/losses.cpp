#include "maldistill/distill/losses.hpp"

#include <cmath>
#include <stdexcept>

#include "maldistill/core/ops.hpp"

namespace maldistill::distill {

std::string to_string(LossKind k) { return k == LossKind::kd_kl ? "kd-kl" : "kd-mse"; }

LossKind parse_loss_kind(const std::string& s) {
  if (s == "kd-kl" || s == "kd_kl") return LossKind::kd_kl;
  if (s == "kd-mse" || s == "kd_mse") return LossKind::kd_mse;
  throw std::invalid_argument("unknown loss kind: " + s + " (expected kd-kl or kd-mse)");
}

void DistillConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw std::invalid_argument("alpha must lie in [0, 1], got " + std::to_string(alpha));
  }
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw std::invalid_argument("tau must be positive, got " + std::to_string(tau));
  }
  if (teacher_count < 1) throw std::invalid_argument("teacher_count must be >= 1");
}

nlohmann::json to_json(const DistillConfig& c) {
  return {{"alpha", c.alpha}, {"tau", c.tau}, {"loss", to_string(c.loss)},
          {"teacher_count", c.teacher_count}};
}

DistillConfig distill_config_from_json(const nlohmann::json& j) {
  DistillConfig c;
  c.alpha = j.value("alpha", c.alpha);
  c.tau = j.value("tau", c.tau);
  if (j.contains("loss")) c.loss = parse_loss_kind(j.at("loss").get<std::string>());
  c.teacher_count = j.value("teacher_count", c.teacher_count);
  c.validate();
  return c;
}

namespace {

void same_size(std::span<const double> a, std::span<const double> b, const char* what) {
  if (a.size() != b.size() || a.empty()) {
    throw std::invalid_argument(std::string(what) + ": vectors must be non-empty and the same size");
  }
}

// ln softmax(z / tau), exact in the tails where the probabilities underflow.
std::vector<double> log_softmax_tau(std::span<const double> z, double tau) {
  double m = z[0];
  for (double v : z) m = std::max(m, v);
  double s = 0;
  for (double v : z) s += std::exp((v - m) / tau);
  const double lse = std::log(s);
  std::vector<double> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = (z[i] - m) / tau - lse;
  return out;
}

}  // namespace

double ce_loss(std::span<const double> p, std::span<const double> y) {
  same_size(p, y, "ce_loss");
  double s = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (y[i] != 0) s -= y[i] * std::log(std::max(p[i], kProbFloor));
  }
  return s;
}

double kd_kl_term(std::span<const double> z_t, std::span<const double> z_s, double tau) {
  same_size(z_t, z_s, "kd_kl_term");
  if (!(tau > 0)) throw std::invalid_argument("kd_kl_term: tau must be positive");
  const auto pt = core::softmax_tau(z_t, tau);
  const auto lt = log_softmax_tau(z_t, tau);
  const auto ls = log_softmax_tau(z_s, tau);
  double kl = 0;
  for (std::size_t i = 0; i < pt.size(); ++i) {
    if (pt[i] > 0) kl += pt[i] * (lt[i] - ls[i]);
  }
  return tau * tau * kl;
}

double kd_mse_term(std::span<const double> z_t, std::span<const double> z_s) {
  same_size(z_t, z_s, "kd_mse_term");
  double s = 0;
  for (std::size_t i = 0; i < z_t.size(); ++i) s += (z_s[i] - z_t[i]) * (z_s[i] - z_t[i]);
  return s;
}

double kd_loss(const DistillConfig& cfg, std::span<const double> z_s,
               std::span<const double> z_t, std::span<const double> y) {
  cfg.validate();
  const double ce = ce_loss(core::softmax_tau(z_s, 1.0), y);
  if (cfg.alpha == 1.0) return ce;
  const double term = cfg.loss == LossKind::kd_kl ? kd_kl_term(z_t, z_s, cfg.tau)
                                                  : kd_mse_term(z_t, z_s);
  return cfg.alpha * ce + (1.0 - cfg.alpha) * term;
}

std::vector<double> kd_loss_grad(const DistillConfig& cfg, std::span<const double> z_s,
                                 std::span<const double> z_t, std::span<const double> y) {
  cfg.validate();
  same_size(z_s, y, "kd_loss_grad");
  const auto p = core::softmax_tau(z_s, 1.0);
  double ysum = 0;
  for (double v : y) ysum += v;
  std::vector<double> g(z_s.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = cfg.alpha * (ysum * p[i] - y[i]);
  if (cfg.alpha == 1.0) return g;
  same_size(z_t, z_s, "kd_loss_grad");
  const double w = 1.0 - cfg.alpha;
  if (cfg.loss == LossKind::kd_kl) {
    const auto pt = core::softmax_tau(z_t, cfg.tau);
    const auto ps = core::softmax_tau(z_s, cfg.tau);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += w * cfg.tau * (ps[i] - pt[i]);
  } else {
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += w * 2.0 * (z_s[i] - z_t[i]);
  }
  return g;
}

namespace {

BatchLoss batch_loss(const DistillConfig* cfg, const core::TensorF& logits,
                     const core::TensorF* teacher, std::span<const int> labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
    throw std::invalid_argument("loss: logits must be [N, K] with one label per row");
  }
  if (teacher && teacher->shape() != logits.shape()) {
    throw std::invalid_argument("loss: teacher and student logits differ in shape");
  }
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  BatchLoss out{0.0, core::TensorF(logits.shape())};
  std::vector<double> zs(k), zt(k), y(k);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k) {
      throw std::invalid_argument("loss: label " + std::to_string(labels[i]) + " out of range");
    }
    for (std::size_t c = 0; c < k; ++c) {
      zs[c] = logits.at(i, c);
      y[c] = static_cast<int>(c) == labels[i] ? 1.0 : 0.0;
      if (teacher) zt[c] = teacher->at(i, c);
    }
    double loss;
    std::vector<double> g;
    if (cfg) {
      loss = kd_loss(*cfg, zs, zt, y);
      g = kd_loss_grad(*cfg, zs, zt, y);
    } else {
      loss = ce_loss(core::softmax_tau<double>(zs, 1.0), y);
      const auto p = core::softmax_tau<double>(zs, 1.0);
      g.resize(k);
      for (std::size_t c = 0; c < k; ++c) g[c] = p[c] - y[c];
    }
    out.loss += loss;
    for (std::size_t c = 0; c < k; ++c) out.grad.at(i, c) = static_cast<float>(g[c] / static_cast<double>(n));
  }
  out.loss /= static_cast<double>(n);
  return out;
}

}  // namespace

BatchLoss ce_batch(const core::TensorF& logits, std::span<const int> labels) {
  return batch_loss(nullptr, logits, nullptr, labels);
}

BatchLoss kd_batch(const DistillConfig& cfg, const core::TensorF& student_logits,
                   const core::TensorF& teacher_logits, std::span<const int> labels) {
  cfg.validate();
  if (cfg.alpha == 1.0) return ce_batch(student_logits, labels);
  return batch_loss(&cfg, student_logits, &teacher_logits, labels);
}

core::TensorF ensemble_logits(std::span<nn::Network<float>* const> members,
                              std::span<const core::TensorF> views) {
  if (members.empty()) throw std::invalid_argument("ensemble_logits: empty ensemble");
  // Accumulating in double makes the mean of identical members exact.
  std::vector<double> sum;
  core::Shape shape;
  for (auto* m : members) {
    auto out = m->forward(views, core::Mode::eval).logits;
    if (sum.empty()) {
      shape = out.shape();
      sum.assign(out.numel(), 0.0);
    } else if (out.shape() != shape) {
      throw std::invalid_argument("ensemble members disagree on logit shape");
    }
    for (std::size_t i = 0; i < out.numel(); ++i) sum[i] += out[i];
  }
  core::TensorF mean(shape);
  const double n = static_cast<double>(members.size());
  for (std::size_t i = 0; i < sum.size(); ++i) mean[i] = static_cast<float>(sum[i] / n);
  return mean;
}

}  // namespace maldistill::distill
