#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "assl/nn/module.hpp"

namespace assl::optim {

enum class OptKind { lars, sgd };

inline OptKind opt_kind_from_string(const std::string& s) {
  if (s == "lars") return OptKind::lars;
  if (s == "sgd") return OptKind::sgd;
  throw std::invalid_argument("unknown optimizer '" + s + "' (expected lars or sgd)");
}

inline std::string to_string(OptKind k) {
  return k == OptKind::lars ? "lars" : "sgd";
}

struct OptimConfig {
  OptKind kind = OptKind::lars;
  double base_lr = 0.3;
  double momentum = 0.9;
  double weight_decay = 1e-6;
  double trust_coefficient = 0.001;  // LARS eta
  bool exclude_bias_and_norm = true;

  void validate() const {
    if (base_lr <= 0) throw std::invalid_argument("optim: base_lr must be > 0");
    if (momentum < 0 || momentum >= 1)
      throw std::invalid_argument("optim: momentum must be in [0,1)");
    if (weight_decay < 0)
      throw std::invalid_argument("optim: weight_decay must be >= 0");
  }
};

struct ScheduleConfig {
  double base_lr = 0.3;
  int64_t warmup_epochs = 10;
  int64_t total_epochs = 300;
  double min_lr = 0.0;
  int64_t steps_per_epoch = 1;

  void validate() const {
    if (warmup_epochs < 0 || warmup_epochs >= total_epochs)
      throw std::invalid_argument(
          "schedule: need 0 <= warmup_epochs < total_epochs");
    if (steps_per_epoch < 1)
      throw std::invalid_argument("schedule: steps_per_epoch must be >= 1");
  }
};

/// Learning rate under the linear scaling rule: reference_lr * batch/256.
inline double linear_scaled_lr(double reference_lr, int64_t batch_size) {
  if (batch_size < 1) throw std::invalid_argument("linear_scaled_lr: batch_size >= 1");
  return reference_lr * static_cast<double>(batch_size) / 256.0;
}

/// Linear ramp 0 -> base_lr across the warmup steps, then cosine decay to
/// min_lr; the ramp meets base_lr exactly at the first post-warmup step and
/// the final step lands exactly on min_lr.
inline double warmup_cosine_lr(int64_t step, const ScheduleConfig& cfg) {
  cfg.validate();
  const int64_t total = cfg.total_epochs * cfg.steps_per_epoch;
  if (step < 0 || step >= total)
    throw std::out_of_range("warmup_cosine_lr: step outside the run");
  const int64_t warmup = cfg.warmup_epochs * cfg.steps_per_epoch;
  if (step < warmup)
    return cfg.base_lr * static_cast<double>(step) / static_cast<double>(warmup);
  const int64_t span = std::max<int64_t>(1, total - 1 - warmup);
  const double t = static_cast<double>(step - warmup) / static_cast<double>(span);
  return cfg.min_lr +
         (cfg.base_lr - cfg.min_lr) * (1.0 + std::cos(M_PI * t)) / 2.0;
}

namespace detail {

template <typename T>
double l2_norm(const T* p, int64_t n) {
  double acc = 0;
  for (int64_t i = 0; i < n; ++i) acc += static_cast<double>(p[i]) * p[i];
  return std::sqrt(acc);
}

template <typename T>
void check_finite_grad(const T* g, int64_t n) {
  for (int64_t i = 0; i < n; ++i)
    if (!std::isfinite(static_cast<double>(g[i])))
      throw std::runtime_error("optimizer: non-finite gradient");
}

}  // namespace detail

/// Layer-wise adaptive update on one parameter array:
///   d = grad + weight_decay * param
///   local_lr = eta * ||param|| / ||d||   (1 if either norm is 0)
///   v <- momentum * v + lr * local_lr * d ; param <- param - v
/// Excluded arrays (biases, normalization affines) skip the adaptation and
/// the weight decay and take the plain momentum path.
template <typename T>
void lars_array_step(T* param, const T* grad, T* velocity, int64_t n,
                     double lr, double momentum, double weight_decay,
                     double eta, bool excluded) {
  detail::check_finite_grad(grad, n);
  double local_lr = 1.0;
  const double wd = excluded ? 0.0 : weight_decay;
  if (!excluded) {
    double wnorm = detail::l2_norm(param, n);
    double dnorm;
    if (wd == 0.0) {
      dnorm = detail::l2_norm(grad, n);
    } else {
      double acc = 0;
      for (int64_t i = 0; i < n; ++i) {
        double d = static_cast<double>(grad[i]) + wd * param[i];
        acc += d * d;
      }
      dnorm = std::sqrt(acc);
    }
    if (wnorm > 0 && dnorm > 0) local_lr = eta * wnorm / dnorm;
  }
  const double scale = lr * local_lr;
  for (int64_t i = 0; i < n; ++i) {
    double d = static_cast<double>(grad[i]) + wd * param[i];
    double v = momentum * velocity[i] + scale * d;
    velocity[i] = static_cast<T>(v);
    param[i] = static_cast<T>(param[i] - v);
  }
}

/// Classic SGD with momentum:
///   v <- momentum * v + (grad + weight_decay * param) ; param <- param - lr * v
template <typename T>
void sgd_array_step(T* param, const T* grad, T* velocity, int64_t n, double lr,
                    double momentum, double weight_decay) {
  detail::check_finite_grad(grad, n);
  for (int64_t i = 0; i < n; ++i) {
    double d = static_cast<double>(grad[i]) + weight_decay * param[i];
    double v = momentum * velocity[i] + d;
    velocity[i] = static_cast<T>(v);
    param[i] = static_cast<T>(param[i] - lr * v);
  }
}

/// Applies the configured rule across a parameter list, holding one velocity
/// slot per array. The learning rate is supplied per step by the schedule.
template <typename T>
class Optimizer {
public:
  using Param = typename nn::ParamStore<T>::Param;

  Optimizer(OptimConfig cfg, std::vector<Param> params)
      : cfg_(cfg), params_(std::move(params)) {
    cfg_.validate();
    velocity_.reserve(params_.size());
    for (const auto& p : params_)
      velocity_.push_back(Tensor<T>::zeros(p.var->value.shape()));
  }

  void step(double lr) {
    for (size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i];
      if (!p.var->grad.defined()) continue;
      const bool excluded = cfg_.exclude_bias_and_norm && p.norm_or_bias;
      const int64_t n = p.var->value.size();
      if (cfg_.kind == OptKind::lars) {
        lars_array_step(p.var->value.data(), p.var->grad.data(),
                        velocity_[i].data(), n, lr, cfg_.momentum,
                        cfg_.weight_decay, cfg_.trust_coefficient, excluded);
      } else {
        const double wd = excluded ? 0.0 : cfg_.weight_decay;
        sgd_array_step(p.var->value.data(), p.var->grad.data(),
                       velocity_[i].data(), n, lr, cfg_.momentum, wd);
      }
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.var->zero_grad();
  }

  const OptimConfig& config() const { return cfg_; }

private:
  OptimConfig cfg_;
  std::vector<Param> params_;
  std::vector<Tensor<T>> velocity_;
};

}  // namespace assl::optim
