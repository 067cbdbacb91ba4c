#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>

#include "hfr/errors.hpp"
#include "hfr/nn/layers.hpp"

namespace hfr::nn {

// Learning-rate and momentum schedule: rate(e) = lr / decay_factor^(e/period)
// with integer division, momentum steps from start to after at the switch
// epoch. decay_period = 0 disables decay (constant rate, used when
// fine-tuning).
struct TrainSchedule {
  double lr = 1.0;
  double decay_factor = 5.0;
  int decay_period = 10;
  double momentum_start = 0.5;
  double momentum_after = 0.9;
  int momentum_switch_epoch = 10;
  int epochs = 40;
  int batch_size = 32;

  double learning_rate_at(int epoch) const {
    if (decay_period <= 0) return lr;
    return lr / std::pow(decay_factor, static_cast<double>(epoch / decay_period));
  }

  double momentum_at(int epoch) const {
    return epoch < momentum_switch_epoch ? momentum_start : momentum_after;
  }

  void validate() const {
    if (lr <= 0.0) throw ConfigError("schedule: learning rate must be > 0");
    if (decay_factor <= 1.0) throw ConfigError("schedule: decay factor must be > 1");
    if (decay_period < 0) throw ConfigError("schedule: decay period must be >= 0");
    if (momentum_switch_epoch > epochs)
      throw ConfigError("schedule: momentum switch epoch must be <= epochs");
    if (epochs < 0) throw ConfigError("schedule: epochs must be >= 0");
    if (batch_size < 1) throw ConfigError("schedule: batch size must be >= 1");
  }
};

template <typename T>
class SgdMomentum {
 public:
  explicit SgdMomentum(double lr, double momentum = 0.9)
      : lr_(static_cast<T>(lr)), momentum_(static_cast<T>(momentum)) {}

  void set_lr(double lr) { lr_ = static_cast<T>(lr); }
  void set_momentum(double m) { momentum_ = static_cast<T>(m); }
  double lr() const { return static_cast<double>(lr_); }

  void step(ParamRegistry<T>& params) {
    for (auto& p : params) {
      Tensor<T>& vel = velocity_.try_emplace(p.name, Tensor<T>(p.value->shape()))
                           .first->second;
      for (std::size_t i = 0; i < p.value->numel(); ++i) {
        vel[i] = momentum_ * vel[i] + (*p.grad)[i];
        (*p.value)[i] -= lr_ * vel[i];
      }
    }
  }

  std::unordered_map<std::string, Tensor<T>>& state() { return velocity_; }

 private:
  T lr_, momentum_;
  std::unordered_map<std::string, Tensor<T>> velocity_;
};

template <typename T>
class Adam {
 public:
  Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(static_cast<T>(lr)), beta1_(static_cast<T>(beta1)),
        beta2_(static_cast<T>(beta2)), eps_(static_cast<T>(eps)) {}

  void set_lr(double lr) { lr_ = static_cast<T>(lr); }
  void set_beta1(double b1) { beta1_ = static_cast<T>(b1); }
  double lr() const { return static_cast<double>(lr_); }
  std::int64_t steps() const { return t_; }
  void set_steps(std::int64_t t) { t_ = t; }

  void step(ParamRegistry<T>& params) {
    ++t_;
    const T bc1 = T(1) - std::pow(beta1_, static_cast<T>(t_));
    const T bc2 = T(1) - std::pow(beta2_, static_cast<T>(t_));
    for (auto& p : params) {
      Tensor<T>& m = m_.try_emplace(p.name, Tensor<T>(p.value->shape())).first->second;
      Tensor<T>& v = v_.try_emplace(p.name, Tensor<T>(p.value->shape())).first->second;
      for (std::size_t i = 0; i < p.value->numel(); ++i) {
        T g = (*p.grad)[i];
        m[i] = beta1_ * m[i] + (T(1) - beta1_) * g;
        v[i] = beta2_ * v[i] + (T(1) - beta2_) * g * g;
        T mhat = m[i] / bc1;
        T vhat = v[i] / bc2;
        (*p.value)[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }

  std::unordered_map<std::string, Tensor<T>>& m_state() { return m_; }
  std::unordered_map<std::string, Tensor<T>>& v_state() { return v_; }

 private:
  T lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::unordered_map<std::string, Tensor<T>> m_, v_;
};

}  // namespace hfr::nn
