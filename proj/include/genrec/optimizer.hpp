// Copyright 2026 The GenRec Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "genrec/tensor.hpp"

namespace genrec {

// Named collection of trainable tensors. Order is insertion order and is
// part of the contract: optimizer slots and checkpoints index by position.
struct ParamSet {
  std::vector<std::string> names;
  std::vector<Tensor> values;

  size_t add(std::string name, Tensor t) {
    for (const auto& n : names)
      check(n != name, "param set: duplicate name '", name, "'");
    names.push_back(std::move(name));
    values.push_back(std::move(t));
    return values.size() - 1;
  }

  Tensor& operator[](size_t i) { return values[i]; }
  const Tensor& operator[](size_t i) const { return values[i]; }
  size_t size() const { return values.size(); }

  int64_t numel() const {
    int64_t n = 0;
    for (const auto& t : values) n += t.numel();
    return n;
  }
};

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// cos half-wave decay from base_lr to 0 over total_steps.
inline double cosine_lr(double base_lr, int64_t step, int64_t total_steps) {
  check(total_steps > 0, "cosine_lr: total_steps must be positive, got ",
        total_steps);
  if (step >= total_steps) return 0.0;
  double frac = static_cast<double>(step) / static_cast<double>(total_steps);
  return base_lr * 0.5 * (1.0 + std::cos(M_PI * frac));
}

// AdamW with decoupled weight decay and bias-corrected moments.
// Decay multiplies the parameter by (1 - lr*wd) independently of the
// gradient-based update.
class AdamW {
 public:
  AdamW(AdamWConfig cfg, const ParamSet& params) : cfg_(cfg) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const auto& t : params.values) {
      m_.emplace_back(Tensor::zeros(t.shape));
      v_.emplace_back(Tensor::zeros(t.shape));
    }
  }

  // grads[i] pairs with params.values[i]. lr_scale rescales cfg.lr for this
  // step (schedules). Throws on any non-finite gradient, naming the tensor.
  void step(ParamSet& params, const std::vector<Tensor>& grads,
            double lr_scale = 1.0) {
    check(grads.size() == params.size(), "adamw: ", grads.size(),
          " gradients for ", params.size(), " parameters");
    ++t_;
    double lr = cfg_.lr * lr_scale;
    double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (size_t p = 0; p < params.size(); ++p) {
      Tensor& w = params.values[p];
      const Tensor& g = grads[p];
      check(g.shape == w.shape, "adamw: gradient shape ", shape_str(g.shape),
            " does not match parameter '", params.names[p], "' ",
            shape_str(w.shape));
      Tensor& m = m_[p];
      Tensor& v = v_[p];
      for (int64_t i = 0; i < w.numel(); ++i) {
        double gi = g.data[i];
        check(std::isfinite(gi), "adamw: non-finite gradient in '",
              params.names[p], "' at flat index ", i, " on step ", t_);
        m.data[i] = cfg_.beta1 * m.data[i] + (1.0 - cfg_.beta1) * gi;
        v.data[i] = cfg_.beta2 * v.data[i] + (1.0 - cfg_.beta2) * gi * gi;
        double mhat = m.data[i] / bc1;
        double vhat = v.data[i] / bc2;
        w.data[i] *= 1.0 - lr * cfg_.weight_decay;
        w.data[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
    }
  }

  int64_t steps_taken() const { return t_; }
  const AdamWConfig& config() const { return cfg_; }

  // Checkpoint access. first/second moments index params positionally.
  std::vector<Tensor>& moments_m() { return m_; }
  std::vector<Tensor>& moments_v() { return v_; }
  const std::vector<Tensor>& moments_m() const { return m_; }
  const std::vector<Tensor>& moments_v() const { return v_; }
  void set_steps_taken(int64_t t) { t_ = t; }

 private:
  AdamWConfig cfg_;
  int64_t t_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

}  // namespace genrec
