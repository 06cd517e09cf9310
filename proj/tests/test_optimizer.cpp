// Copyright 2026 The GenRec Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <limits>

#include "genrec/optimizer.hpp"

using genrec::AdamW;
using genrec::AdamWConfig;
using genrec::cosine_lr;
using genrec::ParamSet;
using genrec::Tensor;

TEST_CASE("adamw minimizes a quadratic") {
  ParamSet params;
  params.add("w", Tensor::scalar(5.0));
  AdamWConfig cfg;
  cfg.lr = 0.05;
  cfg.weight_decay = 0.0;
  AdamW opt(cfg, params);
  for (int i = 0; i < 600; ++i) {
    double w = params[0].data[0];
    std::vector<Tensor> grads = {Tensor::scalar(2.0 * (w - 3.0))};
    opt.step(params, grads);
  }
  CHECK(params[0].data[0] == doctest::Approx(3.0).epsilon(1e-3));
  CHECK(opt.steps_taken() == 600);
}

TEST_CASE("decay is decoupled: zero gradient still shrinks weights") {
  ParamSet params;
  params.add("w", Tensor::scalar(2.0));
  AdamWConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.01;
  AdamW opt(cfg, params);
  std::vector<Tensor> zero = {Tensor::scalar(0.0)};
  for (int i = 0; i < 10; ++i) opt.step(params, zero);
  // with m = v = 0 the adaptive term is exactly 0, only decay applies
  CHECK(params[0].data[0] == doctest::Approx(2.0 * std::pow(1.0 - 0.001, 10))
                                 .epsilon(1e-12));
}

TEST_CASE("non-finite gradients abort with the parameter named") {
  ParamSet params;
  params.add("emb", Tensor::zeros({2, 2}));
  AdamW opt(AdamWConfig{}, params);
  Tensor g = Tensor::zeros({2, 2});
  g.data[3] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_WITH_AS(opt.step(params, {g}), doctest::Contains("emb"),
                       genrec::Error);
}

TEST_CASE("mismatched gradient shape is rejected") {
  ParamSet params;
  params.add("w", Tensor::zeros({2, 2}));
  AdamW opt(AdamWConfig{}, params);
  CHECK_THROWS_WITH_AS(opt.step(params, {Tensor::zeros({2, 3})}),
                       doctest::Contains("w"), genrec::Error);
}

TEST_CASE("cosine schedule endpoints and midpoint") {
  CHECK(cosine_lr(1.0, 0, 100) == doctest::Approx(1.0));
  CHECK(cosine_lr(1.0, 50, 100) == doctest::Approx(0.5));
  CHECK(cosine_lr(1.0, 100, 100) == doctest::Approx(0.0));
  CHECK(cosine_lr(1.0, 250, 100) == 0.0);
  CHECK(cosine_lr(3e-4, 0, 7) == doctest::Approx(3e-4));
  CHECK_THROWS_AS(cosine_lr(1.0, 0, 0), genrec::Error);
}

TEST_CASE("first step moves opposite the gradient by about lr") {
  ParamSet params;
  params.add("w", Tensor::scalar(1.0));
  AdamWConfig cfg;
  cfg.lr = 0.01;
  cfg.weight_decay = 0.0;
  AdamW opt(cfg, params);
  opt.step(params, {Tensor::scalar(0.3)});
  // bias-corrected first step is -lr * g/|g| up to eps
  CHECK(params[0].data[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-4));
}
