// Copyright 2026 The GenRec Authors
// SPDX-License-Identifier: Apache-2.0

#include "genrec/rqvae.hpp"

#include <algorithm>
#include <cmath>

#include "genrec/check.hpp"
#include "genrec/rng.hpp"
#include "genrec/tape.hpp"

namespace genrec {

namespace {

// mlp slot order; codebook levels follow these in the training ParamSet
enum MlpSlot : size_t {
  kEncW1, kEncB1, kEncW2, kEncB2,
  kDecW1, kDecB1, kDecW2, kDecB2,
  kMlpSlots
};

Tensor batch_matrix(const std::vector<std::vector<double>>& xs,
                    const std::vector<int64_t>& rows) {
  int64_t d = static_cast<int64_t>(xs[0].size());
  Tensor X({static_cast<int64_t>(rows.size()), d});
  for (size_t r = 0; r < rows.size(); ++r)
    std::copy(xs[static_cast<size_t>(rows[r])].begin(),
              xs[static_cast<size_t>(rows[r])].end(),
              X.data.begin() + static_cast<int64_t>(r) * d);
  return X;
}

struct LossVars {
  Var total;
  double reconstruction = 0.0;
  double codebook = 0.0;
  double commitment = 0.0;
};

// The full training loss on one batch. vars holds the mlp slots followed by
// one var per codebook level. pinned_codes optionally overrides the argmin
// (see rqvae_loss_graph).
LossVars build_loss(Tape& tape, const std::vector<Var>& vars, Var x,
                    int64_t n_levels, double beta, int64_t batch,
                    const std::vector<std::vector<int32_t>>* pinned_codes =
                        nullptr) {
  Var h = tape.silu(tape.add_rowvec(tape.matmul(x, vars[kEncW1]), vars[kEncB1]));
  Var z = tape.add_rowvec(tape.matmul(h, vars[kEncW2]), vars[kEncB2]);

  std::vector<Var> levels(vars.begin() + kMlpSlots, vars.end());
  QuantizerGraph qg =
      rqvae_quantizer_graph(tape, levels, z, n_levels, pinned_codes);
  Var cb_term = qg.codebook_term;
  Var commit_term = qg.commitment_term;

  // straight-through: decode z_q, backprop into z
  Var dec_in = tape.add(z, tape.stop_grad(tape.sub(qg.quantized, z)));
  Var hd = tape.silu(
      tape.add_rowvec(tape.matmul(dec_in, vars[kDecW1]), vars[kDecB1]));
  Var xhat = tape.add_rowvec(tape.matmul(hd, vars[kDecW2]), vars[kDecB2]);
  Var recon = tape.squared_error_sum(xhat, x);

  double inv_b = 1.0 / static_cast<double>(batch);
  LossVars out;
  out.total = tape.add(
      tape.add(tape.scale(recon, inv_b), tape.scale(cb_term, inv_b)),
      tape.scale(commit_term, beta * inv_b));
  out.reconstruction = tape.val(recon).data[0] * inv_b;
  out.codebook = tape.val(cb_term).data[0] * inv_b;
  out.commitment = tape.val(commit_term).data[0] * inv_b;
  return out;
}

ParamSet init_mlp(const RqVaeConfig& cfg, int64_t d_in, Rng& rng) {
  auto layer = [&rng](int64_t fan_in, int64_t fan_out) {
    return Tensor::randn({fan_in, fan_out}, rng, 1.0 / std::sqrt(double(fan_in)));
  };
  ParamSet p;
  p.add("enc_w1", layer(d_in, cfg.hidden_dim));
  p.add("enc_b1", Tensor::zeros({1, cfg.hidden_dim}));
  p.add("enc_w2", layer(cfg.hidden_dim, cfg.latent_dim));
  p.add("enc_b2", Tensor::zeros({1, cfg.latent_dim}));
  p.add("dec_w1", layer(cfg.latent_dim, cfg.hidden_dim));
  p.add("dec_b1", Tensor::zeros({1, cfg.hidden_dim}));
  p.add("dec_w2", layer(cfg.hidden_dim, d_in));
  p.add("dec_b2", Tensor::zeros({1, d_in}));
  return p;
}

std::vector<double> encode_with(const ParamSet& mlp,
                                const std::vector<double>& x) {
  Tape tape;
  Var xv = tape.leaf(Tensor({1, static_cast<int64_t>(x.size())},
                            std::vector<double>(x)));
  Var h = tape.silu(tape.add_rowvec(tape.matmul(xv, tape.leaf(mlp[kEncW1])),
                                    tape.leaf(mlp[kEncB1])));
  Var z = tape.add_rowvec(tape.matmul(h, tape.leaf(mlp[kEncW2])),
                          tape.leaf(mlp[kEncB2]));
  return tape.val(z).data;
}

}  // namespace

QuantizerGraph rqvae_quantizer_graph(
    Tape& tape, const std::vector<Var>& level_vars, Var z, int64_t n_levels,
    const std::vector<std::vector<int32_t>>* pinned_codes) {
  check(static_cast<int64_t>(level_vars.size()) == n_levels,
        "rqvae_quantizer_graph: expected ", n_levels, " level vars, got ",
        level_vars.size());
  int64_t b = tape.val(z).rows();
  QuantizerGraph out;
  Var r = z;
  for (int64_t l = 0; l < n_levels; ++l) {
    Var level = level_vars[static_cast<size_t>(l)];
    std::vector<int32_t> codes(static_cast<size_t>(b));
    if (pinned_codes != nullptr) {
      check(static_cast<int64_t>(pinned_codes->size()) == n_levels &&
                static_cast<int64_t>((*pinned_codes)[static_cast<size_t>(l)]
                                         .size()) == b,
            "rqvae_quantizer_graph: pinned code table does not match "
            "levels x batch");
      codes = (*pinned_codes)[static_cast<size_t>(l)];
    } else {
      const Tensor& rv = tape.val(r);
      const Tensor& lv = tape.val(level);
      for (int64_t i = 0; i < b; ++i)
        codes[static_cast<size_t>(i)] =
            nearest_centroid(rv.data.data() + i * rv.cols(), lv);
    }
    Var e = tape.rows_gather(level, codes);
    Var sg_e = tape.stop_grad(e);
    Var cb_l = tape.squared_error_sum(tape.stop_grad(r), e);
    Var cm_l = tape.squared_error_sum(r, sg_e);
    out.codebook_term = l == 0 ? cb_l : tape.add(out.codebook_term, cb_l);
    out.commitment_term =
        l == 0 ? cm_l : tape.add(out.commitment_term, cm_l);
    r = tape.sub(r, sg_e);
    out.quantized = l == 0 ? sg_e : tape.add(out.quantized, sg_e);
  }
  return out;
}

Var rqvae_loss_graph(Tape& tape, const std::vector<Var>& vars, Var x,
                     int64_t n_levels, double beta, int64_t batch,
                     const std::vector<std::vector<int32_t>>* pinned_codes) {
  check(vars.size() == kMlpSlots + static_cast<size_t>(n_levels),
        "rqvae_loss_graph: expected ", kMlpSlots + n_levels,
        " parameter vars, got ", vars.size());
  return build_loss(tape, vars, x, n_levels, beta, batch, pinned_codes).total;
}

RqVae train_rq_vae(const std::vector<std::vector<double>>& embeddings,
                   const RqVaeConfig& config,
                   std::vector<double>* loss_curve) {
  check(!embeddings.empty(), "train_rq_vae: empty embedding set");
  check(config.batch_size >= 2, "train_rq_vae: batch_size must be >= 2");
  check(config.steps >= 1, "train_rq_vae: steps must be >= 1");
  int64_t d_in = static_cast<int64_t>(embeddings[0].size());
  int64_t n = static_cast<int64_t>(embeddings.size());

  Rng rng(config.seed);
  ParamSet params = init_mlp(config, d_in, rng);

  // Epoch order; the first batch doubles as the warm-start sample.
  std::vector<int64_t> order(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  rng.shuffle(order);
  int64_t b = std::min<int64_t>(config.batch_size, n);

  // Warm start: recursive k-means on the first batch's latents, so the
  // codebooks begin spread over occupied space instead of collapsing.
  {
    std::vector<std::vector<double>> latents;
    for (int64_t i = 0; i < b; ++i)
      latents.push_back(encode_with(params, embeddings[static_cast<size_t>(
                                                order[static_cast<size_t>(i)])]));
    Codebook warm = train_rq_kmeans(latents, config.n_levels, config.k,
                                    config.warmstart_iters, config.seed,
                                    config.beta_commit);
    for (int64_t l = 0; l < config.n_levels; ++l)
      params.add("codebook_l" + std::to_string(l),
                 std::move(warm.levels[static_cast<size_t>(l)]));
  }

  AdamWConfig opt_cfg;
  opt_cfg.lr = config.lr;
  opt_cfg.weight_decay = 0.0;
  AdamW opt(opt_cfg, params);

  RqVae model;
  model.config = config;

  std::vector<Tensor> snapshot = params.values;
  int64_t cursor = 0;
  for (int64_t step = 0; step < config.steps; ++step) {
    if (cursor + b > n) {
      rng.shuffle(order);
      cursor = 0;
    }
    std::vector<int64_t> batch_rows(order.begin() + cursor,
                                    order.begin() + cursor + b);
    cursor += b;

    Tape tape;
    std::vector<Var> vars;
    for (const auto& t : params.values) vars.push_back(tape.leaf(t, true));
    Var x = tape.leaf(batch_matrix(embeddings, batch_rows));
    LossVars loss =
        build_loss(tape, vars, x, config.n_levels, config.beta_commit, b);
    double lv = tape.val(loss.total).data[0];
    if (!std::isfinite(lv)) {
      params.values = snapshot;
      model.aborted_non_finite = true;
      break;
    }
    if (loss_curve != nullptr) loss_curve->push_back(lv);

    snapshot = params.values;
    tape.backward(loss.total);
    std::vector<Tensor> grads;
    grads.reserve(vars.size());
    for (Var v : vars) grads.push_back(tape.grad(v));
    try {
      opt.step(params, grads);
    } catch (const Error&) {
      params.values = snapshot;
      model.aborted_non_finite = true;
      break;
    }
  }

  model.codebook.dim = config.latent_dim;
  model.codebook.nominal_k = config.k;
  model.codebook.beta_commit = config.beta_commit;
  for (size_t s = 0; s < params.size(); ++s) {
    if (s < kMlpSlots)
      model.mlp.add(params.names[s], std::move(params.values[s]));
    else
      model.codebook.levels.push_back(std::move(params.values[s]));
  }
  return model;
}

std::vector<double> rqvae_encode(const RqVae& model,
                                 const std::vector<double>& x) {
  check(static_cast<int64_t>(x.size()) == model.mlp[kEncW1].rows(),
        "rqvae_encode: input dim ", x.size(), " does not match encoder ",
        model.mlp[kEncW1].rows());
  return encode_with(model.mlp, x);
}

std::vector<double> rqvae_decode_codes(const RqVae& model,
                                       const std::vector<int32_t>& codes) {
  std::vector<double> zq = reconstruct(codes, model.codebook);
  Tape tape;
  Var z = tape.leaf(Tensor({1, static_cast<int64_t>(zq.size())},
                           std::vector<double>(zq)));
  Var h = tape.silu(tape.add_rowvec(tape.matmul(z, tape.leaf(model.mlp[kDecW1])),
                                    tape.leaf(model.mlp[kDecB1])));
  Var xhat = tape.add_rowvec(tape.matmul(h, tape.leaf(model.mlp[kDecW2])),
                             tape.leaf(model.mlp[kDecB2]));
  return tape.val(xhat).data;
}

RqVaeLossTerms rqvae_loss_terms(const RqVae& model,
                                const std::vector<std::vector<double>>& xs) {
  check(!xs.empty(), "rqvae_loss_terms: empty input");
  Tape tape;
  std::vector<Var> vars;
  for (const auto& t : model.mlp.values) vars.push_back(tape.leaf(t));
  for (const auto& t : model.codebook.levels) vars.push_back(tape.leaf(t));
  std::vector<int64_t> rows(xs.size());
  for (size_t i = 0; i < xs.size(); ++i) rows[i] = static_cast<int64_t>(i);
  Var x = tape.leaf(batch_matrix(xs, rows));
  LossVars loss = build_loss(tape, vars, x, model.codebook.n_levels(),
                             model.codebook.beta_commit,
                             static_cast<int64_t>(xs.size()));
  RqVaeLossTerms out;
  out.reconstruction = loss.reconstruction;
  out.codebook = loss.codebook;
  out.commitment = loss.commitment;
  return out;
}

std::vector<SidAssignment> rqvae_assign_sids(
    const RqVae& model, const std::vector<std::vector<double>>& embeddings) {
  std::vector<SidAssignment> out;
  out.reserve(embeddings.size());
  for (size_t i = 0; i < embeddings.size(); ++i) {
    SidAssignment a = quantize(rqvae_encode(model, embeddings[i]), model.codebook);
    a.item_id = static_cast<int32_t>(i);
    out.push_back(std::move(a));
  }
  disambiguate_collisions(out);
  return out;
}

}  // namespace genrec
