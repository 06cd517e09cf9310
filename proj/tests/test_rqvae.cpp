// Copyright 2026 The GenRec Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <set>
#include <vector>

#include "genrec/dataset.hpp"
#include "genrec/rqvae.hpp"
#include "testutil/fd.hpp"

using namespace genrec;

namespace {

std::vector<std::vector<double>> catalog_embeddings(const Catalog& cat) {
  std::vector<std::vector<double>> out;
  for (const auto& item : cat.items) out.push_back(item.embedding);
  return out;
}

Tensor front_batch(const std::vector<std::vector<double>>& xs, int64_t b) {
  int64_t d = static_cast<int64_t>(xs[0].size());
  Tensor X({b, d});
  for (int64_t i = 0; i < b; ++i)
    std::copy(xs[static_cast<size_t>(i)].begin(),
              xs[static_cast<size_t>(i)].end(), X.data.begin() + i * d);
  return X;
}

RqVaeConfig small_config(uint64_t seed) {
  RqVaeConfig cfg;
  cfg.latent_dim = 8;
  cfg.hidden_dim = 32;
  cfg.n_levels = 3;
  cfg.k = 16;
  cfg.steps = 60;
  cfg.batch_size = 32;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("loss terms sum with the commitment weight") {
  Catalog cat = generate_catalog(41, 120, 16, 8);
  auto xs = catalog_embeddings(cat);
  RqVaeConfig cfg = small_config(41);
  cfg.steps = 20;
  RqVae model = train_rq_vae(xs, cfg);
  RqVaeLossTerms t = rqvae_loss_terms(model, xs);
  CHECK(t.total(0.25) ==
        doctest::Approx(t.reconstruction + t.codebook + 0.25 * t.commitment)
            .epsilon(1e-12));
  // with the commitment weight at zero, only the first two terms remain
  CHECK(t.total(0.0) ==
        doctest::Approx(t.reconstruction + t.codebook).epsilon(1e-12));
  CHECK(t.reconstruction >= 0.0);
  CHECK(t.codebook >= 0.0);
  CHECK(t.commitment >= 0.0);
}

TEST_CASE("smoothed training loss does not climb early on") {
  Catalog cat = generate_catalog(43, 200, 16, 8);
  auto xs = catalog_embeddings(cat);
  RqVaeConfig cfg = small_config(43);
  cfg.steps = 50;
  std::vector<double> curve;
  RqVae model = train_rq_vae(xs, cfg, &curve);
  CHECK(!model.aborted_non_finite);
  REQUIRE(int64_t(curve.size()) == cfg.steps);
  // five-step smoothing, then allow 10% wiggle between windows
  auto window = [&](size_t start) {
    double s = 0.0;
    for (size_t i = start; i < start + 5; ++i) s += curve[i];
    return s / 5.0;
  };
  for (size_t w = 5; w + 5 <= curve.size(); w += 5)
    CHECK(window(w) <= window(w - 5) * 1.10);
}

TEST_CASE("training is deterministic in the seed") {
  Catalog cat = generate_catalog(47, 100, 16, 8);
  auto xs = catalog_embeddings(cat);
  RqVaeConfig cfg = small_config(47);
  cfg.steps = 15;
  RqVae a = train_rq_vae(xs, cfg);
  RqVae b = train_rq_vae(xs, cfg);
  for (size_t i = 0; i < a.mlp.size(); ++i)
    CHECK(a.mlp.values[i].data == b.mlp.values[i].data);
  for (size_t l = 0; l < a.codebook.levels.size(); ++l)
    CHECK(a.codebook.levels[l].data == b.codebook.levels[l].data);
}

TEST_CASE("encode and decode shapes line up and codes are in range") {
  Catalog cat = generate_catalog(53, 90, 16, 8);
  auto xs = catalog_embeddings(cat);
  RqVaeConfig cfg = small_config(53);
  cfg.steps = 15;
  RqVae model = train_rq_vae(xs, cfg);
  std::vector<double> z = rqvae_encode(model, xs[5]);
  CHECK(int64_t(z.size()) == cfg.latent_dim);
  std::vector<SidAssignment> sids = rqvae_assign_sids(model, xs);
  REQUIRE(sids.size() == xs.size());
  std::set<std::pair<std::vector<int32_t>, int32_t>> keys;
  for (const auto& s : sids) {
    REQUIRE(int64_t(s.codes.size()) == cfg.n_levels);
    for (int64_t l = 0; l < cfg.n_levels; ++l) {
      CHECK(s.codes[static_cast<size_t>(l)] >= 0);
      CHECK(s.codes[static_cast<size_t>(l)] < model.codebook.level_size(l));
    }
    CHECK(keys.insert({s.codes, s.disambiguation}).second);
    std::vector<double> recon = rqvae_decode_codes(model, s.codes);
    CHECK(recon.size() == xs[0].size());
    for (double v : recon) CHECK(std::isfinite(v));
  }
}

TEST_CASE("decoder gradients match finite differences") {
  // The decoder path has no stop-gradients in it, so the tape gradient
  // must equal the true derivative of the loss.
  Catalog cat = generate_catalog(61, 80, 8, 6);
  auto xs = catalog_embeddings(cat);
  RqVaeConfig cfg = small_config(61);
  cfg.steps = 25;
  RqVae model = train_rq_vae(xs, cfg);
  REQUIRE(!model.aborted_non_finite);

  const int64_t b = 8;
  Tensor X = front_batch(xs, b);

  // Pin the base-point code choices so every probe stays on one branch of
  // the (piecewise constant) code selection, and confirm pinning changes
  // nothing at the base point itself.
  std::vector<std::vector<int32_t>> pinned(
      static_cast<size_t>(cfg.n_levels),
      std::vector<int32_t>(static_cast<size_t>(b)));
  for (int64_t i = 0; i < b; ++i) {
    SidAssignment a =
        quantize(rqvae_encode(model, xs[static_cast<size_t>(i)]), model.codebook);
    for (int64_t l = 0; l < cfg.n_levels; ++l)
      pinned[static_cast<size_t>(l)][static_cast<size_t>(i)] =
          a.codes[static_cast<size_t>(l)];
  }
  auto grads_of = [&](const std::vector<std::vector<int32_t>>* pin) {
    Tape tape;
    std::vector<Var> vars;
    for (const auto& t : model.mlp.values) vars.push_back(tape.leaf(t, true));
    for (const auto& t : model.codebook.levels)
      vars.push_back(tape.leaf(t, true));
    Var x = tape.leaf(X);
    tape.backward(
        rqvae_loss_graph(tape, vars, x, cfg.n_levels, cfg.beta_commit, b, pin));
    std::vector<Tensor> gs;
    for (Var v : vars) gs.push_back(tape.grad(v));
    return gs;
  };
  std::vector<Tensor> g_pinned = grads_of(&pinned);
  std::vector<Tensor> g_live = grads_of(nullptr);
  REQUIRE(g_pinned.size() == g_live.size());
  for (size_t i = 0; i < g_live.size(); ++i)
    CHECK(g_pinned[i].data == g_live[i].data);

  // Probe only the four decoder tensors (mlp slots 4..7).
  std::vector<Tensor> dec_inputs(model.mlp.values.begin() + 4,
                                 model.mlp.values.begin() + 8);
  auto fn = [&](Tape& tape, const std::vector<Var>& dec_vars) {
    std::vector<Var> vars;
    for (size_t s = 0; s < 4; ++s) vars.push_back(tape.leaf(model.mlp.values[s]));
    for (Var v : dec_vars) vars.push_back(v);
    for (const auto& level : model.codebook.levels)
      vars.push_back(tape.leaf(level));
    Var x = tape.leaf(X);
    return rqvae_loss_graph(tape, vars, x, cfg.n_levels, cfg.beta_commit, b,
                            &pinned);
  };
  testutil::FdResult r = testutil::fd_check(fn, dec_inputs, 6100, 24);
  CHECK(r.checked > 50);
  CHECK(r.max_rel_err < 1e-4);
}

TEST_CASE("latent gradient of the regularizer follows the stop-gradient design") {
  // The regularizer is built so that only the commitment term reaches the
  // encoder: d/dz = 2 beta * sum_l (r_l - e_l). Check the tape gradient
  // against that closed form, then against finite differences of a plain
  // re-implementation in which the stop-gradient arguments are held at
  // their base values (the function the design says it differentiates).
  Catalog cat = generate_catalog(71, 80, 8, 6);
  auto xs = catalog_embeddings(cat);
  RqVaeConfig cfg = small_config(71);
  cfg.steps = 25;
  RqVae model = train_rq_vae(xs, cfg);
  REQUIRE(!model.aborted_non_finite);

  const int64_t b = 6;
  const int64_t d = cfg.latent_dim;
  const double beta = cfg.beta_commit;
  Tensor Z({b, d});
  for (int64_t i = 0; i < b; ++i) {
    std::vector<double> z = rqvae_encode(model, xs[static_cast<size_t>(i)]);
    std::copy(z.begin(), z.end(), Z.data.begin() + i * d);
  }

  auto analytic_grad = [&](const Tensor& zt) {
    Tape tape;
    Var z = tape.leaf(zt, true);
    std::vector<Var> levels;
    for (const auto& t : model.codebook.levels) levels.push_back(tape.leaf(t));
    QuantizerGraph qg = rqvae_quantizer_graph(tape, levels, z, cfg.n_levels);
    tape.backward(
        tape.add(qg.codebook_term, tape.scale(qg.commitment_term, beta)));
    return tape.grad(z);
  };
  Tensor g = analytic_grad(Z);

  // closed form, and the frozen residuals the finite differences will need
  std::vector<std::vector<std::vector<double>>> base_r(
      static_cast<size_t>(b));  // [row][level][dim]
  std::vector<std::vector<int32_t>> base_codes(static_cast<size_t>(b));
  Tensor expect = Tensor::zeros({b, d});
  for (int64_t i = 0; i < b; ++i) {
    std::vector<double> r(Z.data.begin() + i * d, Z.data.begin() + (i + 1) * d);
    for (int64_t l = 0; l < cfg.n_levels; ++l) {
      const Tensor& level = model.codebook.levels[static_cast<size_t>(l)];
      int32_t c = nearest_centroid(r.data(), level);
      base_r[static_cast<size_t>(i)].push_back(r);
      base_codes[static_cast<size_t>(i)].push_back(c);
      for (int64_t k = 0; k < d; ++k) {
        expect.at(i, k) += 2.0 * beta * (r[static_cast<size_t>(k)] - level.at(c, k));
        r[static_cast<size_t>(k)] -= level.at(c, k);
      }
    }
  }
  REQUIRE(g.data.size() == expect.data.size());
  for (size_t i = 0; i < g.data.size(); ++i)
    CHECK(std::fabs(g.data[i] - expect.data[i]) < 1e-12);

  // plain-double loss with sg arguments frozen at the base point
  auto frozen_loss = [&](const Tensor& zt) {
    double total = 0.0;
    for (int64_t i = 0; i < b; ++i) {
      for (int64_t l = 0; l < cfg.n_levels; ++l) {
        const Tensor& level = model.codebook.levels[static_cast<size_t>(l)];
        int32_t c = base_codes[static_cast<size_t>(i)][static_cast<size_t>(l)];
        const auto& r0 =
            base_r[static_cast<size_t>(i)][static_cast<size_t>(l)];
        for (int64_t k = 0; k < d; ++k) {
          double e = level.at(c, k);
          double cb_diff = r0[static_cast<size_t>(k)] - e;  // sg[r_l] frozen
          // live residual r_l(z) = z - sum of earlier (frozen) codewords
          double moved = r0[static_cast<size_t>(k)] -
                         Z.data[static_cast<size_t>(i * d + k)];
          double live_r = zt.data[static_cast<size_t>(i * d + k)] + moved;
          total += cb_diff * cb_diff + beta * (live_r - e) * (live_r - e);
        }
      }
    }
    return total;
  };

  Rng rng(710);
  const double h = 1e-5;
  double max_rel = 0.0;
  for (int probe = 0; probe < 40; ++probe) {
    int64_t j = rng.index(Z.numel());
    Tensor zp = Z, zm = Z;
    zp.data[static_cast<size_t>(j)] += h;
    zm.data[static_cast<size_t>(j)] -= h;
    double numeric = (frozen_loss(zp) - frozen_loss(zm)) / (2.0 * h);
    max_rel = std::max(
        max_rel, testutil::fd_rel_err(g.data[static_cast<size_t>(j)], numeric));
  }
  CHECK(max_rel < 1e-4);
}

TEST_CASE("codewords learn only from the codebook pull term") {
  Catalog cat = generate_catalog(67, 60, 8, 6);
  auto xs = catalog_embeddings(cat);
  RqVaeConfig cfg = small_config(67);
  cfg.steps = 20;
  RqVae model = train_rq_vae(xs, cfg);
  REQUIRE(!model.aborted_non_finite);

  const int64_t b = 12;
  Tensor X = front_batch(xs, b);
  auto grads_at_beta = [&](double beta) {
    Tape tape;
    std::vector<Var> vars;
    for (const auto& t : model.mlp.values) vars.push_back(tape.leaf(t, true));
    for (const auto& t : model.codebook.levels)
      vars.push_back(tape.leaf(t, true));
    Var x = tape.leaf(X);
    Var loss = rqvae_loss_graph(tape, vars, x, cfg.n_levels, beta, b);
    tape.backward(loss);
    return std::pair<Tensor, Tensor>{tape.grad(vars[8]),   // level 0
                                     tape.grad(vars[3])};  // enc_b2
  };
  auto [lvl_weighted, enc_weighted] = grads_at_beta(0.25);
  auto [lvl_zero, enc_zero] = grads_at_beta(0.0);

  // the commitment weight moves the encoder gradient but not the codewords
  CHECK(lvl_weighted.data == lvl_zero.data);
  double diff = 0.0;
  for (size_t i = 0; i < enc_weighted.data.size(); ++i)
    diff += std::fabs(enc_weighted.data[i] - enc_zero.data[i]);
  CHECK(diff > 1e-8);

  // and the codeword gradient is exactly the mean pull toward the residuals
  const Tensor& level0 = model.codebook.levels[0];
  Tensor expect = Tensor::zeros(level0.shape);
  for (int64_t i = 0; i < b; ++i) {
    std::vector<double> z = rqvae_encode(model, xs[static_cast<size_t>(i)]);
    int32_t c = nearest_centroid(z.data(), level0);
    for (int64_t d = 0; d < level0.cols(); ++d)
      expect.at(c, d) += 2.0 * (level0.at(c, d) - z[static_cast<size_t>(d)]) /
                         static_cast<double>(b);
  }
  REQUIRE(lvl_zero.data.size() == expect.data.size());
  for (size_t i = 0; i < expect.data.size(); ++i)
    CHECK(std::fabs(lvl_zero.data[i] - expect.data[i]) < 1e-12);
}

TEST_CASE("warm start keeps most of the codebook in use") {
  Catalog cat = generate_catalog(59, 300, 16, 10);
  auto xs = catalog_embeddings(cat);
  RqVaeConfig cfg = small_config(59);
  cfg.steps = 40;
  cfg.batch_size = 64;
  RqVae model = train_rq_vae(xs, cfg);
  std::vector<SidAssignment> sids = rqvae_assign_sids(model, xs);
  for (int64_t l = 0; l < cfg.n_levels; ++l) {
    std::set<int32_t> used;
    for (const auto& s : sids) used.insert(s.codes[static_cast<size_t>(l)]);
    CHECK(double(used.size()) >
          0.5 * double(model.codebook.level_size(l)));
  }
}
