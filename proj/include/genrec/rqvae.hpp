// Copyright 2026 The GenRec Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "genrec/codebook.hpp"
#include "genrec/optimizer.hpp"
#include "genrec/tape.hpp"
#include "genrec/tensor.hpp"

namespace genrec {

struct RqVaeConfig {
  int64_t latent_dim = 16;
  int64_t hidden_dim = 64;
  int64_t n_levels = 3;
  int64_t k = 32;
  double beta_commit = 0.25;
  double lr = 1e-3;
  int64_t steps = 600;
  int64_t batch_size = 64;
  int64_t warmstart_iters = 10;  // k-means iterations on the first batch
  uint64_t seed = 0;
};

// Two-layer encoder/decoder around a residual-quantized latent. The
// codebook is shared with the k-means tokenizer: downstream consumers only
// see Codebook + SidAssignments.
struct RqVae {
  RqVaeConfig config;
  ParamSet mlp;        // enc/dec weights and biases, fixed insertion order
  Codebook codebook;   // levels trained jointly with the MLPs
  bool aborted_non_finite = false;  // training stopped early, last finite state kept
};

struct RqVaeLossTerms {
  double reconstruction = 0.0;  // mean per-item squared reconstruction error
  double codebook = 0.0;        // mean ||sg[residual] - codeword||^2 over levels
  double commitment = 0.0;      // mean ||residual - sg[codeword]||^2 over levels
  double total(double beta) const {
    return reconstruction + codebook + beta * commitment;
  }
};

// Joint training: decoder gradients reach the encoder through the
// straight-through estimator, codewords learn only from the codebook term,
// and the commitment term (weighted beta_commit) pulls the encoder toward
// its codewords. Codebooks are warm-started with recursive k-means on the
// first batch's latents. On a non-finite loss, training stops and the
// parameters from the previous step are kept.
RqVae train_rq_vae(const std::vector<std::vector<double>>& embeddings,
                   const RqVaeConfig& config,
                   std::vector<double>* loss_curve = nullptr);

// Deterministic forward passes on trained parameters.
std::vector<double> rqvae_encode(const RqVae& model,
                                 const std::vector<double>& x);
std::vector<double> rqvae_decode_codes(const RqVae& model,
                                       const std::vector<int32_t>& codes);

// Loss terms recomputed over a full embedding set (pure; no updates).
RqVaeLossTerms rqvae_loss_terms(const RqVae& model,
                                const std::vector<std::vector<double>>& xs);

// Builds the one-batch training loss on an existing tape so callers can
// inspect or differentiate the full graph. vars holds the eight MLP tensors
// (encoder w1,b1,w2,b2 then decoder w1,b1,w2,b2) followed by one codebook
// level each; x is the [batch, d] input. Returns the scalar
// (recon + codebook + beta * commitment) / batch.
//
// pinned_codes, when given, fixes the per-level code choices ([level][row])
// instead of recomputing the argmin. Code selection is piecewise constant,
// so pinning it at a base point keeps evaluations on one branch; the
// gradient is unchanged wherever the pinned codes match the argmin.
Var rqvae_loss_graph(
    Tape& tape, const std::vector<Var>& vars, Var x, int64_t n_levels,
    double beta, int64_t batch,
    const std::vector<std::vector<int32_t>>* pinned_codes = nullptr);

// The quantizer subgraph on its own, starting from a latent batch z
// ([batch, latent_dim]) instead of raw inputs. level_vars holds one var per
// codebook level. Terms are sums over the batch, not yet normalized.
struct QuantizerGraph {
  Var codebook_term;    // sum_l ||sg[r_l] - e_l||^2: pulls codewords to residuals
  Var commitment_term;  // sum_l ||r_l - sg[e_l]||^2: pulls the encoder to codewords
  Var quantized;        // sum_l sg[e_l], constant to the encoder
};
QuantizerGraph rqvae_quantizer_graph(
    Tape& tape, const std::vector<Var>& level_vars, Var z, int64_t n_levels,
    const std::vector<std::vector<int32_t>>* pinned_codes = nullptr);

// Encode + quantize + disambiguate a whole catalog of embeddings.
std::vector<SidAssignment> rqvae_assign_sids(
    const RqVae& model, const std::vector<std::vector<double>>& embeddings);

}  // namespace genrec
