// Copyright 2026 The GenRec Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "genrec/optimizer.hpp"
#include "genrec/tape.hpp"
#include "genrec/tensor.hpp"

namespace genrec {

// Decoder-only transformer: learned token + position embeddings, pre-norm
// blocks (rmsnorm -> attention -> residual, rmsnorm -> SiLU MLP -> residual),
// final rmsnorm, output projection tied to the token embedding by default.
// No bias terms anywhere.
struct PolicyConfig {
  int64_t n_layers = 4;
  int64_t d_model = 128;
  int64_t n_heads = 4;
  int64_t d_ff = 256;
  int64_t max_len = 64;
  int64_t vocab_size = 0;  // set from the vocabulary layout
  bool tie_embedding = true;
  uint64_t seed = 0;

  bool operator==(const PolicyConfig&) const = default;
};

// Learnable tensor count implied by a config, for sanity checks.
int64_t policy_param_count(const PolicyConfig& cfg);

// Deterministic initialization; names fix the checkpoint layout.
ParamSet init_policy(const PolicyConfig& cfg);

// Wraps every parameter as a tape leaf, in ParamSet order.
std::vector<Var> policy_leaves(Tape& tape, const ParamSet& params,
                               bool requires_grad);

// Forward over packed sequences: tokens[i] belongs to segment seq_ids[i]
// (equal ids contiguous); positions restart at 0 for each segment. Returns
// the [T, vocab] logits var. vars must come from policy_leaves.
Var policy_logits_graph(Tape& tape, const std::vector<Var>& vars,
                        const PolicyConfig& cfg,
                        const std::vector<int32_t>& tokens,
                        const std::vector<int32_t>& seq_ids);

// Single-sequence forward on plain values, no gradients: [T, vocab] logits.
Tensor forward_logits(const ParamSet& params, const PolicyConfig& cfg,
                      const std::vector<int32_t>& tokens);

// Log-probabilities of completion tokens given prompt and earlier
// completion tokens. The sum is a plain total: no length normalization,
// here or in any consumer.
struct SequenceLogProb {
  std::vector<double> per_token;
  double sum = 0.0;
};
SequenceLogProb sequence_log_prob(const ParamSet& params,
                                  const PolicyConfig& cfg,
                                  const std::vector<int32_t>& prompt,
                                  const std::vector<int32_t>& completion);

// Incremental next-token scoring for search: the prompt is run once and its
// per-layer keys/values cached; each call recomputes only the (short)
// extension against that cache. Parameters must outlive the scorer.
class PolicyScorer {
 public:
  PolicyScorer(const ParamSet& params, const PolicyConfig& cfg);

  void set_prompt(const std::vector<int32_t>& prompt);

  // Log-softmax over the vocabulary for the token following prompt + ext.
  // ext may be empty. Requires set_prompt first.
  std::vector<double> next_log_probs(const std::vector<int32_t>& ext) const;

  int64_t prompt_len() const { return prompt_len_; }

 private:
  // Forward over ext rows at positions prompt_len_.., attending to the
  // cached prompt keys/values then to the rows themselves, causally. When
  // cache pointers are given (prompt processing), stores each layer's
  // keys/values there. Returns next-token log-probs after the last row.
  std::vector<double> run_rows(
      const std::vector<int32_t>& ext,
      std::vector<std::vector<double>>* cache_k,
      std::vector<std::vector<double>>* cache_v) const;

  const ParamSet& params_;
  PolicyConfig cfg_;
  int64_t prompt_len_ = -1;
  // per layer, [prompt_len, d_model] row-major
  std::vector<std::vector<double>> key_cache_;
  std::vector<std::vector<double>> value_cache_;
  std::vector<double> prompt_next_;  // log-probs after the bare prompt
};

// Checkpoint: config + vocabulary fingerprint + named tensors, with
// optimizer moments when given, all little-endian 64-bit.
void save_policy_checkpoint(const std::string& path, const PolicyConfig& cfg,
                            uint64_t vocab_fingerprint, const ParamSet& params,
                            const AdamW* optimizer = nullptr);

struct PolicyCheckpoint {
  PolicyConfig config;
  uint64_t vocab_fingerprint = 0;
  ParamSet params;
  bool has_optimizer = false;
  int64_t optimizer_steps = 0;
  std::vector<Tensor> optimizer_m;
  std::vector<Tensor> optimizer_v;
};
PolicyCheckpoint load_policy_checkpoint(const std::string& path);

// Rejects a checkpoint whose config or vocabulary differs from what the
// caller is about to run with.
void check_checkpoint_compatible(const PolicyCheckpoint& ckpt,
                                 const PolicyConfig& cfg,
                                 uint64_t vocab_fingerprint);

}  // namespace genrec
