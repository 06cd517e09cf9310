// Copyright 2026 The GenRec Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "genrec/tensor.hpp"

namespace genrec {

// rmsnorm denominator guard, shared by the tape op and value-only forwards
constexpr double kRmsNormEps = 1e-6;

// Handle to a node on a Tape. Only valid for the tape that created it.
struct Var {
  int32_t id = -1;
};

// Per-token inputs for the clipped-surrogate policy-gradient loss.
// All vectors have one entry per completion token, in tape row order.
struct GrpoTokenBatch {
  std::vector<double> old_logp;    // behavior policy log-prob of the taken token
  std::vector<double> ref_logp;    // frozen reference log-prob of the taken token
  std::vector<double> advantage;   // group-normalized advantage, broadcast per token
  std::vector<double> weight;      // 1 / (num_sequences * sequence_length)
};

struct GrpoStats {
  double mean_kl = 0.0;        // token-weighted mean of the k3 KL estimate
  double clip_fraction = 0.0;  // fraction of tokens where the clipped branch binds
  double mean_ratio = 0.0;     // unweighted mean importance ratio
};

// Define-by-run reverse-mode autodiff over dense double tensors.
//
// Forward values are computed eagerly when an op is recorded; backward()
// replays the recorded closures in reverse creation order. Gradients
// accumulate, so reuse of a Var in several ops is handled naturally.
// One tape is built per training step and then discarded.
class Tape {
 public:
  Var leaf(Tensor value, bool requires_grad = false);

  const Tensor& val(Var v) const;
  const Tensor& grad(Var v) const;
  Tensor& grad_mut(Var v);
  bool requires_grad(Var v) const;
  size_t size() const { return nodes_.size(); }

  // out = a @ b, shapes [m,k] x [k,n] -> [m,n]
  Var matmul(Var a, Var b);
  // out = a @ b^T, shapes [m,k] x [n,k] -> [m,n]
  Var matmul_nt(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  // out[r,:] = a[r,:] + v, v is [1,n] or [n]
  Var add_rowvec(Var a, Var v);
  Var scale(Var a, double c);
  // out[i,:] = table[idx[i],:]; backward scatter-adds into the table.
  Var rows_gather(Var table, std::vector<int32_t> idx);
  // Row-wise RMS normalization with a learned per-column gain.
  Var rmsnorm(Var x, Var gain);
  Var silu(Var x);
  // Fused multi-head causal self-attention over packed sequences.
  // q,k,v are [T, d_model]; row t attends to rows i <= t that share
  // seq_id[t]. Equal seq ids must form contiguous runs.
  Var causal_attention(Var q, Var k, Var v, int64_t n_heads,
                       std::vector<int32_t> seq_id);
  // Masked mean token cross entropy: sum_t w_t * nll_t / sum_t w_t.
  Var softmax_xent(Var logits, std::vector<int32_t> targets,
                   std::vector<double> weights);
  // out[t,0] = log softmax(logits[t,:])[targets[t]]
  Var gather_log_softmax(Var logits, std::vector<int32_t> targets);
  // Scalar clipped-surrogate loss with a k3 KL penalty:
  //   sum_t w_t * (kl_beta * KL_t - min(r_t*A_t, clip(r_t,1-eps,1+eps)*A_t))
  // where r_t = exp(new_logp_t - old_logp_t). new_logp is a [T,1] Var.
  Var grpo_surrogate(Var new_logp, const GrpoTokenBatch& batch,
                     double clip_eps, double kl_beta, GrpoStats* stats);
  Var sum(Var a);
  Var squared_error_sum(Var a, Var b);
  // Identity on values; blocks gradient flow.
  Var stop_grad(Var a);

  // Seeds d(loss)/d(loss) = 1 and runs all recorded closures in reverse.
  // loss must be a scalar (numel == 1) with a finite value.
  void backward(Var loss);

 private:
  struct Node {
    Tensor val;
    Tensor grad;
    bool requires_grad = false;
    std::function<void()> back;  // empty for leaves
  };

  Node& node(Var v);
  const Node& node(Var v) const;
  Var push(Tensor value, bool requires_grad, std::function<void()> back);

  std::vector<Node> nodes_;
};

}  // namespace genrec
