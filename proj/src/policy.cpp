// Copyright 2026 The GenRec Authors
// SPDX-License-Identifier: Apache-2.0

#include "genrec/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include <Eigen/Dense>

#include "genrec/check.hpp"
#include "genrec/rng.hpp"

namespace genrec {

namespace {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

// tensors per transformer block, in checkpoint order
constexpr size_t kPerLayer = 8;

std::string layer_name(int64_t l, const char* suffix) {
  return "l" + std::to_string(l) + "." + suffix;
}

size_t expected_tensor_count(const PolicyConfig& cfg) {
  return 2 + kPerLayer * static_cast<size_t>(cfg.n_layers) + 1 +
         (cfg.tie_embedding ? 0 : 1);
}

// stable log-softmax of one logit row, evaluated at a target column
double log_softmax_at(const double* row, int64_t n, int64_t target) {
  double m = row[0];
  for (int64_t j = 1; j < n; ++j) m = std::max(m, row[j]);
  double z = 0.0;
  for (int64_t j = 0; j < n; ++j) z += std::exp(row[j] - m);
  return row[target] - (m + std::log(z));
}

void validate_tokens(const std::vector<int32_t>& tokens, int64_t vocab,
                     const char* who) {
  for (int32_t t : tokens)
    check(t >= 0 && t < vocab, who, ": token id ", t,
          " outside vocabulary of size ", vocab);
}

}  // namespace

int64_t policy_param_count(const PolicyConfig& cfg) {
  int64_t d = cfg.d_model;
  int64_t per_layer = 2 * d + 4 * d * d + 2 * d * cfg.d_ff;
  int64_t n = cfg.vocab_size * d + cfg.max_len * d +
              cfg.n_layers * per_layer + d;
  if (!cfg.tie_embedding) n += cfg.vocab_size * d;
  return n;
}

ParamSet init_policy(const PolicyConfig& cfg) {
  check(cfg.vocab_size > 0, "init_policy: vocab_size must be set");
  check(cfg.n_layers >= 1, "init_policy: need at least one layer");
  check(cfg.d_model % cfg.n_heads == 0, "init_policy: width ", cfg.d_model,
        " is not divisible by ", cfg.n_heads, " heads");
  check(cfg.max_len >= 2, "init_policy: max_len ", cfg.max_len,
        " is too short to condition on anything");

  Rng rng(cfg.seed);
  double attn_scale = 1.0 / std::sqrt(static_cast<double>(cfg.d_model));
  double ffn_scale = 1.0 / std::sqrt(static_cast<double>(cfg.d_ff));

  ParamSet p;
  p.add("tok_emb", Tensor::randn({cfg.vocab_size, cfg.d_model}, rng, 0.02));
  p.add("pos_emb", Tensor::randn({cfg.max_len, cfg.d_model}, rng, 0.02));
  for (int64_t l = 0; l < cfg.n_layers; ++l) {
    p.add(layer_name(l, "attn_norm"), Tensor::full({1, cfg.d_model}, 1.0));
    p.add(layer_name(l, "wq"),
          Tensor::randn({cfg.d_model, cfg.d_model}, rng, attn_scale));
    p.add(layer_name(l, "wk"),
          Tensor::randn({cfg.d_model, cfg.d_model}, rng, attn_scale));
    p.add(layer_name(l, "wv"),
          Tensor::randn({cfg.d_model, cfg.d_model}, rng, attn_scale));
    p.add(layer_name(l, "wo"),
          Tensor::randn({cfg.d_model, cfg.d_model}, rng, attn_scale));
    p.add(layer_name(l, "ffn_norm"), Tensor::full({1, cfg.d_model}, 1.0));
    p.add(layer_name(l, "w1"),
          Tensor::randn({cfg.d_model, cfg.d_ff}, rng, attn_scale));
    p.add(layer_name(l, "w2"),
          Tensor::randn({cfg.d_ff, cfg.d_model}, rng, ffn_scale));
  }
  p.add("final_norm", Tensor::full({1, cfg.d_model}, 1.0));
  if (!cfg.tie_embedding)
    p.add("lm_head", Tensor::randn({cfg.vocab_size, cfg.d_model}, rng,
                                   attn_scale));
  check(p.numel() == policy_param_count(cfg),
        "init_policy: built ", p.numel(), " parameters, expected ",
        policy_param_count(cfg));
  return p;
}

std::vector<Var> policy_leaves(Tape& tape, const ParamSet& params,
                               bool requires_grad) {
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const auto& t : params.values) vars.push_back(tape.leaf(t, requires_grad));
  return vars;
}

Var policy_logits_graph(Tape& tape, const std::vector<Var>& vars,
                        const PolicyConfig& cfg,
                        const std::vector<int32_t>& tokens,
                        const std::vector<int32_t>& seq_ids) {
  check(!tokens.empty(), "policy forward: empty token sequence");
  check(tokens.size() == seq_ids.size(), "policy forward: ", tokens.size(),
        " tokens for ", seq_ids.size(), " segment ids");
  check(vars.size() == expected_tensor_count(cfg),
        "policy forward: ", vars.size(), " parameter vars, expected ",
        expected_tensor_count(cfg));
  validate_tokens(tokens, cfg.vocab_size, "policy forward");

  std::vector<int32_t> positions(tokens.size());
  int32_t pos = 0;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0 && seq_ids[i] != seq_ids[i - 1]) pos = 0;
    check(pos < cfg.max_len, "policy forward: segment ", seq_ids[i],
          " is longer than max length ", cfg.max_len);
    positions[i] = pos++;
  }

  size_t slot = 0;
  Var tok_emb = vars[slot++];
  Var pos_emb = vars[slot++];
  Var x = tape.add(tape.rows_gather(tok_emb, tokens),
                   tape.rows_gather(pos_emb, positions));
  for (int64_t l = 0; l < cfg.n_layers; ++l) {
    Var attn_norm = vars[slot++];
    Var wq = vars[slot++];
    Var wk = vars[slot++];
    Var wv = vars[slot++];
    Var wo = vars[slot++];
    Var ffn_norm = vars[slot++];
    Var w1 = vars[slot++];
    Var w2 = vars[slot++];
    Var xn = tape.rmsnorm(x, attn_norm);
    Var a = tape.causal_attention(tape.matmul(xn, wq), tape.matmul(xn, wk),
                                  tape.matmul(xn, wv), cfg.n_heads, seq_ids);
    x = tape.add(x, tape.matmul(a, wo));
    Var fn = tape.rmsnorm(x, ffn_norm);
    x = tape.add(x, tape.matmul(tape.silu(tape.matmul(fn, w1)), w2));
  }
  x = tape.rmsnorm(x, vars[slot++]);
  Var head = cfg.tie_embedding ? tok_emb : vars[slot];
  return tape.matmul_nt(x, head);
}

Tensor forward_logits(const ParamSet& params, const PolicyConfig& cfg,
                      const std::vector<int32_t>& tokens) {
  Tape tape;
  std::vector<Var> vars = policy_leaves(tape, params, false);
  std::vector<int32_t> seq(tokens.size(), 0);
  return tape.val(policy_logits_graph(tape, vars, cfg, tokens, seq));
}

SequenceLogProb sequence_log_prob(const ParamSet& params,
                                  const PolicyConfig& cfg,
                                  const std::vector<int32_t>& prompt,
                                  const std::vector<int32_t>& completion) {
  check(!prompt.empty(), "sequence_log_prob: empty prompt");
  check(!completion.empty(), "sequence_log_prob: empty completion");
  std::vector<int32_t> tokens = prompt;
  tokens.insert(tokens.end(), completion.begin(), completion.end());
  Tensor logits = forward_logits(params, cfg, tokens);

  SequenceLogProb out;
  int64_t v = logits.cols();
  for (size_t i = 0; i < completion.size(); ++i) {
    int64_t row = static_cast<int64_t>(prompt.size()) - 1 +
                  static_cast<int64_t>(i);
    out.per_token.push_back(
        log_softmax_at(logits.data.data() + row * v, v, completion[i]));
    out.sum += out.per_token.back();
  }
  return out;
}

PolicyScorer::PolicyScorer(const ParamSet& params, const PolicyConfig& cfg)
    : params_(params), cfg_(cfg) {
  check(params.size() == expected_tensor_count(cfg),
        "scorer: ", params.size(), " parameter tensors, expected ",
        expected_tensor_count(cfg));
}

void PolicyScorer::set_prompt(const std::vector<int32_t>& prompt) {
  check(!prompt.empty(), "scorer: empty prompt");
  check(static_cast<int64_t>(prompt.size()) <= cfg_.max_len,
        "scorer: prompt of ", prompt.size(), " exceeds max length ",
        cfg_.max_len);
  validate_tokens(prompt, cfg_.vocab_size, "scorer");

  prompt_len_ = 0;  // no cached rows while we build the cache itself
  key_cache_.assign(static_cast<size_t>(cfg_.n_layers), {});
  value_cache_.assign(static_cast<size_t>(cfg_.n_layers), {});
  prompt_next_ = run_rows(prompt, &key_cache_, &value_cache_);
  prompt_len_ = static_cast<int64_t>(prompt.size());
}

std::vector<double> PolicyScorer::next_log_probs(
    const std::vector<int32_t>& ext) const {
  check(prompt_len_ > 0, "scorer: set_prompt was never called");
  if (ext.empty()) return prompt_next_;
  validate_tokens(ext, cfg_.vocab_size, "scorer");
  return run_rows(ext, nullptr, nullptr);
}

std::vector<double> PolicyScorer::run_rows(
    const std::vector<int32_t>& ext,
    std::vector<std::vector<double>>* cache_k,
    std::vector<std::vector<double>>* cache_v) const {
  const int64_t n = static_cast<int64_t>(ext.size());
  const int64_t P = prompt_len_;
  const int64_t d = cfg_.d_model;
  const int64_t heads = cfg_.n_heads;
  const int64_t dh = d / heads;
  const double alpha = 1.0 / std::sqrt(static_cast<double>(dh));
  check(P + n <= cfg_.max_len, "scorer: sequence of ", P + n,
        " exceeds max length ", cfg_.max_len);

  const Tensor& tok_emb = params_[0];
  const Tensor& pos_emb = params_[1];
  RowMat x(n, d);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t c = 0; c < d; ++c)
      x(i, c) = tok_emb.data[ext[static_cast<size_t>(i)] * d + c] +
                pos_emb.data[(P + i) * d + c];

  auto rms_rows = [&](const RowMat& in, const Tensor& gain) {
    RowMat out(in.rows(), d);
    for (int64_t r = 0; r < in.rows(); ++r) {
      double ss = in.row(r).squaredNorm();
      double ir = 1.0 / std::sqrt(ss / static_cast<double>(d) + kRmsNormEps);
      for (int64_t c = 0; c < d; ++c) out(r, c) = in(r, c) * ir * gain.data[c];
    }
    return out;
  };

  for (int64_t l = 0; l < cfg_.n_layers; ++l) {
    size_t base = 2 + kPerLayer * static_cast<size_t>(l);
    const Tensor& attn_norm = params_[base + 0];
    ConstMap wq(params_[base + 1].data.data(), d, d);
    ConstMap wk(params_[base + 2].data.data(), d, d);
    ConstMap wv(params_[base + 3].data.data(), d, d);
    ConstMap wo(params_[base + 4].data.data(), d, d);
    const Tensor& ffn_norm = params_[base + 5];
    ConstMap w1(params_[base + 6].data.data(), d, cfg_.d_ff);
    ConstMap w2(params_[base + 7].data.data(), cfg_.d_ff, d);

    RowMat xn = rms_rows(x, attn_norm);
    RowMat q = xn * wq;
    RowMat k = xn * wk;
    RowMat v = xn * wv;

    const std::vector<double>& kp = key_cache_[static_cast<size_t>(l)];
    const std::vector<double>& vp = value_cache_[static_cast<size_t>(l)];
    RowMat att = RowMat::Zero(n, d);
    std::vector<double> scores(static_cast<size_t>(P + n));
    for (int64_t i = 0; i < n; ++i) {
      for (int64_t h = 0; h < heads; ++h) {
        int64_t off = h * dh;
        int64_t span = P + i + 1;
        double m = -std::numeric_limits<double>::infinity();
        for (int64_t j = 0; j < span; ++j) {
          const double* krow = j < P ? kp.data() + j * d + off
                                     : k.row(j - P).data() + off;
          double s = 0.0;
          for (int64_t c = 0; c < dh; ++c) s += q(i, off + c) * krow[c];
          s *= alpha;
          scores[static_cast<size_t>(j)] = s;
          m = std::max(m, s);
        }
        double z = 0.0;
        for (int64_t j = 0; j < span; ++j) {
          double e = std::exp(scores[static_cast<size_t>(j)] - m);
          scores[static_cast<size_t>(j)] = e;
          z += e;
        }
        for (int64_t j = 0; j < span; ++j) {
          const double* vrow = j < P ? vp.data() + j * d + off
                                     : v.row(j - P).data() + off;
          double a = scores[static_cast<size_t>(j)] / z;
          for (int64_t c = 0; c < dh; ++c) att(i, off + c) += a * vrow[c];
        }
      }
    }
    x += att * wo;
    RowMat fn = rms_rows(x, ffn_norm);
    RowMat hidden = fn * w1;
    for (int64_t r = 0; r < n; ++r)
      for (int64_t c = 0; c < cfg_.d_ff; ++c) {
        double u = hidden(r, c);
        hidden(r, c) = u / (1.0 + std::exp(-u));
      }
    x += hidden * w2;

    if (cache_k != nullptr) {
      (*cache_k)[static_cast<size_t>(l)].assign(k.data(), k.data() + n * d);
      (*cache_v)[static_cast<size_t>(l)].assign(v.data(), v.data() + n * d);
    }
  }

  const Tensor& final_norm = params_[2 + kPerLayer * static_cast<size_t>(
                                             cfg_.n_layers)];
  double ss = x.row(n - 1).squaredNorm();
  double ir = 1.0 / std::sqrt(ss / static_cast<double>(d) + kRmsNormEps);
  Eigen::VectorXd h(d);
  for (int64_t c = 0; c < d; ++c)
    h(c) = x(n - 1, c) * ir * final_norm.data[c];

  const Tensor& head =
      cfg_.tie_embedding
          ? params_[0]
          : params_[2 + kPerLayer * static_cast<size_t>(cfg_.n_layers) + 1];
  ConstMap head_map(head.data.data(), cfg_.vocab_size, d);
  Eigen::VectorXd logits = head_map * h;

  std::vector<double> out(static_cast<size_t>(cfg_.vocab_size));
  double m = logits.maxCoeff();
  double z = 0.0;
  for (int64_t j = 0; j < cfg_.vocab_size; ++j) z += std::exp(logits(j) - m);
  double lse = m + std::log(z);
  for (int64_t j = 0; j < cfg_.vocab_size; ++j)
    out[static_cast<size_t>(j)] = logits(j) - lse;
  return out;
}

namespace {

constexpr char kCkptMagic[4] = {'g', 'r', 'p', 'k'};
constexpr uint32_t kCkptVersion = 1;

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <typename T>
T take(std::ifstream& in, int64_t* offset, const std::string& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  check(in.good(), "load_policy_checkpoint: ", path,
        " truncated at byte offset ", *offset);
  *offset += static_cast<int64_t>(sizeof(v));
  return v;
}

void put_tensor(std::ofstream& out, const Tensor& t) {
  put<uint32_t>(out, static_cast<uint32_t>(t.shape.size()));
  for (int64_t dim : t.shape) put<int64_t>(out, dim);
  out.write(reinterpret_cast<const char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(double)));
}

Tensor take_tensor(std::ifstream& in, int64_t* offset,
                   const std::string& path) {
  uint32_t ndims = take<uint32_t>(in, offset, path);
  check(ndims >= 1 && ndims <= 4, "load_policy_checkpoint: ", path,
        " has a tensor with ", ndims, " dims at byte offset ", *offset - 4);
  Shape shape(ndims);
  for (auto& dim : shape) {
    dim = take<int64_t>(in, offset, path);
    check(dim >= 1 && dim <= (int64_t(1) << 32), "load_policy_checkpoint: ",
          path, " has a bad tensor dim ", dim, " at byte offset ",
          *offset - 8);
  }
  Tensor t(shape);
  in.read(reinterpret_cast<char*>(t.data.data()),
          static_cast<std::streamsize>(t.data.size() * sizeof(double)));
  check(in.good(), "load_policy_checkpoint: ", path,
        " truncated at byte offset ", *offset);
  *offset += static_cast<int64_t>(t.data.size() * sizeof(double));
  return t;
}

void put_string(std::ofstream& out, const std::string& s) {
  put<uint32_t>(out, static_cast<uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string take_string(std::ifstream& in, int64_t* offset,
                        const std::string& path) {
  uint32_t len = take<uint32_t>(in, offset, path);
  check(len <= 4096, "load_policy_checkpoint: ", path,
        " has a bad name length ", len, " at byte offset ", *offset - 4);
  std::string s(len, '\0');
  in.read(s.data(), len);
  check(in.good(), "load_policy_checkpoint: ", path,
        " truncated at byte offset ", *offset);
  *offset += len;
  return s;
}

}  // namespace

void save_policy_checkpoint(const std::string& path, const PolicyConfig& cfg,
                            uint64_t vocab_fingerprint, const ParamSet& params,
                            const AdamW* optimizer) {
  std::ofstream out(path, std::ios::binary);
  check(out.is_open(), "save_policy_checkpoint: cannot open ", path);
  out.write(kCkptMagic, sizeof(kCkptMagic));
  put<uint32_t>(out, kCkptVersion);
  put<int64_t>(out, cfg.n_layers);
  put<int64_t>(out, cfg.d_model);
  put<int64_t>(out, cfg.n_heads);
  put<int64_t>(out, cfg.d_ff);
  put<int64_t>(out, cfg.max_len);
  put<int64_t>(out, cfg.vocab_size);
  put<uint8_t>(out, cfg.tie_embedding ? 1 : 0);
  put<uint64_t>(out, cfg.seed);
  put<uint64_t>(out, vocab_fingerprint);
  put<uint32_t>(out, static_cast<uint32_t>(params.size()));
  for (size_t i = 0; i < params.size(); ++i) {
    put_string(out, params.names[i]);
    put_tensor(out, params.values[i]);
  }
  if (optimizer != nullptr) {
    check(optimizer->moments_m().size() == params.size(),
          "save_policy_checkpoint: optimizer tracks ",
          optimizer->moments_m().size(), " tensors, params have ",
          params.size());
    put<uint8_t>(out, 1);
    put<int64_t>(out, optimizer->steps_taken());
    for (const auto& m : optimizer->moments_m()) put_tensor(out, m);
    for (const auto& v : optimizer->moments_v()) put_tensor(out, v);
  } else {
    put<uint8_t>(out, 0);
  }
  check(out.good(), "save_policy_checkpoint: write failed for ", path);
}

PolicyCheckpoint load_policy_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check(in.is_open(), "load_policy_checkpoint: cannot open ", path);
  int64_t offset = 0;
  char magic[4] = {};
  in.read(magic, sizeof(magic));
  check(in.good() && std::memcmp(magic, kCkptMagic, sizeof(magic)) == 0,
        "load_policy_checkpoint: ", path, " has wrong magic at byte offset 0");
  offset += sizeof(magic);
  uint32_t version = take<uint32_t>(in, &offset, path);
  check(version == kCkptVersion, "load_policy_checkpoint: ", path,
        " is version ", version, ", this build reads version ", kCkptVersion);

  PolicyCheckpoint ckpt;
  ckpt.config.n_layers = take<int64_t>(in, &offset, path);
  ckpt.config.d_model = take<int64_t>(in, &offset, path);
  ckpt.config.n_heads = take<int64_t>(in, &offset, path);
  ckpt.config.d_ff = take<int64_t>(in, &offset, path);
  ckpt.config.max_len = take<int64_t>(in, &offset, path);
  ckpt.config.vocab_size = take<int64_t>(in, &offset, path);
  ckpt.config.tie_embedding = take<uint8_t>(in, &offset, path) != 0;
  ckpt.config.seed = take<uint64_t>(in, &offset, path);
  ckpt.vocab_fingerprint = take<uint64_t>(in, &offset, path);

  uint32_t n_tensors = take<uint32_t>(in, &offset, path);
  check(n_tensors == expected_tensor_count(ckpt.config),
        "load_policy_checkpoint: ", path, " holds ", n_tensors,
        " tensors, the stored config implies ",
        expected_tensor_count(ckpt.config));
  for (uint32_t i = 0; i < n_tensors; ++i) {
    std::string name = take_string(in, &offset, path);
    ckpt.params.add(std::move(name), take_tensor(in, &offset, path));
  }
  ckpt.has_optimizer = take<uint8_t>(in, &offset, path) != 0;
  if (ckpt.has_optimizer) {
    ckpt.optimizer_steps = take<int64_t>(in, &offset, path);
    for (uint32_t i = 0; i < n_tensors; ++i)
      ckpt.optimizer_m.push_back(take_tensor(in, &offset, path));
    for (uint32_t i = 0; i < n_tensors; ++i)
      ckpt.optimizer_v.push_back(take_tensor(in, &offset, path));
    for (uint32_t i = 0; i < n_tensors; ++i) {
      check(ckpt.optimizer_m[i].shape == ckpt.params.values[i].shape &&
                ckpt.optimizer_v[i].shape == ckpt.params.values[i].shape,
            "load_policy_checkpoint: ", path,
            " optimizer moment shape mismatch for '", ckpt.params.names[i],
            "'");
    }
  }
  return ckpt;
}

void check_checkpoint_compatible(const PolicyCheckpoint& ckpt,
                                 const PolicyConfig& cfg,
                                 uint64_t vocab_fingerprint) {
  check(ckpt.vocab_fingerprint == vocab_fingerprint,
        "checkpoint: vocabulary fingerprint ", ckpt.vocab_fingerprint,
        " does not match the current layout's ", vocab_fingerprint);
  auto field = [&](int64_t a, int64_t b, const char* name) {
    check(a == b, "checkpoint: config mismatch on ", name, ": file has ", a,
          ", run expects ", b);
  };
  // seed is deliberately not compared: it only drove initialization
  field(ckpt.config.n_layers, cfg.n_layers, "n_layers");
  field(ckpt.config.d_model, cfg.d_model, "d_model");
  field(ckpt.config.n_heads, cfg.n_heads, "n_heads");
  field(ckpt.config.d_ff, cfg.d_ff, "d_ff");
  field(ckpt.config.max_len, cfg.max_len, "max_len");
  field(ckpt.config.vocab_size, cfg.vocab_size, "vocab_size");
  field(ckpt.config.tie_embedding ? 1 : 0, cfg.tie_embedding ? 1 : 0,
        "tie_embedding");
}

}  // namespace genrec
