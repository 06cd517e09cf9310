// Copyright 2026 The GenRec Authors
// SPDX-License-Identifier: Apache-2.0

#include "genrec/tape.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace genrec {

namespace {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using MapConst = Eigen::Map<const RowMat>;

MapConst as_mat(const Tensor& t) {
  return MapConst(t.data.data(), t.rows(), t.cols());
}

MapMat as_mat(Tensor& t) { return MapMat(t.data.data(), t.rows(), t.cols()); }

void check_2d(const Tensor& t, const char* op, const char* arg) {
  check(t.shape.size() == 2, op, ": ", arg, " must be 2-d, got shape ",
        shape_str(t.shape));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}


}  // namespace

Tape::Node& Tape::node(Var v) {
  check(v.id >= 0 && static_cast<size_t>(v.id) < nodes_.size(),
        "tape: invalid var id ", v.id);
  return nodes_[static_cast<size_t>(v.id)];
}

const Tape::Node& Tape::node(Var v) const {
  check(v.id >= 0 && static_cast<size_t>(v.id) < nodes_.size(),
        "tape: invalid var id ", v.id);
  return nodes_[static_cast<size_t>(v.id)];
}

Var Tape::push(Tensor value, bool requires_grad, std::function<void()> back) {
  Node n;
  n.grad = Tensor::zeros(value.shape);
  n.val = std::move(value);
  n.requires_grad = requires_grad;
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int32_t>(nodes_.size() - 1)};
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  return push(std::move(value), requires_grad, {});
}

const Tensor& Tape::val(Var v) const { return node(v).val; }
const Tensor& Tape::grad(Var v) const { return node(v).grad; }
Tensor& Tape::grad_mut(Var v) { return node(v).grad; }
bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }

Var Tape::matmul(Var a, Var b) {
  const Tensor& A = val(a);
  const Tensor& B = val(b);
  check_2d(A, "matmul", "lhs");
  check_2d(B, "matmul", "rhs");
  check(A.cols() == B.rows(), "matmul: inner dims differ, lhs ",
        shape_str(A.shape), " rhs ", shape_str(B.shape));
  Tensor out({A.rows(), B.cols()});
  as_mat(out).noalias() = as_mat(A) * as_mat(B);
  bool rg = requires_grad(a) || requires_grad(b);
  Var o = push(std::move(out), rg, {});
  node(o).back = [this, a, b, o]() {
    const Tensor& go = grad(o);
    as_mat(grad_mut(a)).noalias() += as_mat(go) * as_mat(val(b)).transpose();
    as_mat(grad_mut(b)).noalias() += as_mat(val(a)).transpose() * as_mat(go);
  };
  return o;
}

Var Tape::matmul_nt(Var a, Var b) {
  const Tensor& A = val(a);
  const Tensor& B = val(b);
  check_2d(A, "matmul_nt", "lhs");
  check_2d(B, "matmul_nt", "rhs");
  check(A.cols() == B.cols(), "matmul_nt: inner dims differ, lhs ",
        shape_str(A.shape), " rhs ", shape_str(B.shape));
  Tensor out({A.rows(), B.rows()});
  as_mat(out).noalias() = as_mat(A) * as_mat(B).transpose();
  bool rg = requires_grad(a) || requires_grad(b);
  Var o = push(std::move(out), rg, {});
  node(o).back = [this, a, b, o]() {
    const Tensor& go = grad(o);
    as_mat(grad_mut(a)).noalias() += as_mat(go) * as_mat(val(b));
    as_mat(grad_mut(b)).noalias() += as_mat(go).transpose() * as_mat(val(a));
  };
  return o;
}

Var Tape::add(Var a, Var b) {
  const Tensor& A = val(a);
  const Tensor& B = val(b);
  check(A.shape == B.shape, "add: shape mismatch ", shape_str(A.shape), " vs ",
        shape_str(B.shape));
  Tensor out(A.shape);
  for (int64_t i = 0; i < A.numel(); ++i) out.data[i] = A.data[i] + B.data[i];
  Var o = push(std::move(out), requires_grad(a) || requires_grad(b), {});
  node(o).back = [this, a, b, o]() {
    const Tensor& go = grad(o);
    Tensor& ga = grad_mut(a);
    Tensor& gb = grad_mut(b);
    for (int64_t i = 0; i < go.numel(); ++i) {
      ga.data[i] += go.data[i];
      gb.data[i] += go.data[i];
    }
  };
  return o;
}

Var Tape::sub(Var a, Var b) {
  const Tensor& A = val(a);
  const Tensor& B = val(b);
  check(A.shape == B.shape, "sub: shape mismatch ", shape_str(A.shape), " vs ",
        shape_str(B.shape));
  Tensor out(A.shape);
  for (int64_t i = 0; i < A.numel(); ++i) out.data[i] = A.data[i] - B.data[i];
  Var o = push(std::move(out), requires_grad(a) || requires_grad(b), {});
  node(o).back = [this, a, b, o]() {
    const Tensor& go = grad(o);
    Tensor& ga = grad_mut(a);
    Tensor& gb = grad_mut(b);
    for (int64_t i = 0; i < go.numel(); ++i) {
      ga.data[i] += go.data[i];
      gb.data[i] -= go.data[i];
    }
  };
  return o;
}

Var Tape::mul(Var a, Var b) {
  const Tensor& A = val(a);
  const Tensor& B = val(b);
  check(A.shape == B.shape, "mul: shape mismatch ", shape_str(A.shape), " vs ",
        shape_str(B.shape));
  Tensor out(A.shape);
  for (int64_t i = 0; i < A.numel(); ++i) out.data[i] = A.data[i] * B.data[i];
  Var o = push(std::move(out), requires_grad(a) || requires_grad(b), {});
  node(o).back = [this, a, b, o]() {
    const Tensor& go = grad(o);
    const Tensor& A2 = val(a);
    const Tensor& B2 = val(b);
    Tensor& ga = grad_mut(a);
    Tensor& gb = grad_mut(b);
    for (int64_t i = 0; i < go.numel(); ++i) {
      ga.data[i] += go.data[i] * B2.data[i];
      gb.data[i] += go.data[i] * A2.data[i];
    }
  };
  return o;
}

Var Tape::add_rowvec(Var a, Var v) {
  const Tensor& A = val(a);
  const Tensor& V = val(v);
  check_2d(A, "add_rowvec", "lhs");
  check(V.numel() == A.cols(), "add_rowvec: vector length ", V.numel(),
        " does not match row width ", A.cols());
  Tensor out(A.shape);
  int64_t n = A.cols();
  for (int64_t r = 0; r < A.rows(); ++r)
    for (int64_t c = 0; c < n; ++c)
      out.data[r * n + c] = A.data[r * n + c] + V.data[c];
  Var o = push(std::move(out), requires_grad(a) || requires_grad(v), {});
  node(o).back = [this, a, v, o, n]() {
    const Tensor& go = grad(o);
    Tensor& ga = grad_mut(a);
    Tensor& gv = grad_mut(v);
    for (int64_t r = 0; r < go.rows(); ++r)
      for (int64_t c = 0; c < n; ++c) {
        ga.data[r * n + c] += go.data[r * n + c];
        gv.data[c] += go.data[r * n + c];
      }
  };
  return o;
}

Var Tape::scale(Var a, double c) {
  const Tensor& A = val(a);
  Tensor out(A.shape);
  for (int64_t i = 0; i < A.numel(); ++i) out.data[i] = A.data[i] * c;
  Var o = push(std::move(out), requires_grad(a), {});
  node(o).back = [this, a, o, c]() {
    const Tensor& go = grad(o);
    Tensor& ga = grad_mut(a);
    for (int64_t i = 0; i < go.numel(); ++i) ga.data[i] += go.data[i] * c;
  };
  return o;
}

Var Tape::rows_gather(Var table, std::vector<int32_t> idx) {
  const Tensor& T = val(table);
  check_2d(T, "rows_gather", "table");
  int64_t n = T.cols();
  Tensor out({static_cast<int64_t>(idx.size()), n});
  for (size_t i = 0; i < idx.size(); ++i) {
    check(idx[i] >= 0 && idx[i] < T.rows(), "rows_gather: index ", idx[i],
          " out of range for table with ", T.rows(), " rows");
    std::copy_n(T.data.begin() + idx[i] * n, n, out.data.begin() + i * n);
  }
  Var o = push(std::move(out), requires_grad(table), {});
  node(o).back = [this, table, o, n, idx = std::move(idx)]() {
    const Tensor& go = grad(o);
    Tensor& gt = grad_mut(table);
    for (size_t i = 0; i < idx.size(); ++i)
      for (int64_t c = 0; c < n; ++c)
        gt.data[idx[i] * n + c] += go.data[static_cast<int64_t>(i) * n + c];
  };
  return o;
}

Var Tape::rmsnorm(Var x, Var gain) {
  const Tensor& X = val(x);
  const Tensor& G = val(gain);
  check_2d(X, "rmsnorm", "input");
  check(G.numel() == X.cols(), "rmsnorm: gain length ", G.numel(),
        " does not match row width ", X.cols());
  int64_t n = X.cols();
  Tensor out(X.shape);
  std::vector<double> inv_rms(static_cast<size_t>(X.rows()));
  for (int64_t r = 0; r < X.rows(); ++r) {
    double ss = 0.0;
    for (int64_t c = 0; c < n; ++c) ss += X.data[r * n + c] * X.data[r * n + c];
    double ir = 1.0 / std::sqrt(ss / static_cast<double>(n) + kRmsNormEps);
    inv_rms[static_cast<size_t>(r)] = ir;
    for (int64_t c = 0; c < n; ++c)
      out.data[r * n + c] = X.data[r * n + c] * ir * G.data[c];
  }
  Var o = push(std::move(out), requires_grad(x) || requires_grad(gain), {});
  node(o).back = [this, x, gain, o, n, inv_rms = std::move(inv_rms)]() {
    const Tensor& go = grad(o);
    const Tensor& X2 = val(x);
    const Tensor& G2 = val(gain);
    Tensor& gx = grad_mut(x);
    Tensor& gg = grad_mut(gain);
    for (int64_t r = 0; r < X2.rows(); ++r) {
      double ir = inv_rms[static_cast<size_t>(r)];
      // dL/du with u = x * inv_rms; dot = sum_j (dL/du_j) x_j
      double dot = 0.0;
      for (int64_t c = 0; c < n; ++c) {
        double du = go.data[r * n + c] * G2.data[c];
        dot += du * X2.data[r * n + c];
        gg.data[c] += go.data[r * n + c] * X2.data[r * n + c] * ir;
      }
      double k = dot * ir * ir * ir / static_cast<double>(n);
      for (int64_t c = 0; c < n; ++c) {
        double du = go.data[r * n + c] * G2.data[c];
        gx.data[r * n + c] += du * ir - X2.data[r * n + c] * k;
      }
    }
  };
  return o;
}

Var Tape::silu(Var x) {
  const Tensor& X = val(x);
  Tensor out(X.shape);
  for (int64_t i = 0; i < X.numel(); ++i)
    out.data[i] = X.data[i] * sigmoid(X.data[i]);
  Var o = push(std::move(out), requires_grad(x), {});
  node(o).back = [this, x, o]() {
    const Tensor& go = grad(o);
    const Tensor& X2 = val(x);
    Tensor& gx = grad_mut(x);
    for (int64_t i = 0; i < X2.numel(); ++i) {
      double s = sigmoid(X2.data[i]);
      gx.data[i] += go.data[i] * s * (1.0 + X2.data[i] * (1.0 - s));
    }
  };
  return o;
}

Var Tape::causal_attention(Var q, Var k, Var v, int64_t n_heads,
                           std::vector<int32_t> seq_id) {
  const Tensor& Q = val(q);
  const Tensor& K = val(k);
  const Tensor& V = val(v);
  check_2d(Q, "causal_attention", "q");
  check(Q.shape == K.shape && Q.shape == V.shape,
        "causal_attention: q/k/v shapes differ: ", shape_str(Q.shape), " ",
        shape_str(K.shape), " ", shape_str(V.shape));
  int64_t t_total = Q.rows();
  int64_t d_model = Q.cols();
  check(n_heads > 0 && d_model % n_heads == 0, "causal_attention: width ",
        d_model, " not divisible by ", n_heads, " heads");
  check(static_cast<int64_t>(seq_id.size()) == t_total,
        "causal_attention: seq_id length ", seq_id.size(), " vs ", t_total,
        " rows");
  int64_t dh = d_model / n_heads;
  double alpha = 1.0 / std::sqrt(static_cast<double>(dh));

  // Segment starts; equal ids must be contiguous for causality to be
  // meaningful, so reject ids that reappear after their run ended.
  std::vector<int64_t> start(static_cast<size_t>(t_total));
  {
    std::unordered_set<int32_t> closed;
    for (int64_t t = 0; t < t_total; ++t) {
      if (t == 0 || seq_id[t] != seq_id[t - 1]) {
        check(closed.insert(seq_id[t]).second,
              "causal_attention: seq id ", seq_id[t],
              " is not a contiguous run");
        start[t] = t;
      } else {
        start[t] = start[t - 1];
      }
    }
  }

  // Ragged attention weights, stored for backward. Layout: for each row t,
  // heads are consecutive blocks of (t - start[t] + 1) weights.
  std::vector<int64_t> w_off(static_cast<size_t>(t_total) + 1, 0);
  for (int64_t t = 0; t < t_total; ++t)
    w_off[t + 1] = w_off[t] + (t - start[t] + 1) * n_heads;
  std::vector<double> weights(static_cast<size_t>(w_off[t_total]));

  Tensor out(Q.shape);
  std::vector<double> scores;
  for (int64_t t = 0; t < t_total; ++t) {
    int64_t s0 = start[t];
    int64_t span = t - s0 + 1;
    scores.resize(static_cast<size_t>(span));
    for (int64_t h = 0; h < n_heads; ++h) {
      const double* qt = Q.data.data() + t * d_model + h * dh;
      double mx = -1e300;
      for (int64_t i = 0; i < span; ++i) {
        const double* ki = K.data.data() + (s0 + i) * d_model + h * dh;
        double s = 0.0;
        for (int64_t c = 0; c < dh; ++c) s += qt[c] * ki[c];
        s *= alpha;
        scores[static_cast<size_t>(i)] = s;
        mx = std::max(mx, s);
      }
      double z = 0.0;
      for (int64_t i = 0; i < span; ++i) {
        double e = std::exp(scores[static_cast<size_t>(i)] - mx);
        scores[static_cast<size_t>(i)] = e;
        z += e;
      }
      double* wt = weights.data() + w_off[t] + h * span;
      double* ot = out.data.data() + t * d_model + h * dh;
      for (int64_t i = 0; i < span; ++i) {
        double a = scores[static_cast<size_t>(i)] / z;
        wt[i] = a;
        const double* vi = V.data.data() + (s0 + i) * d_model + h * dh;
        for (int64_t c = 0; c < dh; ++c) ot[c] += a * vi[c];
      }
    }
  }

  bool rg = requires_grad(q) || requires_grad(k) || requires_grad(v);
  Var o = push(std::move(out), rg, {});
  node(o).back = [this, q, k, v, o, n_heads, dh, d_model, alpha, t_total,
                  start = std::move(start), w_off = std::move(w_off),
                  weights = std::move(weights)]() {
    const Tensor& go = grad(o);
    const Tensor& Q2 = val(q);
    const Tensor& K2 = val(k);
    const Tensor& V2 = val(v);
    Tensor& gq = grad_mut(q);
    Tensor& gk = grad_mut(k);
    Tensor& gv = grad_mut(v);
    std::vector<double> da;
    for (int64_t t = 0; t < t_total; ++t) {
      int64_t s0 = start[t];
      int64_t span = t - s0 + 1;
      da.resize(static_cast<size_t>(span));
      for (int64_t h = 0; h < n_heads; ++h) {
        const double* wt = weights.data() + w_off[t] + h * span;
        const double* got = go.data.data() + t * d_model + h * dh;
        const double* qt = Q2.data.data() + t * d_model + h * dh;
        double* gqt = gq.data.data() + t * d_model + h * dh;
        // da_i = dout . v_i ; also dV_i += a_i * dout
        double wda = 0.0;
        for (int64_t i = 0; i < span; ++i) {
          const double* vi = V2.data.data() + (s0 + i) * d_model + h * dh;
          double* gvi = gv.data.data() + (s0 + i) * d_model + h * dh;
          double d = 0.0;
          for (int64_t c = 0; c < dh; ++c) {
            d += got[c] * vi[c];
            gvi[c] += wt[i] * got[c];
          }
          da[static_cast<size_t>(i)] = d;
          wda += wt[i] * d;
        }
        // ds_i = a_i (da_i - sum_j a_j da_j); dq += alpha ds_i k_i;
        // dk_i += alpha ds_i q_t
        for (int64_t i = 0; i < span; ++i) {
          double ds = wt[i] * (da[static_cast<size_t>(i)] - wda) * alpha;
          const double* ki = K2.data.data() + (s0 + i) * d_model + h * dh;
          double* gki = gk.data.data() + (s0 + i) * d_model + h * dh;
          for (int64_t c = 0; c < dh; ++c) {
            gqt[c] += ds * ki[c];
            gki[c] += ds * qt[c];
          }
        }
      }
    }
  };
  return o;
}

Var Tape::softmax_xent(Var logits, std::vector<int32_t> targets,
                       std::vector<double> weights) {
  const Tensor& L = val(logits);
  check_2d(L, "softmax_xent", "logits");
  check(static_cast<int64_t>(targets.size()) == L.rows(),
        "softmax_xent: ", targets.size(), " targets for ", L.rows(), " rows");
  check(weights.size() == targets.size(), "softmax_xent: ", weights.size(),
        " weights for ", targets.size(), " targets");
  int64_t n = L.cols();
  double wsum = 0.0;
  for (double w : weights) {
    check(w >= 0.0, "softmax_xent: negative weight ", w);
    wsum += w;
  }
  check(wsum > 0.0, "softmax_xent: all token weights are zero");

  // Cache softmax rows only where the weight is nonzero; elsewhere the
  // gradient is zero and the forward term is skipped.
  std::vector<double> probs(static_cast<size_t>(L.numel()), 0.0);
  double loss = 0.0;
  for (int64_t r = 0; r < L.rows(); ++r) {
    if (weights[static_cast<size_t>(r)] == 0.0) continue;
    int32_t y = targets[static_cast<size_t>(r)];
    check(y >= 0 && y < n, "softmax_xent: target ", y, " out of range for ", n,
          " classes");
    const double* row = L.data.data() + r * n;
    double mx = row[0];
    for (int64_t c = 1; c < n; ++c) mx = std::max(mx, row[c]);
    double z = 0.0;
    for (int64_t c = 0; c < n; ++c) z += std::exp(row[c] - mx);
    double logz = std::log(z) + mx;
    loss += weights[static_cast<size_t>(r)] * (logz - row[y]);
    double* p = probs.data() + r * n;
    for (int64_t c = 0; c < n; ++c) p[c] = std::exp(row[c] - logz);
  }
  loss /= wsum;
  check(std::isfinite(loss), "softmax_xent: non-finite loss");

  Var o = push(Tensor::scalar(loss), requires_grad(logits), {});
  node(o).back = [this, logits, o, n, wsum, targets = std::move(targets),
                  weights = std::move(weights), probs = std::move(probs)]() {
    double g = grad(o).data[0] / wsum;
    Tensor& gl = grad_mut(logits);
    for (int64_t r = 0; r < gl.rows(); ++r) {
      double w = weights[static_cast<size_t>(r)];
      if (w == 0.0) continue;
      const double* p = probs.data() + r * n;
      double* gr = gl.data.data() + r * n;
      double gw = g * w;
      for (int64_t c = 0; c < n; ++c) gr[c] += gw * p[c];
      gr[targets[static_cast<size_t>(r)]] -= gw;
    }
  };
  return o;
}

Var Tape::gather_log_softmax(Var logits, std::vector<int32_t> targets) {
  const Tensor& L = val(logits);
  check_2d(L, "gather_log_softmax", "logits");
  check(static_cast<int64_t>(targets.size()) == L.rows(),
        "gather_log_softmax: ", targets.size(), " targets for ", L.rows(),
        " rows");
  int64_t n = L.cols();
  Tensor out({L.rows(), 1});
  std::vector<double> probs(static_cast<size_t>(L.numel()));
  for (int64_t r = 0; r < L.rows(); ++r) {
    int32_t y = targets[static_cast<size_t>(r)];
    check(y >= 0 && y < n, "gather_log_softmax: target ", y,
          " out of range for ", n, " classes");
    const double* row = L.data.data() + r * n;
    double mx = row[0];
    for (int64_t c = 1; c < n; ++c) mx = std::max(mx, row[c]);
    double z = 0.0;
    for (int64_t c = 0; c < n; ++c) z += std::exp(row[c] - mx);
    double logz = std::log(z) + mx;
    out.data[r] = row[y] - logz;
    double* p = probs.data() + r * n;
    for (int64_t c = 0; c < n; ++c) p[c] = std::exp(row[c] - logz);
  }
  Var o = push(std::move(out), requires_grad(logits), {});
  node(o).back = [this, logits, o, n, targets = std::move(targets),
                  probs = std::move(probs)]() {
    const Tensor& go = grad(o);
    Tensor& gl = grad_mut(logits);
    for (int64_t r = 0; r < gl.rows(); ++r) {
      double g = go.data[r];
      if (g == 0.0) continue;
      const double* p = probs.data() + r * n;
      double* gr = gl.data.data() + r * n;
      for (int64_t c = 0; c < n; ++c) gr[c] -= g * p[c];
      gr[targets[static_cast<size_t>(r)]] += g;
    }
  };
  return o;
}

Var Tape::grpo_surrogate(Var new_logp, const GrpoTokenBatch& batch,
                         double clip_eps, double kl_beta, GrpoStats* stats) {
  const Tensor& P = val(new_logp);
  size_t t_total = static_cast<size_t>(P.numel());
  check(P.shape.size() == 2 && P.cols() == 1,
        "grpo_surrogate: new_logp must be [T,1], got ", shape_str(P.shape));
  check(batch.old_logp.size() == t_total && batch.ref_logp.size() == t_total &&
            batch.advantage.size() == t_total && batch.weight.size() == t_total,
        "grpo_surrogate: batch field lengths do not match ", t_total,
        " tokens");
  check(clip_eps > 0.0, "grpo_surrogate: clip_eps must be positive, got ",
        clip_eps);

  double loss = 0.0;
  double kl_sum = 0.0;
  double w_sum = 0.0;
  double ratio_sum = 0.0;
  int64_t clipped = 0;
  // Per-token gradient of the loss w.r.t. new_logp, finished in backward by
  // multiplying with the incoming scalar gradient.
  std::vector<double> dlogp(t_total);
  for (size_t t = 0; t < t_total; ++t) {
    double a = batch.advantage[t];
    double w = batch.weight[t];
    double r = std::exp(P.data[t] - batch.old_logp[t]);
    double lo = 1.0 - clip_eps;
    double hi = 1.0 + clip_eps;
    double rc = std::min(std::max(r, lo), hi);
    double unclipped = r * a;
    double clipped_term = rc * a;
    double term;
    double dterm;  // d(term)/d(new_logp_t)
    if (unclipped <= clipped_term) {
      term = unclipped;
      dterm = unclipped;  // d(r*a)/dlogp = r*a
    } else {
      term = clipped_term;
      dterm = 0.0;  // clip binds, constant in logp
      ++clipped;
    }
    double d = batch.ref_logp[t] - P.data[t];
    double kl = std::exp(d) - d - 1.0;
    // d(kl)/dlogp = 1 - exp(ref - logp)
    loss += w * (kl_beta * kl - term);
    dlogp[t] = w * (kl_beta * (1.0 - std::exp(d)) - dterm);
    kl_sum += w * kl;
    w_sum += w;
    ratio_sum += r;
  }
  check(std::isfinite(loss), "grpo_surrogate: non-finite loss");
  if (stats != nullptr) {
    stats->mean_kl = w_sum > 0.0 ? kl_sum / w_sum : 0.0;
    stats->clip_fraction =
        t_total > 0 ? static_cast<double>(clipped) / static_cast<double>(t_total)
                    : 0.0;
    stats->mean_ratio =
        t_total > 0 ? ratio_sum / static_cast<double>(t_total) : 0.0;
  }

  Var o = push(Tensor::scalar(loss), requires_grad(new_logp), {});
  node(o).back = [this, new_logp, o, dlogp = std::move(dlogp)]() {
    double g = grad(o).data[0];
    Tensor& gp = grad_mut(new_logp);
    for (size_t t = 0; t < dlogp.size(); ++t) gp.data[t] += g * dlogp[t];
  };
  return o;
}

Var Tape::sum(Var a) {
  const Tensor& A = val(a);
  double s = 0.0;
  for (double v : A.data) s += v;
  Var o = push(Tensor::scalar(s), requires_grad(a), {});
  node(o).back = [this, a, o]() {
    double g = grad(o).data[0];
    Tensor& ga = grad_mut(a);
    for (double& v : ga.data) v += g;
  };
  return o;
}

Var Tape::squared_error_sum(Var a, Var b) {
  const Tensor& A = val(a);
  const Tensor& B = val(b);
  check(A.shape == B.shape, "squared_error_sum: shape mismatch ",
        shape_str(A.shape), " vs ", shape_str(B.shape));
  double s = 0.0;
  for (int64_t i = 0; i < A.numel(); ++i) {
    double d = A.data[i] - B.data[i];
    s += d * d;
  }
  Var o = push(Tensor::scalar(s), requires_grad(a) || requires_grad(b), {});
  node(o).back = [this, a, b, o]() {
    double g = grad(o).data[0];
    const Tensor& A2 = val(a);
    const Tensor& B2 = val(b);
    Tensor& ga = grad_mut(a);
    Tensor& gb = grad_mut(b);
    for (int64_t i = 0; i < A2.numel(); ++i) {
      double d = 2.0 * g * (A2.data[i] - B2.data[i]);
      ga.data[i] += d;
      gb.data[i] -= d;
    }
  };
  return o;
}

Var Tape::stop_grad(Var a) {
  return push(val(a), false, {});
}

void Tape::backward(Var loss) {
  Node& ln = node(loss);
  check(ln.val.numel() == 1, "backward: loss must be scalar, got shape ",
        shape_str(ln.val.shape));
  check(std::isfinite(ln.val.data[0]), "backward: loss is non-finite");
  ln.grad.data[0] += 1.0;
  for (int64_t i = loss.id; i >= 0; --i) {
    if (nodes_[static_cast<size_t>(i)].back) nodes_[static_cast<size_t>(i)].back();
  }
}

}  // namespace genrec
