// Copyright 2026 The GenRec Authors
// SPDX-License-Identifier: Apache-2.0

#include "genrec/sft.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

#include "genrec/check.hpp"
#include "genrec/rng.hpp"
#include "genrec/tape.hpp"

namespace genrec {

namespace {

// One forward + masked cross entropy for a packed batch. grads is filled
// only when non-null (training); loss value is returned either way.
double batch_loss(const ParamSet& params, const PolicyConfig& cfg,
                  const PackedBatch& batch, std::vector<Tensor>* grads) {
  Tape tape;
  std::vector<Var> vars = policy_leaves(tape, params, grads != nullptr);
  Var logits = policy_logits_graph(tape, vars, cfg, batch.tokens,
                                   batch.seq_ids);
  Var loss = tape.softmax_xent(logits, batch.targets, batch.weights);
  double value = tape.val(loss).data[0];
  if (grads != nullptr && std::isfinite(value)) {
    tape.backward(loss);
    grads->clear();
    grads->reserve(vars.size());
    for (Var v : vars) grads->push_back(tape.grad(v));
  }
  return value;
}

}  // namespace

PackedBatch pack_examples(const std::vector<TrainingExample>& examples,
                          const std::vector<int64_t>& indices,
                          int64_t max_len) {
  check(!indices.empty(), "pack_examples: empty batch");
  PackedBatch out;
  for (size_t b = 0; b < indices.size(); ++b) {
    int64_t idx = indices[b];
    check(idx >= 0 && idx < static_cast<int64_t>(examples.size()),
          "pack_examples: index ", idx, " outside [0, ", examples.size(), ")");
    const TrainingExample& e = examples[static_cast<size_t>(idx)];
    std::vector<int32_t> seq = e.full_sequence();
    int64_t n = static_cast<int64_t>(seq.size());
    check(n <= max_len, "pack_examples: example ", idx, " has ", n,
          " tokens, model takes at most ", max_len);
    for (int64_t t = 0; t < n; ++t) {
      out.tokens.push_back(seq[static_cast<size_t>(t)]);
      out.seq_ids.push_back(static_cast<int32_t>(b));
      bool has_next = t + 1 < n;
      out.targets.push_back(has_next ? seq[static_cast<size_t>(t + 1)]
                                     : VocabLayout::kPad);
      double w = has_next ? e.mask[static_cast<size_t>(t + 1)] : 0.0;
      out.weights.push_back(w);
      out.masked_count += w;
    }
  }
  check(out.masked_count > 0.0, "pack_examples: batch has no masked-in rows");
  return out;
}

double eval_loss(const ParamSet& params, const PolicyConfig& cfg,
                 const std::vector<TrainingExample>& examples,
                 int64_t batch_size) {
  check(!examples.empty(), "eval_loss: no examples");
  check(batch_size > 0, "eval_loss: batch size must be positive");
  double weighted_sum = 0.0;
  double count = 0.0;
  int64_t n = static_cast<int64_t>(examples.size());
  for (int64_t start = 0; start < n; start += batch_size) {
    std::vector<int64_t> idx(
        static_cast<size_t>(std::min(batch_size, n - start)));
    std::iota(idx.begin(), idx.end(), start);
    PackedBatch batch = pack_examples(examples, idx, cfg.max_len);
    double loss = batch_loss(params, cfg, batch, nullptr);
    weighted_sum += loss * batch.masked_count;
    count += batch.masked_count;
  }
  return weighted_sum / count;
}

SftResult sft_train(const PolicyConfig& cfg, const ParamSet& init,
                    const std::vector<TrainingExample>& train,
                    const std::vector<TrainingExample>& valid,
                    const SftConfig& scfg,
                    const std::string& history_csv_path) {
  check(!train.empty(), "sft_train: empty training corpus");
  check(!valid.empty(), "sft_train: empty validation corpus");
  check(scfg.batch_size > 0 && scfg.max_epochs > 0 && scfg.patience > 0,
        "sft_train: batch size, epochs, and patience must be positive");

  SftResult result;
  result.params = init;  // returned unchanged if nothing improves

  ParamSet params = init;
  AdamW opt(scfg.optim, params);
  Rng rng(scfg.seed);

  int64_t n = static_cast<int64_t>(train.size());
  int64_t batches_per_epoch = (n + scfg.batch_size - 1) / scfg.batch_size;
  int64_t total_steps = scfg.max_epochs * batches_per_epoch;
  std::vector<int64_t> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  int64_t step = 0;
  int64_t epochs_without_improvement = 0;
  std::vector<Tensor> grads;
  for (int64_t epoch = 0; epoch < scfg.max_epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_sum = 0.0;
    double epoch_count = 0.0;
    for (int64_t start = 0; start < n; start += scfg.batch_size) {
      std::vector<int64_t> idx(
          order.begin() + start,
          order.begin() + std::min(start + scfg.batch_size, n));
      PackedBatch batch = pack_examples(train, idx, cfg.max_len);
      double loss = batch_loss(params, cfg, batch, &grads);
      if (!std::isfinite(loss)) {
        result.aborted_non_finite = true;
        return result;
      }
      epoch_sum += loss * batch.masked_count;
      epoch_count += batch.masked_count;
      opt.step(params, grads, cosine_lr(1.0, step, total_steps));
      ++step;
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = epoch_sum / epoch_count;
    stats.valid_loss = eval_loss(params, cfg, valid, scfg.batch_size);
    result.history.push_back(stats);
    if (!history_csv_path.empty())
      save_loss_history_csv(result.history, history_csv_path);
    if (!std::isfinite(stats.valid_loss)) {
      result.aborted_non_finite = true;
      return result;
    }

    if (stats.valid_loss < result.best_valid_loss) {
      result.best_valid_loss = stats.valid_loss;
      result.best_epoch = epoch;
      result.params = params;
      epochs_without_improvement = 0;
    } else if (++epochs_without_improvement >= scfg.patience) {
      break;
    }
  }
  return result;
}

void save_loss_history_csv(const std::vector<EpochStats>& history,
                           const std::string& path) {
  std::ofstream out(path);
  check(out.good(), "save_loss_history_csv: cannot open ", path);
  out.precision(17);
  out << "epoch,train_loss,valid_loss\n";
  for (const EpochStats& s : history)
    out << s.epoch << "," << s.train_loss << "," << s.valid_loss << "\n";
  check(out.good(), "save_loss_history_csv: write failed for ", path);
}

}  // namespace genrec
