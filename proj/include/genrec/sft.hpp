// Copyright 2026 The GenRec Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "genrec/corpus.hpp"
#include "genrec/optimizer.hpp"
#include "genrec/policy.hpp"

namespace genrec {

struct SftConfig {
  int64_t batch_size = 32;
  int64_t max_epochs = 10;
  // epochs the validation loss may fail to improve before training stops
  int64_t patience = 1;
  uint64_t seed = 0;
  AdamWConfig optim;

  SftConfig() { optim.lr = 3e-4; }
};

struct EpochStats {
  int64_t epoch = 0;
  double train_loss = 0.0;  // masked-token mean over the epoch's batches
  double valid_loss = 0.0;
};

struct SftResult {
  ParamSet params;  // weights of the best validation epoch seen
  std::vector<EpochStats> history;
  int64_t best_epoch = -1;  // -1 when no epoch finished
  double best_valid_loss = std::numeric_limits<double>::infinity();
  bool aborted_non_finite = false;
};

// Examples packed into one forward: segment per example, next-token targets
// shifted within each segment, weights copied from the loss masks (and 0 on
// each segment's last row, which has nothing to predict).
struct PackedBatch {
  std::vector<int32_t> tokens;
  std::vector<int32_t> seq_ids;
  std::vector<int32_t> targets;
  std::vector<double> weights;
  double masked_count = 0.0;
};

PackedBatch pack_examples(const std::vector<TrainingExample>& examples,
                          const std::vector<int64_t>& indices,
                          int64_t max_len);

// Mean masked cross entropy over the corpus. Pure; batch partitioning only
// affects grouping, not the (exactly accumulated) token-weighted mean.
double eval_loss(const ParamSet& params, const PolicyConfig& cfg,
                 const std::vector<TrainingExample>& examples,
                 int64_t batch_size = 32);

// Next-token training on masked positions with AdamW under a cosine decay
// schedule. After every epoch the validation loss is measured; training
// stops once it fails to improve for `patience` consecutive epochs, and the
// best-validation weights are returned. A non-finite loss aborts training
// and keeps the best weights seen. When history_csv_path is non-empty the
// per-epoch losses are written there as CSV.
SftResult sft_train(const PolicyConfig& cfg, const ParamSet& init,
                    const std::vector<TrainingExample>& train,
                    const std::vector<TrainingExample>& valid,
                    const SftConfig& scfg,
                    const std::string& history_csv_path = "");

void save_loss_history_csv(const std::vector<EpochStats>& history,
                           const std::string& path);

}  // namespace genrec
