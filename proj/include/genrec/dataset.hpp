// Copyright 2026 The GenRec Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "genrec/tensor.hpp"

namespace genrec {

struct Item {
  int32_t item_id = 0;
  std::vector<double> embedding;
  std::vector<std::string> title_tokens;
  int32_t cluster_label = 0;
};

struct Catalog {
  int64_t dim = 0;
  int32_t n_clusters = 0;
  std::vector<Item> items;
};

struct UserLog {
  int32_t user_id = 0;
  std::vector<int32_t> items;  // chronological
};

struct InteractionLog {
  std::vector<UserLog> users;
};

// One next-item prediction example: predict target from the history prefix.
struct Example {
  int32_t user_id = 0;
  std::vector<int32_t> history;
  int32_t target = 0;
};

struct DatasetSplit {
  std::vector<Example> train;
  std::vector<Example> valid;
  std::vector<Example> test;
};

// The shared 64-word vocabulary that item titles are composed from.
const std::array<std::string, 64>& title_words();

// Clustered embeddings (center + isotropic noise) with unique multi-word
// titles. Items are assigned round-robin to clusters, so every cluster is
// populated. Pure function of the seed.
Catalog generate_catalog(uint64_t seed, int64_t n_items, int64_t dim,
                         int32_t n_clusters, double noise_scale = 0.15);

// The planted sequential pattern: a fixed permutation over cluster labels.
// generate_interactions with the same seed uses exactly this permutation.
std::vector<int32_t> cluster_permutation(uint64_t seed, int32_t n_clusters);

// Next item: with probability markov_sharpness stay on the permutation
// kernel (next cluster = perm[current]), otherwise pick a uniform cluster;
// the item is uniform within the chosen cluster. Per-user streams are
// forked from the seed, so user u's log does not depend on n_users.
InteractionLog generate_interactions(uint64_t seed, const Catalog& catalog,
                                     int64_t n_users, double markov_sharpness,
                                     int64_t len_min = 5, int64_t len_max = 8);

// Per-user prefix examples in chronological order, earliest 80% to train,
// then half the remainder (floored) to valid, rest to test; the newest
// example is always test. Users with fewer than 3 examples go entirely to
// train.
DatasetSplit chronological_split(const InteractionLog& log);

// Keep only the most recent max_len history items of every example.
void truncate_histories(DatasetSplit& split, int64_t max_len = 10);

// Matrix-factorization scorer. Trained user rows live in user_factors;
// unseen users are scored through the mean of their history items'
// factors, which stands in as the user vector.
struct CfBaseline {
  Tensor user_factors;  // [n_users, f]
  Tensor item_factors;  // [n_items, f]

  double score(int32_t user_id, int32_t item_id) const;
  std::vector<double> user_vector(const std::vector<int32_t>& history) const;
  double score_history(const std::vector<int32_t>& history,
                       int32_t item_id) const;
};

// Full-batch Adam on binary cross entropy with one resampled uniform
// negative per positive. epochs = 0 leaves the random init untouched.
// loss_curve, when given, receives one pre-update loss value per epoch.
CfBaseline train_cf_baseline(uint64_t seed, const DatasetSplit& split,
                             int64_t n_users, int64_t n_items, int64_t factors,
                             int64_t epochs, double lr,
                             std::vector<double>* loss_curve = nullptr);

// Line-delimited JSON persistence. Doubles survive the round trip exactly.
void save_catalog_jsonl(const Catalog& catalog, const std::string& path);
Catalog load_catalog_jsonl(const std::string& path);
void save_interactions_jsonl(const InteractionLog& log,
                             const std::string& path);
InteractionLog load_interactions_jsonl(const std::string& path);

void save_cf_baseline(const CfBaseline& cf, const std::string& path);
CfBaseline load_cf_baseline(const std::string& path);

}  // namespace genrec
