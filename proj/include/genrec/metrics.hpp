// Copyright 2026 The GenRec Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "genrec/corpus.hpp"
#include "genrec/policy.hpp"
#include "genrec/trie.hpp"
#include "genrec/vocab.hpp"

namespace genrec {

// Top-K retrieval quality over one evaluation pass, plus the run metadata
// needed to tell reports apart in a ledger. hr / ndcg are parallel to ks.
struct MetricsReport {
  std::vector<int64_t> ks;
  std::vector<double> hr;
  std::vector<double> ndcg;
  double mean_diversity = 0.0;  // mean unique/total over the ranked lists
  int64_t n_examples = 0;
  int64_t short_lists = 0;  // examples whose list had fewer than k_max items
  uint64_t seed = 0;        // filled by the caller
  std::string stage;        // filled by the caller ("sft", "rl", ...)
  std::string config_hash;  // filled by the caller
};

// The reporting cutoffs: every standard K (3, 5, 10) up to k_max.
std::vector<int64_t> standard_eval_ks(int64_t k_max);

// Fraction of examples whose target appears in the first k entries of its
// ranked list. A list shorter than k is scored over what it has and counted
// in *n_short when given. ranked[i] pairs with targets[i]; entries are item
// ids, best first.
double hr_at_k(const std::vector<std::vector<int32_t>>& ranked,
               const std::vector<int32_t>& targets, int64_t k,
               int64_t* n_short = nullptr);

// Mean over examples of 1/log2(rank+1) when the target sits at 1-indexed
// rank <= k, else 0. One relevant item per example, so the ideal DCG is 1
// and the per-example value is already normalized.
double ndcg_at_k(const std::vector<std::vector<int32_t>>& ranked,
                 const std::vector<int32_t>& targets, int64_t k,
                 int64_t* n_short = nullptr);

// Metric core shared by model evaluation and fixed-list baselines: HR and
// NDCG at every standard K up to k_max, list diversity, and the short-list
// count at the k_max cutoff.
MetricsReport evaluate_ranking(const std::vector<std::vector<int32_t>>& ranked,
                               const std::vector<int32_t>& targets,
                               int64_t k_max = 10);

// Constrained beam decode of every example's retrieval prompt, then the
// metric core over the resulting item rankings. Pure function of its
// arguments. width must cover k_max so full-length lists are possible;
// a trie smaller than k_max still evaluates, with every list flagged short.
MetricsReport evaluate_model(const ParamSet& params, const PolicyConfig& cfg,
                             const std::vector<Example>& examples,
                             const SidTokenMap& sids, const VocabLayout& layout,
                             const TokenTrie& trie, int64_t k_max = 10,
                             int64_t width = 16);

// Items ranked by how often they occur as a training target, most frequent
// first, ties broken by ascending item id. Histories are not counted: each
// example's history is a prefix of the same user's stream, so counting it
// would tally early interactions once per later example.
std::vector<int32_t> popularity_baseline(const std::vector<Example>& train);

// The baseline's fixed ranking replicated across the examples and pushed
// through the metric core.
MetricsReport evaluate_fixed_ranking(const std::vector<int32_t>& ranking,
                                     const std::vector<Example>& examples,
                                     int64_t k_max = 10);

// One JSON document per report; doubles survive the round trip exactly.
void save_report_json(const MetricsReport& report, const std::string& path);
MetricsReport load_report_json(const std::string& path);

// Appends one row to the run ledger, writing the header first when the file
// does not exist yet. Columns: run_id, stage, hr@3/5/10, ndcg@3/5/10,
// diversity. Reports with other cutoffs are rejected here, not reshaped.
void append_run_csv(const MetricsReport& report, const std::string& run_id,
                    const std::string& path);

}  // namespace genrec
