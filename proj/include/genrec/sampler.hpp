// Copyright 2026 The GenRec Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "genrec/policy.hpp"
#include "genrec/trie.hpp"

namespace genrec {

// One generated completion. score is the plain sum of the completion's
// full-vocabulary token log-probs; it is never divided by length, here or
// anywhere downstream.
struct Candidate {
  std::vector<int32_t> tokens;  // trie path plus the closing EOS
  int32_t item_id = -1;
  double score = 0.0;
  int32_t rank = 0;  // 1-indexed, rank 1 = highest score
};

// A group of candidates for one prompt. Candidates keep their generation
// order (beam rank order, or draw order for samplers); the rank fields are
// always a permutation of 1..G by descending score.
struct GenerationGroup {
  std::vector<int32_t> prompt;
  std::vector<Candidate> candidates;
  bool width_clamped = false;  // beam width exceeded the reachable items
};

struct DiversityStat {
  int64_t unique = 0;
  int64_t total = 0;
  double ratio = 0.0;  // unique / total
};

DiversityStat diversity(const GenerationGroup& group);

// Legality-masked beam search. Every expansion is restricted to the trie's
// legal continuations; candidates are ranked by cumulative log-prob with
// ties broken by lexicographic token order. A width beyond the number of
// reachable items is clamped (and flagged on the group). With width equal
// to the item count this enumerates the whole dictionary exactly.
GenerationGroup beam_search(const ParamSet& params, const PolicyConfig& cfg,
                            const std::vector<int32_t>& prompt, int64_t width,
                            const TokenTrie& trie);

// n_samples independent ancestral samples through the trie. At each step
// the policy's distribution is renormalized over the legal tokens (no mass
// on illegal ones); temperature rescales log-probs before renormalizing.
// Duplicates are allowed. Ranks order candidates by descending score,
// duplicates by draw index.
GenerationGroup sample_top_k(const ParamSet& params, const PolicyConfig& cfg,
                             const std::vector<int32_t>& prompt,
                             int64_t n_samples, const TokenTrie& trie,
                             uint64_t seed, double temperature = 1.0);

// ceil(1.5 * G): the over-draw budget of dynamic_sample.
inline int64_t dynamic_sample_draw_count(int64_t group_size) {
  return (3 * group_size + 1) / 2;
}

// Over-generate then select: draws ceil(1.5*G) samples (the same stream
// sample_top_k(seed) would produce), keeps the target item first when it
// was actually drawn (never injected otherwise), then the remaining unique
// items in first-draw order, then duplicates until G are selected.
GenerationGroup dynamic_sample(const ParamSet& params, const PolicyConfig& cfg,
                               const std::vector<int32_t>& prompt,
                               int64_t group_size, int32_t target_item,
                               const TokenTrie& trie, uint64_t seed,
                               double temperature = 1.0);

// One JSON line per group: prompt, then candidates with tokens, item_id,
// score, rank.
void save_groups_jsonl(const std::vector<GenerationGroup>& groups,
                       const std::string& path);

}  // namespace genrec
