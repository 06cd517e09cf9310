// Copyright 2026 The GenRec Authors
// SPDX-License-Identifier: Apache-2.0

#include "genrec/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

#include "genrec/check.hpp"
#include "genrec/rng.hpp"

namespace genrec {

using nlohmann::json;

namespace {

// Longest path any sane dictionary produces; a walk beyond this means the
// trie is cyclic or corrupt.
constexpr int64_t kMaxPathTokens = 256;

// rank = position under descending score, ties kept in generation order
void assign_ranks(std::vector<Candidate>& candidates) {
  std::vector<size_t> order(candidates.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return candidates[a].score > candidates[b].score;
  });
  for (size_t pos = 0; pos < order.size(); ++pos)
    candidates[order[pos]].rank = static_cast<int32_t>(pos + 1);
}

}  // namespace

DiversityStat diversity(const GenerationGroup& group) {
  check(!group.candidates.empty(), "diversity: empty group");
  std::set<int32_t> items;
  for (const Candidate& c : group.candidates) items.insert(c.item_id);
  DiversityStat stat;
  stat.unique = static_cast<int64_t>(items.size());
  stat.total = static_cast<int64_t>(group.candidates.size());
  stat.ratio = static_cast<double>(stat.unique) /
               static_cast<double>(stat.total);
  return stat;
}

GenerationGroup beam_search(const ParamSet& params, const PolicyConfig& cfg,
                            const std::vector<int32_t>& prompt, int64_t width,
                            const TokenTrie& trie) {
  check(width >= 1, "beam_search: width must be at least 1, got ", width);
  check(trie.terminal_count() > 0, "beam_search: empty dictionary");
  int64_t effective = std::min(width, trie.terminal_count());

  struct Beam {
    std::vector<int32_t> tokens;
    int32_t node = TokenTrie::kRoot;
    double score = 0.0;
    bool done = false;
  };

  PolicyScorer scorer(params, cfg);
  scorer.set_prompt(prompt);

  std::vector<Beam> beams(1);
  for (int64_t round = 0;; ++round) {
    check(round <= kMaxPathTokens, "beam_search: no termination after ",
          kMaxPathTokens, " expansions");
    bool all_done = true;
    std::vector<Beam> pool;
    for (const Beam& b : beams) {
      if (b.done) {
        pool.push_back(b);
        continue;
      }
      all_done = false;
      std::vector<double> lp = scorer.next_log_probs(b.tokens);
      for (int32_t tok : trie.legal_tokens(b.node)) {
        Beam nb = b;
        nb.score += lp[static_cast<size_t>(tok)];
        nb.tokens.push_back(tok);
        if (tok == VocabLayout::kEos)
          nb.done = true;  // item ends here; node already names it
        else
          nb.node = trie.step(b.node, tok);
        pool.push_back(std::move(nb));
      }
    }
    if (all_done) break;
    std::sort(pool.begin(), pool.end(), [](const Beam& a, const Beam& b) {
      if (a.score != b.score) return a.score > b.score;
      return std::lexicographical_compare(a.tokens.begin(), a.tokens.end(),
                                          b.tokens.begin(), b.tokens.end());
    });
    if (static_cast<int64_t>(pool.size()) > effective)
      pool.resize(static_cast<size_t>(effective));
    beams = std::move(pool);
  }

  GenerationGroup group;
  group.prompt = prompt;
  group.width_clamped = effective < width;
  for (const Beam& b : beams) {
    Candidate c;
    c.tokens = b.tokens;
    c.item_id = trie.item_at(b.node);
    c.score = b.score;
    group.candidates.push_back(std::move(c));
  }
  assign_ranks(group.candidates);
  return group;
}

namespace {

Candidate draw_one(PolicyScorer& scorer, const TokenTrie& trie, Rng& rng,
                   double temperature) {
  Candidate c;
  int32_t node = TokenTrie::kRoot;
  for (int64_t steps = 0;; ++steps) {
    check(steps <= kMaxPathTokens, "sample: no EOS after ", kMaxPathTokens,
          " tokens");
    std::vector<double> lp = scorer.next_log_probs(c.tokens);
    std::vector<int32_t> legal = trie.legal_tokens(node);
    check(!legal.empty(), "sample: dead end at trie node ", node);

    // renormalize over the legal set only: weights sum to the full legal
    // mass and nothing else, so no probability leaks to illegal tokens
    double mx = lp[static_cast<size_t>(legal[0])];
    for (int32_t tok : legal)
      mx = std::max(mx, lp[static_cast<size_t>(tok)]);
    std::vector<double> weights(legal.size());
    for (size_t i = 0; i < legal.size(); ++i)
      weights[i] = std::exp(
          (lp[static_cast<size_t>(legal[i])] - mx) / temperature);

    int32_t tok = legal[static_cast<size_t>(rng.weighted(weights))];
    c.score += lp[static_cast<size_t>(tok)];
    c.tokens.push_back(tok);
    if (tok == VocabLayout::kEos) {
      c.item_id = trie.item_at(node);
      return c;
    }
    node = trie.step(node, tok);
  }
}

}  // namespace

GenerationGroup sample_top_k(const ParamSet& params, const PolicyConfig& cfg,
                             const std::vector<int32_t>& prompt,
                             int64_t n_samples, const TokenTrie& trie,
                             uint64_t seed, double temperature) {
  check(n_samples >= 1, "sample_top_k: need at least 1 sample, got ",
        n_samples);
  check(temperature > 0.0, "sample_top_k: temperature must be positive");
  check(trie.terminal_count() > 0, "sample_top_k: empty dictionary");

  PolicyScorer scorer(params, cfg);
  scorer.set_prompt(prompt);
  Rng rng(seed);

  GenerationGroup group;
  group.prompt = prompt;
  for (int64_t g = 0; g < n_samples; ++g)
    group.candidates.push_back(draw_one(scorer, trie, rng, temperature));
  assign_ranks(group.candidates);
  return group;
}

GenerationGroup dynamic_sample(const ParamSet& params, const PolicyConfig& cfg,
                               const std::vector<int32_t>& prompt,
                               int64_t group_size, int32_t target_item,
                               const TokenTrie& trie, uint64_t seed,
                               double temperature) {
  check(group_size >= 2, "dynamic_sample: group size must be at least 2, got ",
        group_size);
  int64_t budget = dynamic_sample_draw_count(group_size);
  GenerationGroup raw = sample_top_k(params, cfg, prompt, budget, trie, seed,
                                     temperature);

  // selection order: drawn target first, then first occurrences of every
  // other item, then leftover duplicates, all in draw order
  std::vector<size_t> picked;
  std::set<int32_t> seen;
  for (size_t i = 0; i < raw.candidates.size(); ++i) {
    if (raw.candidates[i].item_id != target_item) continue;
    picked.push_back(i);
    seen.insert(target_item);
    break;
  }
  for (size_t i = 0; i < raw.candidates.size(); ++i)
    if (seen.insert(raw.candidates[i].item_id).second) picked.push_back(i);
  for (size_t i = 0;
       i < raw.candidates.size() &&
       picked.size() < static_cast<size_t>(group_size);
       ++i) {
    if (std::find(picked.begin(), picked.end(), i) == picked.end())
      picked.push_back(i);
  }
  if (picked.size() > static_cast<size_t>(group_size))
    picked.resize(static_cast<size_t>(group_size));

  GenerationGroup group;
  group.prompt = prompt;
  for (size_t i : picked) group.candidates.push_back(raw.candidates[i]);
  assign_ranks(group.candidates);
  return group;
}

void save_groups_jsonl(const std::vector<GenerationGroup>& groups,
                       const std::string& path) {
  std::ofstream out(path);
  check(out.good(), "save_groups_jsonl: cannot open ", path);
  for (const GenerationGroup& g : groups) {
    json j;
    j["prompt"] = g.prompt;
    j["width_clamped"] = g.width_clamped;
    json cands = json::array();
    for (const Candidate& c : g.candidates) {
      json jc;
      jc["tokens"] = c.tokens;
      jc["item_id"] = c.item_id;
      jc["score"] = c.score;
      jc["rank"] = c.rank;
      cands.push_back(std::move(jc));
    }
    j["candidates"] = std::move(cands);
    out << j.dump() << "\n";
  }
  check(out.good(), "save_groups_jsonl: write failed for ", path);
}

}  // namespace genrec
