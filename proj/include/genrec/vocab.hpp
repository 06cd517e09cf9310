// Copyright 2026 The GenRec Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <vector>

#include "genrec/check.hpp"
#include "genrec/codebook.hpp"

namespace genrec {

// Token id layout over one flat vocabulary:
//
//   [0..3]               PAD, BOS, EOS, SEP
//   [4 ..)               task tags, one per training task family
//   [.. +n_words)        title words
//   [.. +levels*codes)   SID tokens, id = sid_base + level*codes_per_level + code
//   [.. +n_disamb)       collision disambiguation indices
//
// Ranges are disjoint by construction and every id below vocab_size() maps
// back to exactly one (kind, index) pair. SID ids carry their level, so the
// same code integer at different levels is a different token.
struct VocabLayout {
  static constexpr int32_t kPad = 0;
  static constexpr int32_t kBos = 1;
  static constexpr int32_t kEos = 2;
  static constexpr int32_t kSep = 3;

  int32_t n_task_tags = 5;
  int32_t n_words = 64;
  int32_t n_levels = 3;
  int32_t codes_per_level = 32;
  int32_t n_disambiguation = 0;

  int32_t task_tag_base() const { return 4; }
  int32_t word_base() const { return task_tag_base() + n_task_tags; }
  int32_t sid_base() const { return word_base() + n_words; }
  int32_t disambiguation_base() const {
    return sid_base() + n_levels * codes_per_level;
  }
  int32_t vocab_size() const {
    return disambiguation_base() + n_disambiguation;
  }

  int32_t task_tag(int32_t t) const {
    check(t >= 0 && t < n_task_tags, "vocab: task tag ", t, " outside [0, ",
          n_task_tags, ")");
    return task_tag_base() + t;
  }
  int32_t word_token(int32_t w) const {
    check(w >= 0 && w < n_words, "vocab: word index ", w, " outside [0, ",
          n_words, ")");
    return word_base() + w;
  }
  int32_t sid_token(int32_t level, int32_t code) const {
    check(level >= 0 && level < n_levels, "vocab: SID level ", level,
          " outside [0, ", n_levels, ")");
    check(code >= 0 && code < codes_per_level, "vocab: SID code ", code,
          " outside [0, ", codes_per_level, ")");
    return sid_base() + level * codes_per_level + code;
  }
  int32_t disambiguation_token(int32_t i) const {
    check(i >= 0 && i < n_disambiguation, "vocab: disambiguation index ", i,
          " outside [0, ", n_disambiguation, ")");
    return disambiguation_base() + i;
  }

  bool is_special(int32_t id) const { return id >= 0 && id < task_tag_base(); }
  bool is_task_tag(int32_t id) const {
    return id >= task_tag_base() && id < word_base();
  }
  bool is_word(int32_t id) const { return id >= word_base() && id < sid_base(); }
  bool is_sid(int32_t id) const {
    return id >= sid_base() && id < disambiguation_base();
  }
  bool is_disambiguation(int32_t id) const {
    return id >= disambiguation_base() && id < vocab_size();
  }

  int32_t task_tag_index(int32_t id) const {
    check(is_task_tag(id), "vocab: id ", id, " is not a task tag");
    return id - task_tag_base();
  }
  int32_t word_index(int32_t id) const {
    check(is_word(id), "vocab: id ", id, " is not a word token");
    return id - word_base();
  }
  int32_t sid_level(int32_t id) const {
    check(is_sid(id), "vocab: id ", id, " is not a SID token");
    return (id - sid_base()) / codes_per_level;
  }
  int32_t sid_code(int32_t id) const {
    check(is_sid(id), "vocab: id ", id, " is not a SID token");
    return (id - sid_base()) % codes_per_level;
  }
  int32_t disambiguation_index(int32_t id) const {
    check(is_disambiguation(id), "vocab: id ", id,
          " is not a disambiguation token");
    return id - disambiguation_base();
  }

  // Structural fingerprint (FNV-1a over the layout fields). Checkpoints
  // store it so weights never load against a reshaped vocabulary.
  uint64_t fingerprint() const {
    uint64_t h = 1469598103934665603ull;
    auto mix = [&h](int64_t v) {
      for (int b = 0; b < 8; ++b) {
        h ^= static_cast<uint64_t>(v >> (8 * b)) & 0xffu;
        h *= 1099511628211ull;
      }
    };
    mix(n_task_tags);
    mix(n_words);
    mix(n_levels);
    mix(codes_per_level);
    mix(n_disambiguation);
    return h;
  }
};

// Tokens needed to disambiguate the worst collision group: the size of the
// largest group of items sharing a code tuple, or 0 when all tuples are
// unique (groups of one generate no disambiguation token at all).
inline int32_t required_disambiguation_tokens(
    const std::vector<SidAssignment>& table) {
  std::map<std::vector<int32_t>, int32_t> group_size;
  for (const auto& a : table) ++group_size[a.codes];
  int32_t need = 0;
  for (const auto& [codes, size] : group_size)
    if (size > 1) need = std::max(need, size);
  return need;
}

// Layout sized to a trained codebook and its assignment table.
inline VocabLayout layout_for(const Codebook& cb,
                              const std::vector<SidAssignment>& table,
                              int32_t n_task_tags = 5, int32_t n_words = 64) {
  VocabLayout v;
  v.n_task_tags = n_task_tags;
  v.n_words = n_words;
  v.n_levels = static_cast<int32_t>(cb.n_levels());
  int32_t codes = static_cast<int32_t>(cb.nominal_k);
  for (int64_t l = 0; l < cb.n_levels(); ++l)
    codes = std::max(codes, static_cast<int32_t>(cb.level_size(l)));
  v.codes_per_level = codes;
  v.n_disambiguation = required_disambiguation_tokens(table);
  return v;
}

// Item ids <-> generated token sequences. An item's sequence is its SID
// codes, level-tagged, plus a trailing disambiguation token only when the
// item's code tuple collides within the table.
class SidTokenMap {
 public:
  SidTokenMap(const VocabLayout& layout,
              const std::vector<SidAssignment>& table) {
    std::map<std::vector<int32_t>, int32_t> group_size;
    for (const auto& a : table) ++group_size[a.codes];
    for (const auto& a : table) {
      std::vector<int32_t> toks;
      toks.reserve(a.codes.size() + 1);
      for (size_t l = 0; l < a.codes.size(); ++l)
        toks.push_back(layout.sid_token(static_cast<int32_t>(l),
                                        a.codes[l]));
      if (group_size[a.codes] > 1)
        toks.push_back(layout.disambiguation_token(a.disambiguation));
      check(by_item_.emplace(a.item_id, toks).second,
            "sid token map: duplicate item id ", a.item_id);
      check(by_tokens_.emplace(std::move(toks), a.item_id).second,
            "sid token map: non-unique token sequence for item ", a.item_id);
    }
  }

  const std::vector<int32_t>& tokens_for(int32_t item_id) const {
    auto it = by_item_.find(item_id);
    check(it != by_item_.end(), "sid token map: unknown item id ", item_id);
    return it->second;
  }

  // -1 when no item has exactly this sequence
  int32_t item_for(const std::vector<int32_t>& tokens) const {
    auto it = by_tokens_.find(tokens);
    return it == by_tokens_.end() ? -1 : it->second;
  }

  size_t size() const { return by_item_.size(); }
  const std::map<int32_t, std::vector<int32_t>>& items() const {
    return by_item_;
  }

 private:
  std::map<int32_t, std::vector<int32_t>> by_item_;
  std::map<std::vector<int32_t>, int32_t> by_tokens_;
};

}  // namespace genrec
