// Copyright 2026 The GenRec Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "genrec/check.hpp"
#include "genrec/corpus.hpp"
#include "genrec/vocab.hpp"

namespace genrec {

// Prefix tree over token sequences with an item id at the end of each
// inserted path. Legal continuations of a node are its children, plus EOS
// when the node completes an item; generation that consumes the EOS has
// produced exactly one catalog item. Paths may nest (one sequence a prefix
// of another): the EOS choice disambiguates where the item ends.
class TokenTrie {
 public:
  static constexpr int32_t kRoot = 0;

  void insert(const std::vector<int32_t>& tokens, int32_t item_id) {
    check(!tokens.empty(), "trie: empty path for item ", item_id);
    check(item_id >= 0, "trie: negative item id ", item_id);
    int32_t node = kRoot;
    for (int32_t tok : tokens) {
      check(tok >= 4, "trie: special token ", tok, " in the path of item ",
            item_id);
      auto [it, added] = nodes_[static_cast<size_t>(node)].children.emplace(
          tok, static_cast<int32_t>(nodes_.size()));
      if (added) nodes_.emplace_back();
      node = it->second;
    }
    Node& end = nodes_[static_cast<size_t>(node)];
    check(end.item_id < 0, "trie: duplicate path for item ", item_id,
          "; item ", end.item_id, " already ends here");
    end.item_id = item_id;
    ++n_terminals_;
  }

  // Child reached by `token`, or -1 when the edge does not exist.
  int32_t step(int32_t node, int32_t token) const {
    const auto& children = at(node).children;
    auto it = children.find(token);
    return it == children.end() ? -1 : it->second;
  }

  // Follows prefix from the root; rejects the first illegal token by index.
  int32_t walk(const std::vector<int32_t>& prefix) const {
    int32_t node = kRoot;
    for (size_t i = 0; i < prefix.size(); ++i) {
      node = step(node, prefix[i]);
      check(node >= 0, "trie: token ", prefix[i], " at position ", i,
            " leaves the tree");
    }
    return node;
  }

  bool is_terminal(int32_t node) const { return at(node).item_id >= 0; }

  int32_t item_at(int32_t node) const {
    const Node& n = at(node);
    check(n.item_id >= 0, "trie: node ", node, " does not end an item");
    return n.item_id;
  }

  // Children in ascending token order; EOS appended at item boundaries.
  std::vector<int32_t> legal_tokens(int32_t node) const {
    const Node& n = at(node);
    std::vector<int32_t> out;
    out.reserve(n.children.size() + 1);
    for (const auto& [tok, child] : n.children) out.push_back(tok);
    if (n.item_id >= 0) out.push_back(VocabLayout::kEos);
    return out;
  }

  std::vector<int32_t> legal_next_tokens(
      const std::vector<int32_t>& prefix) const {
    return legal_tokens(walk(prefix));
  }

  int64_t terminal_count() const { return n_terminals_; }

 private:
  struct Node {
    std::map<int32_t, int32_t> children;
    int32_t item_id = -1;
  };

  const Node& at(int32_t node) const {
    check(node >= 0 && node < static_cast<int32_t>(nodes_.size()),
          "trie: node ", node, " out of range");
    return nodes_[static_cast<size_t>(node)];
  }

  std::vector<Node> nodes_{1};
  int64_t n_terminals_ = 0;
};

// The two decoding dictionaries of one catalog: SID sequences and title
// word sequences, each mapping back to the item.
struct CatalogTries {
  TokenTrie sid;
  TokenTrie title;
};

inline CatalogTries build_catalog_tries(const SidTokenMap& sids,
                                        const Catalog& catalog,
                                        const VocabLayout& layout) {
  CatalogTries tries;
  for (const auto& [item_id, tokens] : sids.items())
    tries.sid.insert(tokens, item_id);
  for (const Item& item : catalog.items)
    tries.title.insert(title_word_tokens(item, layout), item.item_id);
  return tries;
}

}  // namespace genrec
