// Copyright 2026 The GenRec Authors
// SPDX-License-Identifier: Apache-2.0

#include "genrec/corpus.hpp"

#include <cmath>
#include <fstream>
#include <map>

#include <json.hpp>

#include "genrec/check.hpp"
#include "genrec/rng.hpp"

namespace genrec {

using nlohmann::json;

namespace {

int32_t tag_token(const VocabLayout& layout, TaskFamily family) {
  return layout.task_tag(static_cast<int32_t>(family));
}

// Stamps the mask (prompt zeros, response ones) once input/target are set.
void finish(TrainingExample& e) {
  e.mask.assign(e.input.size(), 0.0);
  e.mask.insert(e.mask.end(), e.target.size(), 1.0);
  validate_example(e);
}

void append_history_sids(std::vector<int32_t>& out,
                         const std::vector<int32_t>& history,
                         const SidTokenMap& sids) {
  for (int32_t id : history) {
    const std::vector<int32_t>& toks = sids.tokens_for(id);
    out.insert(out.end(), toks.begin(), toks.end());
  }
}

// Titles of the history items, each followed by SEP so item boundaries
// survive in token space (titles vary in length).
void append_history_titles(std::vector<int32_t>& out,
                           const std::vector<int32_t>& history,
                           const Catalog& catalog, const VocabLayout& layout) {
  for (int32_t id : history) {
    std::vector<int32_t> words =
        title_word_tokens(item_by_id(catalog, id), layout);
    out.insert(out.end(), words.begin(), words.end());
    out.push_back(VocabLayout::kSep);
  }
}

}  // namespace

void validate_mix(const TaskMix& mix) {
  double total = 0.0;
  for (size_t i = 0; i < mix.weights.size(); ++i) {
    check(mix.weights[i] >= 0.0, "task mix: weight ", i, " is negative (",
          mix.weights[i], ")");
    total += mix.weights[i];
  }
  check(std::fabs(total - 1.0) < 1e-9, "task mix: weights sum to ", total,
        ", expected 1");
}

void validate_example(const TrainingExample& e) {
  check(!e.target.empty(), "training example: empty target span");
  check(e.mask.size() == e.input.size() + e.target.size(),
        "training example: mask length ", e.mask.size(), " for ",
        e.input.size() + e.target.size(), " tokens");
  for (size_t i = 0; i < e.mask.size(); ++i) {
    double want = i < e.input.size() ? 0.0 : 1.0;
    check(e.mask[i] == want, "training example: mask[", i, "] = ", e.mask[i],
          ", expected ", want);
  }
  check(e.task >= 0 && e.task < kNumTaskFamilies,
        "training example: task tag ", e.task, " outside [0, ",
        kNumTaskFamilies, ")");
}

const Item& item_by_id(const Catalog& catalog, int32_t item_id) {
  check(item_id >= 0 &&
            item_id < static_cast<int32_t>(catalog.items.size()),
        "catalog: item id ", item_id, " outside [0, ", catalog.items.size(),
        ")");
  const Item& item = catalog.items[static_cast<size_t>(item_id)];
  check(item.item_id == item_id, "catalog: row ", item_id, " holds item ",
        item.item_id, "; ids must equal row indices");
  return item;
}

std::vector<int32_t> title_word_tokens(const Item& item,
                                       const VocabLayout& layout) {
  static const std::map<std::string, int32_t> index = [] {
    std::map<std::string, int32_t> m;
    const auto& words = title_words();
    for (size_t i = 0; i < words.size(); ++i)
      m[words[i]] = static_cast<int32_t>(i);
    return m;
  }();
  std::vector<int32_t> out;
  out.reserve(item.title_tokens.size());
  for (const std::string& w : item.title_tokens) {
    auto it = index.find(w);
    check(it != index.end(), "title of item ", item.item_id,
          ": word '", w, "' is not in the shared word list");
    out.push_back(layout.word_token(it->second));
  }
  return out;
}

TrainingExample make_generative_retrieval(const Example& ex,
                                          const SidTokenMap& sids,
                                          const VocabLayout& layout) {
  TrainingExample e;
  e.task = static_cast<int32_t>(TaskFamily::kGenerativeRetrieval);
  e.input = {VocabLayout::kBos,
             tag_token(layout, TaskFamily::kGenerativeRetrieval)};
  append_history_sids(e.input, ex.history, sids);
  e.input.push_back(VocabLayout::kSep);
  e.target = sids.tokens_for(ex.target);
  e.target.push_back(VocabLayout::kEos);
  finish(e);
  return e;
}

TrainingExample make_text_history_to_sid(const Example& ex,
                                         const Catalog& catalog,
                                         const SidTokenMap& sids,
                                         const VocabLayout& layout) {
  TrainingExample e;
  e.task = static_cast<int32_t>(TaskFamily::kTextHistoryToSid);
  e.input = {VocabLayout::kBos,
             tag_token(layout, TaskFamily::kTextHistoryToSid)};
  append_history_titles(e.input, ex.history, catalog, layout);
  e.target = sids.tokens_for(ex.target);
  e.target.push_back(VocabLayout::kEos);
  finish(e);
  return e;
}

TrainingExample make_sid_history_to_title(const Example& ex,
                                          const Catalog& catalog,
                                          const SidTokenMap& sids,
                                          const VocabLayout& layout) {
  TrainingExample e;
  e.task = static_cast<int32_t>(TaskFamily::kSidHistoryToTitle);
  e.input = {VocabLayout::kBos,
             tag_token(layout, TaskFamily::kSidHistoryToTitle)};
  append_history_sids(e.input, ex.history, sids);
  e.input.push_back(VocabLayout::kSep);
  e.target = title_word_tokens(item_by_id(catalog, ex.target), layout);
  e.target.push_back(VocabLayout::kEos);
  finish(e);
  return e;
}

TrainingExample make_sid_to_title(const Item& item, const SidTokenMap& sids,
                                  const VocabLayout& layout) {
  TrainingExample e;
  e.task = static_cast<int32_t>(TaskFamily::kSidToTitle);
  e.input = {VocabLayout::kBos, tag_token(layout, TaskFamily::kSidToTitle)};
  const std::vector<int32_t>& toks = sids.tokens_for(item.item_id);
  e.input.insert(e.input.end(), toks.begin(), toks.end());
  e.input.push_back(VocabLayout::kSep);
  e.target = title_word_tokens(item, layout);
  e.target.push_back(VocabLayout::kEos);
  finish(e);
  return e;
}

TrainingExample make_title_to_sid(const Item& item, const SidTokenMap& sids,
                                  const VocabLayout& layout) {
  TrainingExample e;
  e.task = static_cast<int32_t>(TaskFamily::kTitleToSid);
  e.input = {VocabLayout::kBos, tag_token(layout, TaskFamily::kTitleToSid)};
  std::vector<int32_t> words = title_word_tokens(item, layout);
  e.input.insert(e.input.end(), words.begin(), words.end());
  e.input.push_back(VocabLayout::kSep);
  e.target = sids.tokens_for(item.item_id);
  e.target.push_back(VocabLayout::kEos);
  finish(e);
  return e;
}

std::vector<TrainingExample> build_generative_retrieval(
    const std::vector<Example>& split, const SidTokenMap& sids,
    const VocabLayout& layout) {
  std::vector<TrainingExample> out;
  out.reserve(split.size());
  for (const Example& ex : split)
    out.push_back(make_generative_retrieval(ex, sids, layout));
  return out;
}

namespace {

TrainingExample draw_example(TaskFamily family, Rng& rng,
                             const Catalog& catalog,
                             const std::vector<Example>& split,
                             const SidTokenMap& sids,
                             const VocabLayout& layout) {
  auto pick_split = [&]() -> const Example& {
    check(!split.empty(), "corpus: history tasks need a non-empty split");
    return split[rng.below(split.size())];
  };
  auto pick_item = [&]() -> const Item& {
    check(!catalog.items.empty(), "corpus: item tasks need a non-empty catalog");
    return catalog.items[rng.below(catalog.items.size())];
  };
  switch (family) {
    case TaskFamily::kGenerativeRetrieval:
      return make_generative_retrieval(pick_split(), sids, layout);
    case TaskFamily::kTextHistoryToSid:
      return make_text_history_to_sid(pick_split(), catalog, sids, layout);
    case TaskFamily::kSidHistoryToTitle:
      return make_sid_history_to_title(pick_split(), catalog, sids, layout);
    case TaskFamily::kSidToTitle:
      return make_sid_to_title(pick_item(), sids, layout);
    case TaskFamily::kTitleToSid:
      return make_title_to_sid(pick_item(), sids, layout);
  }
  check(false, "corpus: unknown task family ", static_cast<int32_t>(family));
  return {};  // unreachable
}

std::vector<TrainingExample> sample_corpus(
    uint64_t seed, const Catalog& catalog, const std::vector<Example>& split,
    const SidTokenMap& sids, const VocabLayout& layout,
    const std::vector<double>& family_weights, int64_t n_examples) {
  check(n_examples >= 0, "corpus: negative example count ", n_examples);
  double total = 0.0;
  for (double w : family_weights) total += w;
  check(total > 0.0, "corpus: all family weights are zero");
  Rng rng(seed);
  std::vector<TrainingExample> out;
  out.reserve(static_cast<size_t>(n_examples));
  for (int64_t i = 0; i < n_examples; ++i) {
    TaskFamily family = static_cast<TaskFamily>(rng.weighted(family_weights));
    out.push_back(draw_example(family, rng, catalog, split, sids, layout));
  }
  return out;
}

}  // namespace

std::vector<TrainingExample> build_alignment_examples(
    const Catalog& catalog, const std::vector<Example>& split,
    const SidTokenMap& sids, const VocabLayout& layout, const TaskMix& mix,
    uint64_t seed, int64_t n_examples) {
  validate_mix(mix);
  std::vector<double> weights(mix.weights.begin(), mix.weights.end());
  weights[static_cast<size_t>(TaskFamily::kGenerativeRetrieval)] = 0.0;
  return sample_corpus(seed, catalog, split, sids, layout, weights,
                       n_examples);
}

std::vector<TrainingExample> build_sft_corpus(
    uint64_t seed, const Catalog& catalog, const std::vector<Example>& split,
    const SidTokenMap& sids, const VocabLayout& layout, const TaskMix& mix,
    int64_t n_examples) {
  validate_mix(mix);
  std::vector<double> weights(mix.weights.begin(), mix.weights.end());
  return sample_corpus(seed, catalog, split, sids, layout, weights,
                       n_examples);
}

void save_examples_jsonl(const std::vector<TrainingExample>& examples,
                         const std::string& path) {
  std::ofstream out(path);
  check(out.good(), "save_examples_jsonl: cannot open ", path);
  for (const TrainingExample& e : examples) {
    validate_example(e);
    json j;
    j["tokens"] = e.full_sequence();
    j["mask"] = e.mask;
    j["task"] = e.task;
    out << j.dump() << "\n";
  }
  check(out.good(), "save_examples_jsonl: write failed for ", path);
}

std::vector<TrainingExample> load_examples_jsonl(const std::string& path) {
  std::ifstream in(path);
  check(in.good(), "load_examples_jsonl: cannot open ", path);
  std::vector<TrainingExample> out;
  std::string line;
  int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    check(!j.is_discarded(), "load_examples_jsonl: bad JSON at ", path, ":",
          lineno);
    std::vector<int32_t> tokens = j.at("tokens").get<std::vector<int32_t>>();
    std::vector<double> mask = j.at("mask").get<std::vector<double>>();
    check(mask.size() == tokens.size(), "load_examples_jsonl: ", path, ":",
          lineno, " has ", mask.size(), " mask entries for ", tokens.size(),
          " tokens");
    // the response is the masked-in suffix; recover the prompt boundary
    size_t boundary = 0;
    while (boundary < mask.size() && mask[boundary] == 0.0) ++boundary;
    TrainingExample e;
    e.input.assign(tokens.begin(),
                   tokens.begin() + static_cast<int64_t>(boundary));
    e.target.assign(tokens.begin() + static_cast<int64_t>(boundary),
                    tokens.end());
    e.mask = std::move(mask);
    e.task = j.at("task").get<int32_t>();
    validate_example(e);  // also rejects non-contiguous masks
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace genrec
