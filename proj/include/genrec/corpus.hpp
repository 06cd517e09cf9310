// Copyright 2026 The GenRec Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "genrec/dataset.hpp"
#include "genrec/vocab.hpp"

namespace genrec {

// Task families of the supervised mix. The enum value doubles as the
// task-tag index in the vocabulary, so the tag token itself announces the
// task to the model.
enum class TaskFamily : int32_t {
  kGenerativeRetrieval = 0,  // SID history -> next-item SID
  kTextHistoryToSid = 1,     // title-word history -> next-item SID
  kSidHistoryToTitle = 2,    // SID history -> next-item title
  kSidToTitle = 3,           // one item's SID -> its title
  kTitleToSid = 4,           // one item's title -> its SID
};
inline constexpr int32_t kNumTaskFamilies = 5;

// One next-token training example. Training runs on input + target
// concatenated; the mask is 1.0 exactly on the target span (the response
// tokens and the closing EOS) and 0.0 on the prompt, so only responses
// carry loss.
struct TrainingExample {
  std::vector<int32_t> input;   // BOS, task tag, ..., SEP
  std::vector<int32_t> target;  // response tokens, then EOS
  std::vector<double> mask;     // over input + target
  int32_t task = 0;             // TaskFamily value

  std::vector<int32_t> full_sequence() const {
    std::vector<int32_t> s = input;
    s.insert(s.end(), target.begin(), target.end());
    return s;
  }
};

// Sampling weights over the five task families.
struct TaskMix {
  std::array<double, kNumTaskFamilies> weights{0.6, 0.1, 0.1, 0.1, 0.1};
};

// Weights must be nonnegative and sum to 1.
void validate_mix(const TaskMix& mix);

// Mask shape, 0/1 values, prompt-then-response layout, nonempty response.
void validate_example(const TrainingExample& e);

// Catalog item looked up by id (ids are row indices by construction).
const Item& item_by_id(const Catalog& catalog, int32_t item_id);

// An item's title as word-token ids. Unknown words are rejected.
std::vector<int32_t> title_word_tokens(const Item& item,
                                       const VocabLayout& layout);

// Single-example constructors, one per family. All are deterministic.
TrainingExample make_generative_retrieval(const Example& ex,
                                          const SidTokenMap& sids,
                                          const VocabLayout& layout);
TrainingExample make_text_history_to_sid(const Example& ex,
                                         const Catalog& catalog,
                                         const SidTokenMap& sids,
                                         const VocabLayout& layout);
TrainingExample make_sid_history_to_title(const Example& ex,
                                          const Catalog& catalog,
                                          const SidTokenMap& sids,
                                          const VocabLayout& layout);
TrainingExample make_sid_to_title(const Item& item, const SidTokenMap& sids,
                                  const VocabLayout& layout);
TrainingExample make_title_to_sid(const Item& item, const SidTokenMap& sids,
                                  const VocabLayout& layout);

// One retrieval example per split entry, in split order.
std::vector<TrainingExample> build_generative_retrieval(
    const std::vector<Example>& split, const SidTokenMap& sids,
    const VocabLayout& layout);

// n_examples drawn over the four alignment families with probabilities
// proportional to their mix weights. A zero weight yields zero examples of
// that family.
std::vector<TrainingExample> build_alignment_examples(
    const Catalog& catalog, const std::vector<Example>& split,
    const SidTokenMap& sids, const VocabLayout& layout, const TaskMix& mix,
    uint64_t seed, int64_t n_examples);

// Full supervised corpus: n_examples drawn over all five families per the
// mix. Pure function of (seed, inputs, mix).
std::vector<TrainingExample> build_sft_corpus(
    uint64_t seed, const Catalog& catalog, const std::vector<Example>& split,
    const SidTokenMap& sids, const VocabLayout& layout, const TaskMix& mix,
    int64_t n_examples);

// Line-delimited JSON: tokens (input + target), mask, task.
void save_examples_jsonl(const std::vector<TrainingExample>& examples,
                         const std::string& path);
std::vector<TrainingExample> load_examples_jsonl(const std::string& path);

}  // namespace genrec
