// Copyright 2026 The GenRec Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "genrec/codebook.hpp"
#include "genrec/sft.hpp"
#include "genrec/tape.hpp"

using namespace genrec;

namespace {

// One small end-to-end world shared by the cases: synthetic catalog,
// chronological split, trained codebook, and the token maps over it.
struct World {
  Catalog catalog;
  DatasetSplit split;
  Codebook cb;
  std::vector<SidAssignment> table;
  VocabLayout layout;
  SidTokenMap sids;
};

const World& world() {
  static const World* w = [] {
    Catalog catalog = generate_catalog(3, 60, 8, 4);
    InteractionLog log = generate_interactions(3, catalog, 40, 0.9);
    DatasetSplit split = chronological_split(log);
    truncate_histories(split);
    std::vector<std::vector<double>> emb;
    for (const auto& item : catalog.items) emb.push_back(item.embedding);
    Codebook cb = train_rq_kmeans(emb, 3, 8, 25, 3);
    std::vector<SidAssignment> table = assign_sids(emb, cb);
    VocabLayout layout = layout_for(cb, table);
    SidTokenMap sids(layout, table);
    return new World{std::move(catalog), std::move(split), std::move(cb),
                     std::move(table),   layout,           std::move(sids)};
  }();
  return *w;
}

PolicyConfig small_policy(const VocabLayout& layout, uint64_t seed = 7) {
  PolicyConfig cfg;
  cfg.n_layers = 2;
  cfg.d_model = 32;
  cfg.n_heads = 2;
  cfg.d_ff = 48;
  cfg.max_len = 64;
  cfg.vocab_size = layout.vocab_size();
  cfg.seed = seed;
  return cfg;
}

// First n split examples whose token sequences are pairwise distinct.
std::vector<Example> distinct_examples(size_t n, size_t skip = 0) {
  const World& w = world();
  std::set<std::vector<int32_t>> seen;
  std::vector<Example> out;
  for (const Example& ex : w.split.train) {
    TrainingExample e = make_generative_retrieval(ex, w.sids, w.layout);
    if (!seen.insert(e.full_sequence()).second) continue;
    if (skip > 0) {
      --skip;
      continue;
    }
    out.push_back(ex);
    if (out.size() == n) break;
  }
  REQUIRE(out.size() == n);
  return out;
}

// item ids parsed back out of a SID token run that ends at `terminator`
std::vector<int32_t> decode_sid_run(const std::vector<int32_t>& tokens,
                                    size_t begin, int32_t terminator) {
  const World& w = world();
  std::vector<int32_t> ids;
  size_t i = begin;
  while (i < tokens.size() && tokens[i] != terminator) {
    std::vector<int32_t> group;
    for (int l = 0; l < 3; ++l) group.push_back(tokens.at(i++));
    if (i < tokens.size() && w.layout.is_disambiguation(tokens[i]))
      group.push_back(tokens[i++]);
    ids.push_back(w.sids.item_for(group));
  }
  return ids;
}

}  // namespace

TEST_CASE("retrieval examples have the documented shape") {
  const World& w = world();
  // find two items without a disambiguation suffix
  int32_t plain_a = -1, plain_b = -1;
  for (const auto& [id, toks] : w.sids.items()) {
    if (toks.size() != 3) continue;
    (plain_a < 0 ? plain_a : plain_b) = id;
    if (plain_b >= 0) break;
  }
  REQUIRE(plain_b >= 0);

  Example ex;
  ex.history = {plain_a};
  ex.target = plain_b;
  TrainingExample e = make_generative_retrieval(ex, w.sids, w.layout);

  CHECK(e.input.size() == 1 + 1 + 3 + 1);  // BOS, tag, one SID, SEP
  CHECK(e.input.front() == VocabLayout::kBos);
  CHECK(e.input[1] == w.layout.task_tag(0));
  CHECK(e.input.back() == VocabLayout::kSep);
  CHECK(e.target.size() == 4);
  CHECK(e.target.back() == VocabLayout::kEos);
  CHECK(e.task == static_cast<int32_t>(TaskFamily::kGenerativeRetrieval));

  // mask is exactly zero on the prompt, one on SID + EOS
  REQUIRE(e.mask.size() == e.input.size() + e.target.size());
  for (size_t i = 0; i < e.input.size(); ++i) CHECK(e.mask[i] == 0.0);
  for (size_t i = 0; i < e.target.size(); ++i)
    CHECK(e.mask[e.input.size() + i] == 1.0);
}

TEST_CASE("input tokens decode back to the original item ids") {
  const World& w = world();
  size_t checked = 0;
  for (size_t i = 0; i < w.split.train.size() && checked < 50; ++i) {
    const Example& ex = w.split.train[i];
    TrainingExample e = make_generative_retrieval(ex, w.sids, w.layout);
    CHECK(decode_sid_run(e.input, 2, VocabLayout::kSep) == ex.history);
    std::vector<int32_t> target_ids =
        decode_sid_run(e.target, 0, VocabLayout::kEos);
    REQUIRE(target_ids.size() == 1);
    CHECK(target_ids[0] == ex.target);
    ++checked;
  }
  CHECK(checked == 50);
}

TEST_CASE("a history item without a SID is rejected by id") {
  const World& w = world();
  std::vector<SidAssignment> three;
  for (int32_t id : {1, 2, 3}) {
    SidAssignment a;
    a.item_id = id;
    a.codes = {id, 0, 0};
    three.push_back(a);
  }
  SidTokenMap partial(w.layout, three);
  Example ex;
  ex.history = {2, 57};
  ex.target = 1;
  CHECK_THROWS_WITH_AS(make_generative_retrieval(ex, partial, w.layout),
                       doctest::Contains("unknown item id 57"), genrec::Error);
}

TEST_CASE("title-to-SID inverts SID-to-title item by item") {
  const World& w = world();
  for (int32_t id : {0, 17, 42}) {
    const Item& item = item_by_id(w.catalog, id);
    TrainingExample to_title = make_sid_to_title(item, w.sids, w.layout);
    TrainingExample to_sid = make_title_to_sid(item, w.sids, w.layout);

    // strip BOS/tag/SEP from inputs and EOS from targets before comparing
    std::vector<int32_t> sid_prompt(to_title.input.begin() + 2,
                                    to_title.input.end() - 1);
    std::vector<int32_t> sid_answer(to_sid.target.begin(),
                                    to_sid.target.end() - 1);
    CHECK(sid_prompt == sid_answer);
    std::vector<int32_t> title_prompt(to_sid.input.begin() + 2,
                                      to_sid.input.end() - 1);
    std::vector<int32_t> title_answer(to_title.target.begin(),
                                      to_title.target.end() - 1);
    CHECK(title_prompt == title_answer);
    CHECK(title_answer == title_word_tokens(item, w.layout));
  }
}

TEST_CASE("zero mix weight silences a family") {
  const World& w = world();
  TaskMix mix;
  mix.weights = {0.7, 0.3, 0.0, 0.0, 0.0};
  std::vector<TrainingExample> corpus = build_sft_corpus(
      11, w.catalog, w.split.train, w.sids, w.layout, mix, 500);
  REQUIRE(corpus.size() == 500);
  for (const auto& e : corpus) CHECK(e.task <= 1);

  // alignment-only builder never emits the retrieval family
  std::vector<TrainingExample> align = build_alignment_examples(
      w.catalog, w.split.train, w.sids, w.layout, TaskMix{}, 11, 300);
  for (const auto& e : align)
    CHECK(e.task != static_cast<int32_t>(TaskFamily::kGenerativeRetrieval));
}

TEST_CASE("family proportions in a large corpus track the mix") {
  const World& w = world();
  TaskMix mix;  // default 0.6 / 0.1 / 0.1 / 0.1 / 0.1
  std::vector<TrainingExample> corpus = build_sft_corpus(
      13, w.catalog, w.split.train, w.sids, w.layout, mix, 10000);
  std::array<int64_t, kNumTaskFamilies> counts{};
  for (const auto& e : corpus) ++counts[static_cast<size_t>(e.task)];
  for (size_t f = 0; f < kNumTaskFamilies; ++f) {
    double fraction = static_cast<double>(counts[f]) / 10000.0;
    CHECK(std::fabs(fraction - mix.weights[f]) < 0.02);
  }
}

TEST_CASE("corpus construction is a pure function of the seed") {
  const World& w = world();
  auto build = [&](uint64_t seed) {
    return build_sft_corpus(seed, w.catalog, w.split.train, w.sids, w.layout,
                            TaskMix{}, 200);
  };
  std::vector<TrainingExample> a = build(5), b = build(5), c = build(6);
  REQUIRE(a.size() == b.size());
  bool differs = false;
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].full_sequence() == b[i].full_sequence());
    CHECK(a[i].task == b[i].task);
    if (i < c.size() && a[i].full_sequence() != c[i].full_sequence())
      differs = true;
  }
  CHECK(differs);
}

TEST_CASE("mix validation rejects bad weights") {
  TaskMix mix;
  mix.weights = {0.6, 0.1, 0.1, 0.1, 0.2};
  CHECK_THROWS_WITH_AS(validate_mix(mix), doctest::Contains("sum"),
                       genrec::Error);
  mix.weights = {1.2, -0.2, 0.0, 0.0, 0.0};
  CHECK_THROWS_WITH_AS(validate_mix(mix), doctest::Contains("negative"),
                       genrec::Error);
}

TEST_CASE("examples survive the JSONL round trip") {
  const World& w = world();
  std::vector<TrainingExample> corpus = build_sft_corpus(
      17, w.catalog, w.split.train, w.sids, w.layout, TaskMix{}, 50);
  std::string path = "/tmp/genrec_test_corpus.jsonl";
  save_examples_jsonl(corpus, path);
  std::vector<TrainingExample> back = load_examples_jsonl(path);
  REQUIRE(back.size() == corpus.size());
  for (size_t i = 0; i < corpus.size(); ++i) {
    CHECK(back[i].input == corpus[i].input);
    CHECK(back[i].target == corpus[i].target);
    CHECK(back[i].mask == corpus[i].mask);
    CHECK(back[i].task == corpus[i].task);
  }

  {
    std::ofstream out(path, std::ios::trunc);
    out << "{\"tokens\": [1, 5, 2], \"mask\": [1.0, 0.0, 1.0], \"task\": 0}\n";
  }
  CHECK_THROWS_AS(load_examples_jsonl(path), genrec::Error);  // hole in mask
  std::remove(path.c_str());
}

TEST_CASE("packing shifts targets and keeps loss off the prompt") {
  const World& w = world();
  std::vector<Example> exs = distinct_examples(2);
  std::vector<TrainingExample> examples = {
      make_generative_retrieval(exs[0], w.sids, w.layout),
      make_generative_retrieval(exs[1], w.sids, w.layout)};
  PackedBatch pb = pack_examples(examples, {0, 1}, 64);

  size_t row = 0;
  double want_count = 0.0;
  for (size_t b = 0; b < examples.size(); ++b) {
    std::vector<int32_t> seq = examples[b].full_sequence();
    for (size_t t = 0; t < seq.size(); ++t, ++row) {
      CHECK(pb.tokens[row] == seq[t]);
      CHECK(pb.seq_ids[row] == static_cast<int32_t>(b));
      if (t + 1 < seq.size()) {
        CHECK(pb.targets[row] == seq[t + 1]);
        CHECK(pb.weights[row] == examples[b].mask[t + 1]);
      } else {
        CHECK(pb.weights[row] == 0.0);  // nothing to predict
      }
    }
    for (double m : examples[b].mask) want_count += m;
  }
  CHECK(row == pb.tokens.size());
  CHECK(pb.masked_count == want_count);

  // gradient w.r.t. the logits is exactly zero on every masked-out row
  PolicyConfig cfg = small_policy(w.layout);
  ParamSet params = init_policy(cfg);
  Tape tape;
  std::vector<Var> vars = policy_leaves(tape, params, true);
  Var logits = policy_logits_graph(tape, vars, cfg, pb.tokens, pb.seq_ids);
  Var loss = tape.softmax_xent(logits, pb.targets, pb.weights);
  tape.backward(loss);
  const Tensor& g = tape.grad(logits);
  for (size_t r = 0; r < pb.weights.size(); ++r) {
    if (pb.weights[r] != 0.0) continue;
    for (int64_t c = 0; c < cfg.vocab_size; ++c)
      CHECK(g.at(static_cast<int64_t>(r), c) == 0.0);
  }

  // relabeling masked-out rows cannot move the loss
  PackedBatch relabeled = pb;
  for (size_t r = 0; r < relabeled.weights.size(); ++r)
    if (relabeled.weights[r] == 0.0)
      relabeled.targets[r] =
          (relabeled.targets[r] + 1) % static_cast<int32_t>(cfg.vocab_size);
  Tape tape2;
  std::vector<Var> vars2 = policy_leaves(tape2, params, false);
  Var loss2 = tape2.softmax_xent(
      policy_logits_graph(tape2, vars2, cfg, relabeled.tokens,
                          relabeled.seq_ids),
      relabeled.targets, relabeled.weights);
  CHECK(tape2.val(loss2).data[0] == tape.val(loss).data[0]);
}

TEST_CASE("an untrained policy scores close to uniform") {
  const World& w = world();
  PolicyConfig cfg = small_policy(w.layout);
  ParamSet params = init_policy(cfg);
  std::vector<TrainingExample> corpus = build_sft_corpus(
      19, w.catalog, w.split.train, w.sids, w.layout, TaskMix{}, 200);
  double loss = eval_loss(params, cfg, corpus);
  double uniform = std::log(static_cast<double>(cfg.vocab_size));
  CHECK(std::fabs(loss - uniform) < 0.05 * uniform);
  CHECK(eval_loss(params, cfg, corpus) == loss);  // pure and repeatable
}

TEST_CASE("eight examples are memorized within 300 steps") {
  const World& w = world();
  std::vector<Example> eight = distinct_examples(8);
  std::vector<Example> other = distinct_examples(8, 8);
  std::vector<TrainingExample> train, heldout;
  for (const Example& ex : eight)
    train.push_back(make_generative_retrieval(ex, w.sids, w.layout));
  for (const Example& ex : other)
    heldout.push_back(make_generative_retrieval(ex, w.sids, w.layout));

  PolicyConfig cfg = small_policy(w.layout);
  ParamSet init = init_policy(cfg);
  SftConfig scfg;
  scfg.batch_size = 8;  // one step per epoch: 300 epochs = 300 steps
  scfg.max_epochs = 300;
  scfg.patience = 300;
  scfg.seed = 5;
  scfg.optim.lr = 3e-3;
  SftResult r = sft_train(cfg, init, train, train, scfg);

  REQUIRE(!r.history.empty());
  CHECK(r.history.back().train_loss < 0.05);
  CHECK(!r.aborted_non_finite);
  CHECK(r.best_valid_loss <= r.history.back().valid_loss);

  // memorized training set scores far below unseen examples
  CHECK(eval_loss(r.params, cfg, train) <=
        eval_loss(r.params, cfg, heldout));
}

TEST_CASE("worsening validation loss stops training at the best epoch") {
  const World& w = world();
  std::vector<Example> base = distinct_examples(8);
  std::vector<TrainingExample> train, valid;
  for (const Example& ex : base) {
    train.push_back(make_generative_retrieval(ex, w.sids, w.layout));
    Example flipped = ex;  // same history, contradictory target
    flipped.target = (ex.target + 7) % 60;
    valid.push_back(make_generative_retrieval(flipped, w.sids, w.layout));
  }

  PolicyConfig cfg = small_policy(w.layout);
  ParamSet init = init_policy(cfg);
  SftConfig scfg;
  scfg.batch_size = 8;
  scfg.max_epochs = 40;
  scfg.patience = 1;
  scfg.seed = 5;
  scfg.optim.lr = 1e-2;
  SftResult r = sft_train(cfg, init, train, valid, scfg);

  CHECK(r.history.size() < 40);  // stopped early
  REQUIRE(r.best_epoch >= 0);
  int64_t argmin = 0;
  for (size_t i = 1; i < r.history.size(); ++i)
    if (r.history[i].valid_loss < r.history[argmin].valid_loss)
      argmin = static_cast<int64_t>(i);
  CHECK(r.best_epoch == r.history[argmin].epoch);
  CHECK(r.best_valid_loss == r.history[argmin].valid_loss);
  CHECK(r.best_valid_loss <= r.history.back().valid_loss);

  // the returned weights are the snapshot from that epoch, not the last one
  CHECK(eval_loss(r.params, cfg, valid, scfg.batch_size) ==
        r.best_valid_loss);
}

TEST_CASE("training is deterministic and logs one CSV row per epoch") {
  const World& w = world();
  std::vector<Example> exs = distinct_examples(16);
  std::vector<TrainingExample> train, valid;
  for (size_t i = 0; i < exs.size(); ++i) {
    TrainingExample e = make_generative_retrieval(exs[i], w.sids, w.layout);
    (i < 12 ? train : valid).push_back(e);
  }

  PolicyConfig cfg = small_policy(w.layout);
  ParamSet init = init_policy(cfg);
  SftConfig scfg;
  scfg.batch_size = 4;
  scfg.max_epochs = 3;
  scfg.patience = 3;
  scfg.seed = 9;
  std::string path = "/tmp/genrec_test_sft_history.csv";
  SftResult a = sft_train(cfg, init, train, valid, scfg, path);
  SftResult b = sft_train(cfg, init, train, valid, scfg);

  REQUIRE(a.history.size() == b.history.size());
  for (size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].train_loss == b.history[i].train_loss);
    CHECK(a.history[i].valid_loss == b.history[i].valid_loss);
  }
  for (size_t i = 0; i < a.params.size(); ++i)
    CHECK(a.params.values[i].data == b.params.values[i].data);

  std::ifstream in(path);
  REQUIRE(in.good());
  std::string line;
  REQUIRE(std::getline(in, line));
  CHECK(line == "epoch,train_loss,valid_loss");
  size_t rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    size_t c1 = line.find(','), c2 = line.rfind(',');
    REQUIRE(c1 != std::string::npos);
    REQUIRE(c2 != c1);
    CHECK(std::stoll(line.substr(0, c1)) == static_cast<int64_t>(rows));
    CHECK(std::stod(line.substr(c1 + 1, c2 - c1 - 1)) ==
          a.history[rows].train_loss);
    CHECK(std::stod(line.substr(c2 + 1)) == a.history[rows].valid_loss);
    ++rows;
  }
  CHECK(rows == a.history.size());
  std::remove(path.c_str());
}

TEST_CASE("degenerate training inputs are rejected") {
  const World& w = world();
  PolicyConfig cfg = small_policy(w.layout);
  ParamSet init = init_policy(cfg);
  std::vector<TrainingExample> corpus = build_sft_corpus(
      23, w.catalog, w.split.train, w.sids, w.layout, TaskMix{}, 4);

  CHECK_THROWS_WITH_AS(sft_train(cfg, init, {}, corpus, SftConfig{}),
                       doctest::Contains("empty training"), genrec::Error);
  CHECK_THROWS_WITH_AS(sft_train(cfg, init, corpus, {}, SftConfig{}),
                       doctest::Contains("empty validation"), genrec::Error);

  TrainingExample huge;
  huge.input.assign(70, VocabLayout::kPad);
  huge.target = {VocabLayout::kEos};
  huge.mask.assign(70, 0.0);
  huge.mask.push_back(1.0);
  CHECK_THROWS_WITH_AS(pack_examples({huge}, {0}, cfg.max_len),
                       doctest::Contains("at most"), genrec::Error);
}
