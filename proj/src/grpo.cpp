// Copyright 2026 The GenRec Authors
// SPDX-License-Identifier: Apache-2.0

#include "genrec/grpo.hpp"

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "genrec/check.hpp"
#include "genrec/rng.hpp"
#include "genrec/vocab.hpp"

namespace genrec {

using nlohmann::json;

const char* sampler_name(SamplerKind kind) {
  switch (kind) {
    case SamplerKind::kBeam:
      return "beam";
    case SamplerKind::kTopK:
      return "top-k";
    case SamplerKind::kDynamic:
      return "dynamic";
  }
  check(false, "sampler_name: unknown kind ", static_cast<int32_t>(kind));
  return "";
}

SamplerKind sampler_from_name(const std::string& name) {
  if (name == "beam") return SamplerKind::kBeam;
  if (name == "top-k" || name == "topk") return SamplerKind::kTopK;
  if (name == "dynamic") return SamplerKind::kDynamic;
  check(false, "sampler_from_name: unknown sampler '", name,
        "'; expected beam, top-k, or dynamic");
  return SamplerKind::kBeam;
}

void validate_rl_config(const RLConfig& cfg) {
  check(cfg.group_size >= 2, "rl config: group size must be at least 2, got ",
        cfg.group_size);
  check(cfg.clip_eps > 0.0 && cfg.clip_eps < 1.0,
        "rl config: clip threshold must lie in (0, 1), got ", cfg.clip_eps);
  check(cfg.kl_beta >= 0.0, "rl config: KL weight must be nonnegative, got ",
        cfg.kl_beta);
  check(cfg.std_floor > 0.0, "rl config: std floor must be positive, got ",
        cfg.std_floor);
  check(cfg.epochs >= 1, "rl config: epochs must be at least 1, got ",
        cfg.epochs);
  check(cfg.prompts_per_epoch >= 1,
        "rl config: prompts per epoch must be at least 1, got ",
        cfg.prompts_per_epoch);
  check(cfg.temperature > 0.0,
        "rl config: temperature must be positive, got ", cfg.temperature);
  check(cfg.recipe.rule || cfg.recipe.rank || cfg.recipe.collaborative ||
            cfg.recipe.semantic,
        "rl config: reward recipe enables no component");
  validate_mix(cfg.mix);
}

PackedRollouts pack_rollouts(const std::vector<RolloutGroup>& groups,
                             int64_t max_len) {
  check(!groups.empty(), "pack_rollouts: no groups");
  PackedRollouts pack;
  int32_t seq = 0;
  for (const RolloutGroup& g : groups) {
    check(!g.prompt.empty(), "pack_rollouts: empty prompt");
    check(!g.candidates.empty(), "pack_rollouts: group without candidates");
    for (const RolloutCandidate& c : g.candidates) {
      check(!c.tokens.empty(), "pack_rollouts: empty completion");
      int64_t p = static_cast<int64_t>(g.prompt.size());
      int64_t l = static_cast<int64_t>(c.tokens.size());
      check(p + l <= max_len, "pack_rollouts: segment length ", p + l,
            " exceeds the model's maximum ", max_len);
      int32_t start = static_cast<int32_t>(pack.tokens.size());
      pack.tokens.insert(pack.tokens.end(), g.prompt.begin(), g.prompt.end());
      pack.tokens.insert(pack.tokens.end(), c.tokens.begin(), c.tokens.end());
      for (int64_t t = 0; t < p + l; ++t) pack.seq_ids.push_back(seq);
      // Row t predicts token t+1 of its own segment; the segment's last row
      // predicts nothing and gets a padding target that is never selected.
      for (int64_t t = 1; t < p + l; ++t)
        pack.targets.push_back(pack.tokens[static_cast<size_t>(start + t)]);
      pack.targets.push_back(VocabLayout::kPad);
      for (int64_t t = 0; t < l; ++t)
        pack.completion_rows.push_back(
            static_cast<int32_t>(start + p - 1 + t));
      pack.lengths.push_back(l);
      ++seq;
    }
  }
  return pack;
}

namespace {

// The one training graph: packed forward, next-token log-probs, completion
// rows only. Both the value pass and the update pass go through here, so
// their arithmetic is identical.
Var completion_logp_graph(Tape& tape, const std::vector<Var>& vars,
                          const PolicyConfig& cfg,
                          const PackedRollouts& pack) {
  Var logits = policy_logits_graph(tape, vars, cfg, pack.tokens, pack.seq_ids);
  Var lp = tape.gather_log_softmax(logits, pack.targets);
  return tape.rows_gather(lp, pack.completion_rows);
}

GrpoTokenBatch build_token_batch(const std::vector<RolloutGroup>& groups,
                                 const PackedRollouts& pack) {
  GrpoTokenBatch batch;
  size_t n_tokens = pack.completion_rows.size();
  batch.old_logp.reserve(n_tokens);
  batch.ref_logp.reserve(n_tokens);
  batch.advantage.reserve(n_tokens);
  batch.weight.reserve(n_tokens);
  double n_groups = static_cast<double>(groups.size());
  for (const RolloutGroup& g : groups) {
    check(g.advantages.size() == g.candidates.size(),
          "grpo: group holds ", g.advantages.size(), " advantages for ",
          g.candidates.size(), " candidates");
    double n_cand = static_cast<double>(g.candidates.size());
    for (size_t i = 0; i < g.candidates.size(); ++i) {
      const RolloutCandidate& c = g.candidates[i];
      check(c.old_logp.size() == c.tokens.size() &&
                c.ref_logp.size() == c.tokens.size(),
            "grpo: candidate log-probs do not cover its ", c.tokens.size(),
            " tokens");
      double w = 1.0 / (n_groups * n_cand *
                        static_cast<double>(c.tokens.size()));
      for (size_t t = 0; t < c.tokens.size(); ++t) {
        batch.old_logp.push_back(c.old_logp[t]);
        batch.ref_logp.push_back(c.ref_logp[t]);
        batch.advantage.push_back(g.advantages[i]);
        batch.weight.push_back(w);
      }
    }
  }
  check(batch.old_logp.size() == n_tokens,
        "grpo: batch covers ", batch.old_logp.size(), " tokens, pack has ",
        n_tokens);
  return batch;
}

}  // namespace

std::vector<double> completion_log_probs(const ParamSet& params,
                                         const PolicyConfig& cfg,
                                         const PackedRollouts& pack) {
  Tape tape;
  std::vector<Var> vars = policy_leaves(tape, params, false);
  Var lp = completion_logp_graph(tape, vars, cfg, pack);
  return tape.val(lp).data;
}

RolloutGroup rollout_group(const ParamSet& params, const ParamSet& ref_params,
                           const PolicyConfig& cfg, const RLConfig& rlcfg,
                           const std::vector<int32_t>& prompt,
                           int32_t target_item, TaskFamily task,
                           const TokenTrie& trie, uint64_t sample_seed,
                           const RewardContext& ctx) {
  GenerationGroup gen;
  switch (rlcfg.sampler) {
    case SamplerKind::kBeam:
      gen = beam_search(params, cfg, prompt, rlcfg.group_size, trie);
      break;
    case SamplerKind::kTopK:
      gen = sample_top_k(params, cfg, prompt, rlcfg.group_size, trie,
                         sample_seed, rlcfg.temperature);
      break;
    case SamplerKind::kDynamic:
      gen = dynamic_sample(params, cfg, prompt, rlcfg.group_size, target_item,
                           trie, sample_seed, rlcfg.temperature);
      break;
  }

  RolloutGroup g;
  g.prompt = prompt;
  g.target_item = target_item;
  g.task = static_cast<int32_t>(task);
  g.candidates.reserve(gen.candidates.size());
  for (const Candidate& c : gen.candidates) {
    RolloutCandidate rc;
    rc.tokens = c.tokens;
    rc.item_id = c.item_id;
    rc.rank = c.rank;
    rc.score = c.score;
    g.candidates.push_back(std::move(rc));
  }

  // Alignment rollouts have no ranked negative set, so they keep the rule
  // reward only; the dense components are likewise retrieval-specific.
  RewardRecipe recipe = rlcfg.recipe;
  if (task != TaskFamily::kGenerativeRetrieval)
    recipe = RewardRecipe{true, false, false, false};
  g.rewards = combined_reward(gen, target_item, recipe, ctx);

  if (g.candidates.size() >= 2) {
    g.advantages = normalize_advantages(g.rewards.total, rlcfg.std_floor);
  } else {
    g.advantages.assign(g.candidates.size(), 0.0);
  }
  for (double a : g.advantages)
    if (a != 0.0) g.informative = true;
  g.diversity = diversity(gen);

  PackedRollouts pack = pack_rollouts({g}, cfg.max_len);
  std::vector<double> old_lp = completion_log_probs(params, cfg, pack);
  std::vector<double> ref_lp = &ref_params == &params
                                   ? old_lp
                                   : completion_log_probs(ref_params, cfg, pack);
  size_t pos = 0;
  for (size_t i = 0; i < g.candidates.size(); ++i) {
    size_t l = static_cast<size_t>(pack.lengths[i]);
    g.candidates[i].old_logp.assign(old_lp.begin() + pos,
                                    old_lp.begin() + pos + l);
    g.candidates[i].ref_logp.assign(ref_lp.begin() + pos,
                                    ref_lp.begin() + pos + l);
    pos += l;
  }
  return g;
}

GrpoLossResult grpo_loss(const ParamSet& params, const PolicyConfig& cfg,
                         const std::vector<RolloutGroup>& groups,
                         double clip_eps, double kl_beta) {
  PackedRollouts pack = pack_rollouts(groups, cfg.max_len);
  GrpoTokenBatch batch = build_token_batch(groups, pack);

  GrpoLossResult res;
  Tape tape;
  std::vector<Var> vars = policy_leaves(tape, params, true);
  Var lp = completion_logp_graph(tape, vars, cfg, pack);
  Var loss = tape.grpo_surrogate(lp, batch, clip_eps, kl_beta, &res.stats);
  tape.backward(loss);
  res.loss = tape.val(loss).data[0];
  res.grads.reserve(vars.size());
  for (Var v : vars) res.grads.push_back(tape.grad(v));
  return res;
}

namespace {

json group_trace(int64_t step, const RolloutGroup& g) {
  json rewards{{"total", g.rewards.total}};
  if (!g.rewards.rule.empty()) rewards["rule"] = g.rewards.rule;
  if (!g.rewards.rank.empty()) rewards["rank"] = g.rewards.rank;
  if (!g.rewards.collaborative.empty())
    rewards["collaborative"] = g.rewards.collaborative;
  if (!g.rewards.semantic.empty()) rewards["semantic"] = g.rewards.semantic;
  json candidates = json::array();
  for (const RolloutCandidate& c : g.candidates)
    candidates.push_back(json{{"tokens", c.tokens},
                              {"item_id", c.item_id},
                              {"rank", c.rank},
                              {"score", c.score}});
  return json{{"step", step},
              {"task", g.task},
              {"target_item", g.target_item},
              {"prompt", g.prompt},
              {"diversity", g.diversity.ratio},
              {"rewards", rewards},
              {"advantages", g.advantages},
              {"candidates", candidates}};
}

}  // namespace

RlResult rl_train(const ParamSet& sft_params, const PolicyConfig& cfg,
                  const Catalog& catalog, const DatasetSplit& split,
                  const SidTokenMap& sids, const VocabLayout& layout,
                  const CatalogTries& tries, const RLConfig& rlcfg,
                  const CfBaseline* cf, const std::string& metrics_csv_path,
                  const std::string& trace_jsonl_path) {
  validate_rl_config(rlcfg);
  check(!catalog.items.empty(), "rl_train: empty catalog");
  std::vector<double> mix_weights(rlcfg.mix.weights.begin(),
                                  rlcfg.mix.weights.end());
  bool needs_split = mix_weights[0] > 0.0 || mix_weights[1] > 0.0 ||
                     mix_weights[2] > 0.0;
  check(!needs_split || !split.train.empty(),
        "rl_train: the task mix draws from an empty training split");
  check(!rlcfg.recipe.collaborative || cf != nullptr,
        "rl_train: collaborative reward enabled without a trained scorer");

  RlResult res;
  res.params = sft_params;
  const ParamSet& ref_params = sft_params;
  AdamW opt(rlcfg.optim, res.params);
  Rng rng(rlcfg.seed);

  std::ofstream csv;
  if (!metrics_csv_path.empty()) {
    csv.open(metrics_csv_path);
    check(csv.good(), "rl_train: cannot open ", metrics_csv_path);
    csv.precision(17);
    csv << "step,mean_reward,mean_diversity,kl,clip_fraction,loss\n";
  }
  std::ofstream trace;
  if (!trace_jsonl_path.empty()) {
    trace.open(trace_jsonl_path);
    check(trace.good(), "rl_train: cannot open ", trace_jsonl_path);
  }

  int64_t step = 0;
  for (int64_t epoch = 0; epoch < rlcfg.epochs; ++epoch) {
    int64_t informative_this_epoch = 0;
    for (int64_t p = 0; p < rlcfg.prompts_per_epoch; ++p) {
      auto family = static_cast<TaskFamily>(rng.weighted(mix_weights));
      TrainingExample te;
      int32_t target = -1;
      const std::vector<int32_t>* history = nullptr;
      switch (family) {
        case TaskFamily::kGenerativeRetrieval: {
          const Example& ex = split.train[rng.below(split.train.size())];
          te = make_generative_retrieval(ex, sids, layout);
          target = ex.target;
          history = &ex.history;
          break;
        }
        case TaskFamily::kTextHistoryToSid: {
          const Example& ex = split.train[rng.below(split.train.size())];
          te = make_text_history_to_sid(ex, catalog, sids, layout);
          target = ex.target;
          history = &ex.history;
          break;
        }
        case TaskFamily::kSidHistoryToTitle: {
          const Example& ex = split.train[rng.below(split.train.size())];
          te = make_sid_history_to_title(ex, catalog, sids, layout);
          target = ex.target;
          history = &ex.history;
          break;
        }
        case TaskFamily::kSidToTitle: {
          const Item& item = catalog.items[rng.below(catalog.items.size())];
          te = make_sid_to_title(item, sids, layout);
          target = item.item_id;
          break;
        }
        case TaskFamily::kTitleToSid: {
          const Item& item = catalog.items[rng.below(catalog.items.size())];
          te = make_title_to_sid(item, sids, layout);
          target = item.item_id;
          break;
        }
      }
      bool title_output = family == TaskFamily::kSidHistoryToTitle ||
                          family == TaskFamily::kSidToTitle;
      const TokenTrie& trie = title_output ? tries.title : tries.sid;
      uint64_t sample_seed = rng.next_u64();
      RewardContext ctx{cf, history, &catalog};

      RolloutGroup g =
          rollout_group(res.params, ref_params, cfg, rlcfg, te.input, target,
                        family, trie, sample_seed, ctx);
      GrpoLossResult l =
          grpo_loss(res.params, cfg, {g}, rlcfg.clip_eps, rlcfg.kl_beta);
      opt.step(res.params, l.grads);

      double reward_sum = 0.0;
      for (double r : g.rewards.total) reward_sum += r;
      RlStepMetrics m;
      m.step = step;
      m.mean_reward =
          reward_sum / static_cast<double>(g.rewards.total.size());
      m.diversity = g.diversity.ratio;
      m.mean_kl = l.stats.mean_kl;
      m.clip_fraction = l.stats.clip_fraction;
      m.loss = l.loss;
      res.history.push_back(m);
      if (csv.is_open()) {
        csv << m.step << "," << m.mean_reward << "," << m.diversity << ","
            << m.mean_kl << "," << m.clip_fraction << "," << m.loss << "\n";
        csv.flush();
        check(csv.good(), "rl_train: write failed for ", metrics_csv_path);
      }
      if (trace.is_open()) {
        trace << group_trace(step, g).dump() << "\n";
        check(trace.good(), "rl_train: write failed for ", trace_jsonl_path);
      }

      ++res.groups_total;
      if (g.informative) {
        ++res.groups_informative;
        ++informative_this_epoch;
      }
      ++step;
    }
    if (informative_this_epoch == 0)
      res.warnings.push_back(
          "epoch " + std::to_string(epoch) +
          ": every group had flat rewards; no gradient reached the policy "
          "beyond the KL term");
  }
  return res;
}

}  // namespace genrec
