// Copyright 2026 The GenRec Authors
// SPDX-License-Identifier: Apache-2.0

#include "genrec/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "genrec/check.hpp"
#include "genrec/sampler.hpp"

namespace genrec {

using nlohmann::json;

std::vector<int64_t> standard_eval_ks(int64_t k_max) {
  check(k_max >= 3, "metrics: k_max must cover the smallest cutoff 3, got ",
        k_max);
  std::vector<int64_t> ks;
  for (int64_t k : {3, 5, 10})
    if (k <= k_max) ks.push_back(k);
  return ks;
}

namespace {

// 1-indexed rank of target within the first min(k, size) entries, 0 when
// absent from that window.
int64_t rank_within(const std::vector<int32_t>& list, int32_t target,
                    int64_t k) {
  int64_t window = std::min<int64_t>(k, static_cast<int64_t>(list.size()));
  for (int64_t i = 0; i < window; ++i)
    if (list[static_cast<size_t>(i)] == target) return i + 1;
  return 0;
}

void check_lists(const std::vector<std::vector<int32_t>>& ranked,
                 const std::vector<int32_t>& targets, int64_t k) {
  check(k >= 1, "metrics: cutoff must be at least 1, got ", k);
  check(!ranked.empty(), "metrics: no ranked lists");
  check(ranked.size() == targets.size(), "metrics: ", ranked.size(),
        " ranked lists for ", targets.size(), " targets");
}

int64_t count_short(const std::vector<std::vector<int32_t>>& ranked,
                    int64_t k) {
  int64_t n = 0;
  for (const auto& list : ranked)
    if (static_cast<int64_t>(list.size()) < k) ++n;
  return n;
}

}  // namespace

double hr_at_k(const std::vector<std::vector<int32_t>>& ranked,
               const std::vector<int32_t>& targets, int64_t k,
               int64_t* n_short) {
  check_lists(ranked, targets, k);
  double hits = 0.0;
  for (size_t i = 0; i < ranked.size(); ++i)
    if (rank_within(ranked[i], targets[i], k) > 0) hits += 1.0;
  if (n_short != nullptr) *n_short = count_short(ranked, k);
  return hits / static_cast<double>(ranked.size());
}

double ndcg_at_k(const std::vector<std::vector<int32_t>>& ranked,
                 const std::vector<int32_t>& targets, int64_t k,
                 int64_t* n_short) {
  check_lists(ranked, targets, k);
  double gain = 0.0;
  for (size_t i = 0; i < ranked.size(); ++i) {
    int64_t rank = rank_within(ranked[i], targets[i], k);
    if (rank > 0) gain += 1.0 / std::log2(static_cast<double>(rank) + 1.0);
  }
  if (n_short != nullptr) *n_short = count_short(ranked, k);
  return gain / static_cast<double>(ranked.size());
}

MetricsReport evaluate_ranking(const std::vector<std::vector<int32_t>>& ranked,
                               const std::vector<int32_t>& targets,
                               int64_t k_max) {
  check_lists(ranked, targets, k_max);
  MetricsReport report;
  report.ks = standard_eval_ks(k_max);
  for (int64_t k : report.ks) {
    report.hr.push_back(hr_at_k(ranked, targets, k));
    report.ndcg.push_back(ndcg_at_k(ranked, targets, k));
  }
  report.n_examples = static_cast<int64_t>(ranked.size());
  report.short_lists = count_short(ranked, k_max);
  double ratio_sum = 0.0;
  for (const auto& list : ranked) {
    check(!list.empty(), "metrics: empty ranked list");
    std::set<int32_t> unique(list.begin(), list.end());
    ratio_sum += static_cast<double>(unique.size()) /
                 static_cast<double>(list.size());
  }
  report.mean_diversity = ratio_sum / static_cast<double>(ranked.size());
  return report;
}

MetricsReport evaluate_model(const ParamSet& params, const PolicyConfig& cfg,
                             const std::vector<Example>& examples,
                             const SidTokenMap& sids, const VocabLayout& layout,
                             const TokenTrie& trie, int64_t k_max,
                             int64_t width) {
  check(width >= k_max, "metrics: beam width ", width,
        " cannot fill the top-", k_max, " cutoff");
  check(!examples.empty(), "metrics: no examples to evaluate");
  std::vector<std::vector<int32_t>> ranked;
  std::vector<int32_t> targets;
  ranked.reserve(examples.size());
  targets.reserve(examples.size());
  for (const Example& ex : examples) {
    TrainingExample te = make_generative_retrieval(ex, sids, layout);
    GenerationGroup g = beam_search(params, cfg, te.input, width, trie);
    std::vector<int32_t> items(g.candidates.size(), -1);
    for (const Candidate& c : g.candidates)
      items[static_cast<size_t>(c.rank - 1)] = c.item_id;
    ranked.push_back(std::move(items));
    targets.push_back(ex.target);
  }
  return evaluate_ranking(ranked, targets, k_max);
}

std::vector<int32_t> popularity_baseline(const std::vector<Example>& train) {
  check(!train.empty(), "metrics: empty training split");
  std::map<int32_t, int64_t> freq;
  for (const Example& ex : train) ++freq[ex.target];
  std::vector<std::pair<int32_t, int64_t>> by_count(freq.begin(), freq.end());
  std::stable_sort(by_count.begin(), by_count.end(),
                   [](const auto& a, const auto& b) {
                     if (a.second != b.second) return a.second > b.second;
                     return a.first < b.first;
                   });
  std::vector<int32_t> out;
  out.reserve(by_count.size());
  for (const auto& [item, count] : by_count) out.push_back(item);
  return out;
}

MetricsReport evaluate_fixed_ranking(const std::vector<int32_t>& ranking,
                                     const std::vector<Example>& examples,
                                     int64_t k_max) {
  check(!ranking.empty(), "metrics: empty ranking");
  check(!examples.empty(), "metrics: no examples to evaluate");
  std::vector<std::vector<int32_t>> ranked(examples.size(), ranking);
  std::vector<int32_t> targets;
  targets.reserve(examples.size());
  for (const Example& ex : examples) targets.push_back(ex.target);
  return evaluate_ranking(ranked, targets, k_max);
}

void save_report_json(const MetricsReport& report, const std::string& path) {
  json doc{{"ks", report.ks},
           {"hr", report.hr},
           {"ndcg", report.ndcg},
           {"mean_diversity", report.mean_diversity},
           {"n_examples", report.n_examples},
           {"short_lists", report.short_lists},
           {"seed", report.seed},
           {"stage", report.stage},
           {"config_hash", report.config_hash}};
  std::ofstream out(path);
  check(out.good(), "metrics: cannot open ", path);
  out << doc.dump(2) << "\n";
  check(out.good(), "metrics: write failed for ", path);
}

MetricsReport load_report_json(const std::string& path) {
  std::ifstream in(path);
  check(in.good(), "metrics: cannot open ", path);
  json doc = json::parse(in);
  MetricsReport report;
  report.ks = doc.at("ks").get<std::vector<int64_t>>();
  report.hr = doc.at("hr").get<std::vector<double>>();
  report.ndcg = doc.at("ndcg").get<std::vector<double>>();
  report.mean_diversity = doc.at("mean_diversity").get<double>();
  report.n_examples = doc.at("n_examples").get<int64_t>();
  report.short_lists = doc.at("short_lists").get<int64_t>();
  report.seed = doc.at("seed").get<uint64_t>();
  report.stage = doc.at("stage").get<std::string>();
  report.config_hash = doc.at("config_hash").get<std::string>();
  return report;
}

void append_run_csv(const MetricsReport& report, const std::string& run_id,
                    const std::string& path) {
  check(report.ks == std::vector<int64_t>({3, 5, 10}),
        "metrics: the run ledger expects cutoffs 3, 5, 10");
  for (char c : run_id + report.stage)
    check(c != ',' && c != '\n',
          "metrics: run id and stage must not contain commas or newlines");
  bool fresh = !std::ifstream(path).good();
  std::ofstream out(path, std::ios::app);
  check(out.good(), "metrics: cannot open ", path);
  out.precision(17);
  if (fresh)
    out << "run_id,stage,hr_3,hr_5,hr_10,ndcg_3,ndcg_5,ndcg_10,diversity\n";
  out << run_id << "," << report.stage;
  for (double v : report.hr) out << "," << v;
  for (double v : report.ndcg) out << "," << v;
  out << "," << report.mean_diversity << "\n";
  check(out.good(), "metrics: write failed for ", path);
}

}  // namespace genrec
