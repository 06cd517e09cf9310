// Copyright 2026 The GenRec Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "genrec/dataset.hpp"

using namespace genrec;

namespace {

double l2_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

std::string temp_path(const char* name) {
  return std::string("/tmp/genrec_test_") + name;
}

// Rank of the target item under a scoring function, 1-based, counting how
// many items score strictly higher (ties resolved by item id).
template <typename ScoreFn>
int rank_of(ScoreFn&& score, int32_t target, int64_t n_items) {
  double st = score(target);
  int rank = 1;
  for (int32_t i = 0; i < n_items; ++i) {
    if (i == target) continue;
    double si = score(i);
    if (si > st || (si == st && i < target)) ++rank;
  }
  return rank;
}

}  // namespace

TEST_CASE("catalog generation is a pure function of the seed") {
  Catalog a = generate_catalog(7, 100, 16, 10);
  Catalog b = generate_catalog(7, 100, 16, 10);
  REQUIRE(a.items.size() == b.items.size());
  for (size_t i = 0; i < a.items.size(); ++i) {
    CHECK(a.items[i].embedding == b.items[i].embedding);
    CHECK(a.items[i].title_tokens == b.items[i].title_tokens);
    CHECK(a.items[i].cluster_label == b.items[i].cluster_label);
  }
  Catalog c = generate_catalog(8, 100, 16, 10);
  CHECK(a.items[0].embedding != c.items[0].embedding);
}

TEST_CASE("zero noise collapses each cluster to a single embedding") {
  Catalog cat = generate_catalog(3, 60, 8, 6, 0.0);
  for (const auto& item : cat.items) {
    const auto& first = cat.items[static_cast<size_t>(item.cluster_label)];
    CHECK(item.embedding == first.embedding);
  }
}

TEST_CASE("clusters are tighter inside than across") {
  Catalog cat = generate_catalog(11, 200, 16, 10);
  double within = 0.0, across = 0.0;
  int64_t nw = 0, na = 0;
  for (size_t i = 0; i < cat.items.size(); ++i)
    for (size_t j = i + 1; j < cat.items.size(); ++j) {
      double d = l2_dist(cat.items[i].embedding, cat.items[j].embedding);
      if (cat.items[i].cluster_label == cat.items[j].cluster_label) {
        within += d;
        ++nw;
      } else {
        across += d;
        ++na;
      }
    }
  CHECK(within / double(nw) < across / double(na));
}

TEST_CASE("titles are unique, non-empty, and lead with the cluster word") {
  Catalog cat = generate_catalog(5, 500, 8, 10);
  std::set<std::vector<std::string>> titles;
  for (const auto& item : cat.items) {
    REQUIRE(!item.title_tokens.empty());
    CHECK(item.title_tokens[0] ==
          title_words()[static_cast<size_t>(item.cluster_label)]);
    CHECK(titles.insert(item.title_tokens).second);
  }
}

TEST_CASE("interactions reference the catalog and respect the min length") {
  Catalog cat = generate_catalog(2, 80, 8, 8);
  InteractionLog log = generate_interactions(2, cat, 50, 0.5);
  CHECK(log.users.size() == 50);
  for (const auto& u : log.users) {
    CHECK(u.items.size() >= 5);
    for (int32_t it : u.items) {
      CHECK(it >= 0);
      CHECK(it < 80);
    }
  }
}

TEST_CASE("a user's log does not depend on how many users are generated") {
  Catalog cat = generate_catalog(4, 60, 8, 6);
  InteractionLog small = generate_interactions(9, cat, 10, 0.7);
  InteractionLog big = generate_interactions(9, cat, 50, 0.7);
  for (size_t u = 0; u < 10; ++u) CHECK(small.users[u].items == big.users[u].items);
}

TEST_CASE("zero sharpness gives uniform next clusters (chi-square)") {
  const int32_t n_clusters = 10;
  Catalog cat = generate_catalog(13, 100, 8, n_clusters);
  InteractionLog log = generate_interactions(13, cat, 400, 0.0);
  std::vector<int64_t> counts(n_clusters, 0);
  int64_t total = 0;
  for (const auto& u : log.users)
    for (size_t t = 1; t < u.items.size(); ++t) {
      ++counts[static_cast<size_t>(
          cat.items[static_cast<size_t>(u.items[t])].cluster_label)];
      ++total;
    }
  double expected = double(total) / n_clusters;
  double chi2 = 0.0;
  for (int64_t c : counts) {
    double d = double(c) - expected;
    chi2 += d * d / expected;
  }
  // chi-square critical value, 9 degrees of freedom, alpha = 0.01
  CHECK(chi2 < 21.666);
}

TEST_CASE("full sharpness follows the planted permutation exactly") {
  const int32_t n_clusters = 7;
  Catalog cat = generate_catalog(17, 70, 8, n_clusters);
  InteractionLog log = generate_interactions(17, cat, 60, 1.0);
  std::vector<int32_t> perm = cluster_permutation(17, n_clusters);
  for (const auto& u : log.users)
    for (size_t t = 1; t < u.items.size(); ++t) {
      int32_t prev = cat.items[static_cast<size_t>(u.items[t - 1])].cluster_label;
      int32_t next = cat.items[static_cast<size_t>(u.items[t])].cluster_label;
      CHECK(next == perm[static_cast<size_t>(prev)]);
    }
}

TEST_CASE("chronological split applies the floor and remainder rule") {
  auto sizes = [](int n_examples) {
    InteractionLog log;
    UserLog u;
    u.user_id = 0;
    for (int i = 0; i <= n_examples; ++i) u.items.push_back(i % 5);
    log.users.push_back(u);
    DatasetSplit s = chronological_split(log);
    return std::array<size_t, 3>{s.train.size(), s.valid.size(), s.test.size()};
  };
  CHECK(sizes(100) == std::array<size_t, 3>{80, 10, 10});
  CHECK(sizes(10) == std::array<size_t, 3>{8, 1, 1});
  CHECK(sizes(7) == std::array<size_t, 3>{5, 1, 1});
  CHECK(sizes(2) == std::array<size_t, 3>{2, 0, 0});  // < 3 -> all train
}

TEST_CASE("split partitions examples and keeps test strictly newest") {
  Catalog cat = generate_catalog(19, 60, 8, 6);
  InteractionLog log = generate_interactions(19, cat, 40, 0.6);
  DatasetSplit s = chronological_split(log);
  size_t total_examples = 0;
  for (const auto& u : log.users) total_examples += u.items.size() - 1;
  CHECK(s.train.size() + s.valid.size() + s.test.size() == total_examples);

  // Per user, every train history is shorter than every test history, which
  // is the chronological ordering for prefix examples.
  for (const auto& te : s.test)
    for (const auto& tr : s.train)
      if (tr.user_id == te.user_id) CHECK(tr.history.size() < te.history.size());
  // The newest example of each user with >= 3 examples lands in test.
  for (const auto& u : log.users) {
    if (u.items.size() - 1 < 3) continue;
    bool found = false;
    for (const auto& te : s.test)
      if (te.user_id == u.user_id && te.history.size() == u.items.size() - 1)
        found = true;
    CHECK(found);
  }
}

TEST_CASE("history truncation keeps the newest items and is idempotent") {
  InteractionLog log;
  UserLog u;
  u.user_id = 0;
  for (int i = 0; i < 16; ++i) u.items.push_back(i);
  log.users.push_back(u);
  DatasetSplit s = chronological_split(log);
  truncate_histories(s);

  // the last test example had a length-15 prefix: the newest 10 remain
  const Example& last = s.test.back();
  CHECK(last.target == 15);
  REQUIRE(last.history.size() == 10);
  for (int i = 0; i < 10; ++i) CHECK(last.history[static_cast<size_t>(i)] == 5 + i);

  // short histories are untouched
  CHECK(s.train.front().history.size() == 1);

  DatasetSplit copy = s;
  truncate_histories(copy);
  CHECK(copy.test.back().history == s.test.back().history);
  CHECK_THROWS_AS(truncate_histories(copy, 0), genrec::Error);
}

TEST_CASE("cf training loss is non-increasing within tolerance") {
  Catalog cat = generate_catalog(23, 50, 8, 5);
  InteractionLog log = generate_interactions(23, cat, 120, 0.9);
  DatasetSplit split = chronological_split(log);
  std::vector<double> curve;
  train_cf_baseline(23, split, 120, 50, 8, 40, 0.01, &curve);
  REQUIRE(curve.size() == 40);
  for (size_t i = 1; i < curve.size(); ++i) CHECK(curve[i] <= curve[i - 1] * 1.05);
}

TEST_CASE("untrained cf ranks at chance level") {
  const int64_t n_items = 100;
  Catalog cat = generate_catalog(29, n_items, 8, 10);
  InteractionLog log = generate_interactions(29, cat, 800, 0.0);
  DatasetSplit split = chronological_split(log);
  CfBaseline cf = train_cf_baseline(29, split, 800, n_items, 16, 0, 0.05);
  int64_t hits = 0;
  for (const auto& e : split.test) {
    auto score = [&](int32_t i) { return cf.score_history(e.history, i); };
    if (rank_of(score, e.target, n_items) <= 10) ++hits;
  }
  double hr = double(hits) / double(split.test.size());
  // targets are uniform at sharpness 0, so HR@10 ~ Binomial(n, 0.1)
  double sigma = std::sqrt(0.1 * 0.9 / double(split.test.size()));
  CHECK(std::fabs(hr - 0.1) < 3.0 * sigma);
}

TEST_CASE("trained cf beats untrained cf on held-out ranking") {
  const int64_t n_items = 100;
  Catalog cat = generate_catalog(31, n_items, 8, 10);
  InteractionLog log = generate_interactions(31, cat, 400, 0.95);
  DatasetSplit split = chronological_split(log);
  auto hr10 = [&](const CfBaseline& cf) {
    int64_t hits = 0;
    for (const auto& e : split.test) {
      auto score = [&](int32_t i) { return cf.score_history(e.history, i); };
      if (rank_of(score, e.target, n_items) <= 10) ++hits;
    }
    return double(hits) / double(split.test.size());
  };
  CfBaseline untrained = train_cf_baseline(31, split, 400, n_items, 16, 0, 0.05);
  CfBaseline trained = train_cf_baseline(31, split, 400, n_items, 16, 80, 0.01);
  CHECK(hr10(trained) > hr10(untrained));
}

TEST_CASE("catalog and interactions survive the jsonl round trip exactly") {
  Catalog cat = generate_catalog(37, 40, 8, 5);
  std::string cpath = temp_path("catalog.jsonl");
  save_catalog_jsonl(cat, cpath);
  Catalog loaded = load_catalog_jsonl(cpath);
  REQUIRE(loaded.items.size() == cat.items.size());
  CHECK(loaded.dim == cat.dim);
  CHECK(loaded.n_clusters == cat.n_clusters);
  for (size_t i = 0; i < cat.items.size(); ++i) {
    CHECK(loaded.items[i].item_id == cat.items[i].item_id);
    CHECK(loaded.items[i].embedding == cat.items[i].embedding);  // bit-exact
    CHECK(loaded.items[i].title_tokens == cat.items[i].title_tokens);
    CHECK(loaded.items[i].cluster_label == cat.items[i].cluster_label);
  }

  InteractionLog log = generate_interactions(37, cat, 12, 0.4);
  std::string ipath = temp_path("interactions.jsonl");
  save_interactions_jsonl(log, ipath);
  InteractionLog lloaded = load_interactions_jsonl(ipath);
  REQUIRE(lloaded.users.size() == log.users.size());
  for (size_t i = 0; i < log.users.size(); ++i)
    CHECK(lloaded.users[i].items == log.users[i].items);

  std::remove(cpath.c_str());
  std::remove(ipath.c_str());
}

TEST_CASE("malformed jsonl is rejected with the line number") {
  std::string path = temp_path("bad.jsonl");
  {
    std::ofstream out(path);
    out << R"({"item_id":0,"embedding":[1,2,3,4],"title_tokens":["a"],"cluster_label":0})"
        << "\n";
    out << "{not json\n";
  }
  CHECK_THROWS_WITH_AS(load_catalog_jsonl(path), doctest::Contains(":2"),
                       genrec::Error);
  CHECK_THROWS_AS(load_catalog_jsonl("/nonexistent/nope.jsonl"), genrec::Error);
  std::remove(path.c_str());
}

TEST_CASE("cf factors survive the binary round trip") {
  Catalog cat = generate_catalog(41, 30, 8, 5);
  InteractionLog log = generate_interactions(41, cat, 50, 0.8);
  DatasetSplit split = chronological_split(log);
  CfBaseline cf = train_cf_baseline(41, split, 50, 30, 8, 5, 0.05);
  std::string path = temp_path("cf.bin");
  save_cf_baseline(cf, path);
  CfBaseline loaded = load_cf_baseline(path);
  CHECK(loaded.user_factors.data == cf.user_factors.data);
  CHECK(loaded.item_factors.data == cf.item_factors.data);

  // truncated file is rejected
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << "grcf0001";
  }
  CHECK_THROWS_AS(load_cf_baseline(path), genrec::Error);
  std::remove(path.c_str());
}
