// Copyright 2026 The GenRec Authors
// SPDX-License-Identifier: Apache-2.0

#include "genrec/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <unordered_map>

#include <json.hpp>

#include "genrec/check.hpp"
#include "genrec/optimizer.hpp"
#include "genrec/rng.hpp"

namespace genrec {

namespace {

using nlohmann::json;

// Fork streams for the independent generator stages.
constexpr uint64_t kPermStream = 1;
constexpr uint64_t kUserStreamBase = 1000;

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

const std::array<std::string, 64>& title_words() {
  static const std::array<std::string, 64> words = {
      "amber",  "basil",  "cedar",  "delta",  "ember",  "fjord",  "garnet",
      "hazel",  "indigo", "jasper", "kelp",   "lotus",  "maple",  "nectar",
      "onyx",   "pearl",  "quartz", "raven",  "sable",  "topaz",  "umber",
      "violet", "willow", "xenon",  "yarrow", "zephyr", "acorn",  "birch",
      "coral",  "dune",   "elm",    "fern",   "grove",  "heath",  "iris",
      "juniper","krill",  "lark",   "moss",   "newt",   "orchid", "pine",
      "quill",  "reed",   "sage",   "thyme",  "urchin", "vine",   "wren",
      "yew",    "zinc",   "aspen",  "brook",  "cliff",  "drift",  "eddy",
      "flint",  "glade",  "knoll",  "ledge",  "marsh",  "notch",  "otter",
      "plume"};
  return words;
}

Catalog generate_catalog(uint64_t seed, int64_t n_items, int64_t dim,
                         int32_t n_clusters, double noise_scale) {
  check(n_items > 0, "generate_catalog: n_items must be positive");
  check(dim >= 4, "generate_catalog: dim must be at least 4, got ", dim);
  check(n_clusters > 0 && n_clusters <= n_items,
        "generate_catalog: need 0 < n_clusters <= n_items, got ", n_clusters,
        " clusters for ", n_items, " items");
  check(noise_scale >= 0.0, "generate_catalog: negative noise_scale");

  Rng rng(seed);
  const auto& words = title_words();

  std::vector<std::vector<double>> centers(static_cast<size_t>(n_clusters));
  for (auto& c : centers) {
    c.resize(static_cast<size_t>(dim));
    for (double& v : c) v = rng.normal(0.0, 1.0);
  }

  Catalog cat;
  cat.dim = dim;
  cat.n_clusters = n_clusters;
  cat.items.reserve(static_cast<size_t>(n_items));
  std::set<std::vector<std::string>> used_titles;
  for (int64_t i = 0; i < n_items; ++i) {
    Item item;
    item.item_id = static_cast<int32_t>(i);
    item.cluster_label = static_cast<int32_t>(i % n_clusters);
    const auto& center = centers[static_cast<size_t>(item.cluster_label)];
    item.embedding.resize(static_cast<size_t>(dim));
    for (int64_t c = 0; c < dim; ++c)
      item.embedding[static_cast<size_t>(c)] =
          center[static_cast<size_t>(c)] + rng.normal(0.0, noise_scale);

    item.title_tokens = {words[static_cast<size_t>(item.cluster_label) % words.size()],
                         words[rng.below(words.size())]};
    while (used_titles.count(item.title_tokens) > 0)
      item.title_tokens.push_back(words[rng.below(words.size())]);
    used_titles.insert(item.title_tokens);
    cat.items.push_back(std::move(item));
  }
  return cat;
}

std::vector<int32_t> cluster_permutation(uint64_t seed, int32_t n_clusters) {
  std::vector<int32_t> perm(static_cast<size_t>(n_clusters));
  for (int32_t c = 0; c < n_clusters; ++c) perm[static_cast<size_t>(c)] = c;
  Rng rng = Rng(seed).fork(kPermStream);
  rng.shuffle(perm);
  return perm;
}

InteractionLog generate_interactions(uint64_t seed, const Catalog& catalog,
                                     int64_t n_users, double markov_sharpness,
                                     int64_t len_min, int64_t len_max) {
  check(markov_sharpness >= 0.0 && markov_sharpness <= 1.0,
        "generate_interactions: markov_sharpness must be in [0,1], got ",
        markov_sharpness);
  check(len_min >= 5, "generate_interactions: users need at least 5 "
        "interactions, got len_min ", len_min);
  check(len_max >= len_min, "generate_interactions: len_max ", len_max,
        " < len_min ", len_min);
  check(!catalog.items.empty(), "generate_interactions: empty catalog");

  int32_t n_clusters = catalog.n_clusters;
  std::vector<std::vector<int32_t>> by_cluster(static_cast<size_t>(n_clusters));
  for (const auto& item : catalog.items) {
    check(item.cluster_label >= 0 && item.cluster_label < n_clusters,
          "generate_interactions: item ", item.item_id,
          " has out-of-range cluster ", item.cluster_label);
    by_cluster[static_cast<size_t>(item.cluster_label)].push_back(item.item_id);
  }
  for (int32_t c = 0; c < n_clusters; ++c)
    check(!by_cluster[static_cast<size_t>(c)].empty(),
          "generate_interactions: cluster ", c, " has no items");

  std::vector<int32_t> perm = cluster_permutation(seed, n_clusters);
  Rng root(seed);

  InteractionLog log;
  log.users.reserve(static_cast<size_t>(n_users));
  for (int64_t u = 0; u < n_users; ++u) {
    Rng rng = root.fork(kUserStreamBase + static_cast<uint64_t>(u));
    UserLog ul;
    ul.user_id = static_cast<int32_t>(u);
    int64_t len = len_min + static_cast<int64_t>(
                                rng.below(static_cast<uint64_t>(len_max - len_min + 1)));
    int32_t item = catalog.items[rng.below(catalog.items.size())].item_id;
    ul.items.push_back(item);
    for (int64_t t = 1; t < len; ++t) {
      int32_t prev_cluster =
          catalog.items[static_cast<size_t>(item)].cluster_label;
      int32_t next_cluster;
      if (rng.uniform() < markov_sharpness) {
        next_cluster = perm[static_cast<size_t>(prev_cluster)];
      } else {
        next_cluster = static_cast<int32_t>(rng.below(static_cast<uint64_t>(n_clusters)));
      }
      const auto& pool = by_cluster[static_cast<size_t>(next_cluster)];
      item = pool[rng.below(pool.size())];
      ul.items.push_back(item);
    }
    log.users.push_back(std::move(ul));
  }
  return log;
}

DatasetSplit chronological_split(const InteractionLog& log) {
  check(!log.users.empty(), "chronological_split: empty log");
  DatasetSplit split;
  for (const auto& user : log.users) {
    int64_t n = static_cast<int64_t>(user.items.size()) - 1;
    if (n <= 0) continue;
    std::vector<Example> examples;
    examples.reserve(static_cast<size_t>(n));
    for (int64_t t = 1; t <= n; ++t) {
      Example e;
      e.user_id = user.user_id;
      e.history.assign(user.items.begin(), user.items.begin() + t);
      e.target = user.items[static_cast<size_t>(t)];
      examples.push_back(std::move(e));
    }
    if (n < 3) {
      for (auto& e : examples) split.train.push_back(std::move(e));
      continue;
    }
    int64_t n_train = static_cast<int64_t>(std::floor(0.8 * static_cast<double>(n)));
    int64_t rem = n - n_train;
    int64_t n_valid = rem / 2;
    for (int64_t i = 0; i < n; ++i) {
      auto& e = examples[static_cast<size_t>(i)];
      if (i < n_train)
        split.train.push_back(std::move(e));
      else if (i < n_train + n_valid)
        split.valid.push_back(std::move(e));
      else
        split.test.push_back(std::move(e));
    }
  }
  return split;
}

void truncate_histories(DatasetSplit& split, int64_t max_len) {
  check(max_len >= 1, "truncate_histories: max_len must be >= 1, got ",
        max_len);
  auto trunc = [max_len](std::vector<Example>& examples) {
    for (auto& e : examples) {
      int64_t n = static_cast<int64_t>(e.history.size());
      if (n > max_len)
        e.history.erase(e.history.begin(), e.history.begin() + (n - max_len));
    }
  };
  trunc(split.train);
  trunc(split.valid);
  trunc(split.test);
}

double CfBaseline::score(int32_t user_id, int32_t item_id) const {
  check(user_id >= 0 && user_id < user_factors.rows(),
        "cf score: user ", user_id, " out of range");
  check(item_id >= 0 && item_id < item_factors.rows(),
        "cf score: item ", item_id, " out of range");
  double s = 0.0;
  int64_t f = user_factors.cols();
  for (int64_t c = 0; c < f; ++c)
    s += user_factors.at(user_id, c) * item_factors.at(item_id, c);
  return s;
}

std::vector<double> CfBaseline::user_vector(
    const std::vector<int32_t>& history) const {
  check(!history.empty(), "cf user_vector: empty history");
  int64_t f = item_factors.cols();
  std::vector<double> u(static_cast<size_t>(f), 0.0);
  for (int32_t it : history) {
    check(it >= 0 && it < item_factors.rows(), "cf user_vector: item ", it,
          " out of range");
    for (int64_t c = 0; c < f; ++c)
      u[static_cast<size_t>(c)] += item_factors.at(it, c);
  }
  for (double& v : u) v /= static_cast<double>(history.size());
  return u;
}

double CfBaseline::score_history(const std::vector<int32_t>& history,
                                 int32_t item_id) const {
  std::vector<double> u = user_vector(history);
  check(item_id >= 0 && item_id < item_factors.rows(),
        "cf score_history: item ", item_id, " out of range");
  double s = 0.0;
  for (int64_t c = 0; c < item_factors.cols(); ++c)
    s += u[static_cast<size_t>(c)] * item_factors.at(item_id, c);
  return s;
}

CfBaseline train_cf_baseline(uint64_t seed, const DatasetSplit& split,
                             int64_t n_users, int64_t n_items, int64_t factors,
                             int64_t epochs, double lr,
                             std::vector<double>* loss_curve) {
  check(factors >= 2, "train_cf_baseline: factors must be >= 2, got ",
        factors);
  check(n_users > 0 && n_items > 0, "train_cf_baseline: empty universe");

  Rng rng(seed);
  ParamSet params;
  params.add("user_factors", Tensor::randn({n_users, factors}, rng, 0.1));
  params.add("item_factors", Tensor::randn({n_items, factors}, rng, 0.1));

  AdamWConfig cfg;
  cfg.lr = lr;
  cfg.weight_decay = 0.0;  // plain Adam
  AdamW opt(cfg, params);

  for (int64_t epoch = 0; epoch < epochs; ++epoch) {
    Tensor& U = params[0];
    Tensor& V = params[1];
    std::vector<Tensor> grads = {Tensor::zeros(U.shape), Tensor::zeros(V.shape)};
    double loss = 0.0;
    int64_t count = 0;
    for (const auto& e : split.train) {
      check(e.user_id >= 0 && e.user_id < n_users, "train_cf_baseline: user ",
            e.user_id, " out of range");
      check(e.target >= 0 && e.target < n_items, "train_cf_baseline: item ",
            e.target, " out of range");
      int32_t neg = static_cast<int32_t>(rng.below(static_cast<uint64_t>(n_items)));
      if (neg == e.target) neg = static_cast<int32_t>((neg + 1) % n_items);
      double sp = 0.0, sn = 0.0;
      for (int64_t c = 0; c < factors; ++c) {
        sp += U.at(e.user_id, c) * V.at(e.target, c);
        sn += U.at(e.user_id, c) * V.at(neg, c);
      }
      double pp = sigmoid(sp), pn = sigmoid(sn);
      loss += -std::log(std::max(pp, 1e-12)) - std::log(std::max(1.0 - pn, 1e-12));
      count += 1;
      double gp = pp - 1.0;  // d/ds of -log sigmoid(s)
      double gn = pn;        // d/ds of -log (1 - sigmoid(s))
      for (int64_t c = 0; c < factors; ++c) {
        grads[0].at(e.user_id, c) += gp * V.at(e.target, c) + gn * V.at(neg, c);
        grads[1].at(e.target, c) += gp * U.at(e.user_id, c);
        grads[1].at(neg, c) += gn * U.at(e.user_id, c);
      }
    }
    check(count > 0, "train_cf_baseline: no training examples");
    if (loss_curve != nullptr) loss_curve->push_back(loss / static_cast<double>(count));
    double inv = 1.0 / static_cast<double>(count);
    for (auto& g : grads)
      for (double& v : g.data) v *= inv;
    opt.step(params, grads);
  }

  CfBaseline cf;
  cf.user_factors = std::move(params[0]);
  cf.item_factors = std::move(params[1]);
  check(cf.user_factors.all_finite() && cf.item_factors.all_finite(),
        "train_cf_baseline: non-finite factors after training");
  return cf;
}

void save_catalog_jsonl(const Catalog& catalog, const std::string& path) {
  std::ofstream out(path);
  check(out.good(), "save_catalog_jsonl: cannot open ", path);
  for (const auto& item : catalog.items) {
    json j;
    j["item_id"] = item.item_id;
    j["embedding"] = item.embedding;
    j["title_tokens"] = item.title_tokens;
    j["cluster_label"] = item.cluster_label;
    out << j.dump() << "\n";
  }
  check(out.good(), "save_catalog_jsonl: write failed for ", path);
}

Catalog load_catalog_jsonl(const std::string& path) {
  std::ifstream in(path);
  check(in.good(), "load_catalog_jsonl: cannot open ", path);
  Catalog cat;
  std::string line;
  int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    check(!j.is_discarded(), "load_catalog_jsonl: bad JSON at ", path, ":",
          lineno);
    Item item;
    item.item_id = j.at("item_id").get<int32_t>();
    item.embedding = j.at("embedding").get<std::vector<double>>();
    item.title_tokens = j.at("title_tokens").get<std::vector<std::string>>();
    item.cluster_label = j.at("cluster_label").get<int32_t>();
    check(!item.embedding.empty(), "load_catalog_jsonl: empty embedding at ",
          path, ":", lineno);
    if (cat.dim == 0) cat.dim = static_cast<int64_t>(item.embedding.size());
    check(static_cast<int64_t>(item.embedding.size()) == cat.dim,
          "load_catalog_jsonl: inconsistent embedding dim at ", path, ":",
          lineno);
    cat.n_clusters = std::max(cat.n_clusters, item.cluster_label + 1);
    cat.items.push_back(std::move(item));
  }
  check(!cat.items.empty(), "load_catalog_jsonl: no items in ", path);
  return cat;
}

void save_interactions_jsonl(const InteractionLog& log,
                             const std::string& path) {
  std::ofstream out(path);
  check(out.good(), "save_interactions_jsonl: cannot open ", path);
  for (const auto& user : log.users) {
    json j;
    j["user_id"] = user.user_id;
    j["items"] = user.items;
    out << j.dump() << "\n";
  }
  check(out.good(), "save_interactions_jsonl: write failed for ", path);
}

InteractionLog load_interactions_jsonl(const std::string& path) {
  std::ifstream in(path);
  check(in.good(), "load_interactions_jsonl: cannot open ", path);
  InteractionLog log;
  std::string line;
  int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    check(!j.is_discarded(), "load_interactions_jsonl: bad JSON at ", path,
          ":", lineno);
    UserLog user;
    user.user_id = j.at("user_id").get<int32_t>();
    user.items = j.at("items").get<std::vector<int32_t>>();
    log.users.push_back(std::move(user));
  }
  check(!log.users.empty(), "load_interactions_jsonl: no users in ", path);
  return log;
}

namespace {

constexpr char kCfMagic[8] = {'g', 'r', 'c', 'f', '0', '0', '0', '1'};

void write_tensor(std::ofstream& out, const Tensor& t) {
  int64_t r = t.rows(), c = t.cols();
  out.write(reinterpret_cast<const char*>(&r), sizeof(r));
  out.write(reinterpret_cast<const char*>(&c), sizeof(c));
  out.write(reinterpret_cast<const char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(double)));
}

Tensor read_tensor(std::ifstream& in, const std::string& path) {
  int64_t r = 0, c = 0;
  in.read(reinterpret_cast<char*>(&r), sizeof(r));
  in.read(reinterpret_cast<char*>(&c), sizeof(c));
  check(in.good() && r > 0 && c > 0, "load_cf_baseline: truncated header in ",
        path);
  Tensor t({r, c});
  in.read(reinterpret_cast<char*>(t.data.data()),
          static_cast<std::streamsize>(t.data.size() * sizeof(double)));
  check(in.good(), "load_cf_baseline: truncated tensor data in ", path);
  return t;
}

}  // namespace

void save_cf_baseline(const CfBaseline& cf, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  check(out.good(), "save_cf_baseline: cannot open ", path);
  out.write(kCfMagic, sizeof(kCfMagic));
  write_tensor(out, cf.user_factors);
  write_tensor(out, cf.item_factors);
  check(out.good(), "save_cf_baseline: write failed for ", path);
}

CfBaseline load_cf_baseline(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check(in.good(), "load_cf_baseline: cannot open ", path);
  char magic[sizeof(kCfMagic)];
  in.read(magic, sizeof(magic));
  check(in.good() && std::equal(magic, magic + sizeof(magic), kCfMagic),
        "load_cf_baseline: bad magic in ", path);
  CfBaseline cf;
  cf.user_factors = read_tensor(in, path);
  cf.item_factors = read_tensor(in, path);
  return cf;
}

}  // namespace genrec
