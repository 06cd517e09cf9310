// Copyright 2026 The GenRec Authors
// SPDX-License-Identifier: Apache-2.0

#include "genrec/codebook.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>

#include <json.hpp>

#include "genrec/check.hpp"
#include "genrec/rng.hpp"

namespace genrec {

namespace {

using nlohmann::json;

double sq_dist(const double* a, const double* b, int64_t d) {
  double s = 0.0;
  for (int64_t i = 0; i < d; ++i) {
    double diff = a[i] - b[i];
    s += diff * diff;
  }
  return s;
}

// One k-means fit on a point set; returns [k_eff, d] centroids.
Tensor kmeans_level(const std::vector<std::vector<double>>& points, int64_t k,
                    int64_t iters, Rng& rng, std::vector<double>* sse_out) {
  int64_t n = static_cast<int64_t>(points.size());
  int64_t d = static_cast<int64_t>(points[0].size());

  // With k or fewer distinct points the optimum is the distinct points
  // themselves (first-occurrence order), with zero SSE.
  std::vector<int64_t> distinct;
  for (int64_t i = 0; i < n && static_cast<int64_t>(distinct.size()) <= k; ++i) {
    bool seen = false;
    for (int64_t j : distinct)
      if (points[static_cast<size_t>(j)] == points[static_cast<size_t>(i)]) {
        seen = true;
        break;
      }
    if (!seen) distinct.push_back(i);
  }
  if (static_cast<int64_t>(distinct.size()) <= k) {
    Tensor c({static_cast<int64_t>(distinct.size()), d});
    for (size_t j = 0; j < distinct.size(); ++j)
      std::copy(points[static_cast<size_t>(distinct[j])].begin(),
                points[static_cast<size_t>(distinct[j])].end(),
                c.data.begin() + static_cast<int64_t>(j) * d);
    if (sse_out != nullptr) sse_out->push_back(0.0);
    return c;
  }

  // k-means++ seeding
  Tensor c({k, d});
  std::vector<double> min_d2(static_cast<size_t>(n),
                             std::numeric_limits<double>::infinity());
  int64_t first = static_cast<int64_t>(rng.below(static_cast<uint64_t>(n)));
  std::copy(points[static_cast<size_t>(first)].begin(),
            points[static_cast<size_t>(first)].end(), c.data.begin());
  for (int64_t j = 1; j < k; ++j) {
    for (int64_t i = 0; i < n; ++i) {
      double d2 = sq_dist(points[static_cast<size_t>(i)].data(),
                          c.data.data() + (j - 1) * d, d);
      min_d2[static_cast<size_t>(i)] = std::min(min_d2[static_cast<size_t>(i)], d2);
    }
    int64_t pick = static_cast<int64_t>(rng.weighted(min_d2));
    std::copy(points[static_cast<size_t>(pick)].begin(),
              points[static_cast<size_t>(pick)].end(), c.data.begin() + j * d);
  }

  std::vector<int32_t> assign(static_cast<size_t>(n), -1);
  for (int64_t it = 0; it < iters; ++it) {
    std::vector<int32_t> prev = assign;
    for (int64_t i = 0; i < n; ++i)
      assign[static_cast<size_t>(i)] =
          nearest_centroid(points[static_cast<size_t>(i)].data(), c);

    // Empty-cluster repair: seed from the point farthest from its centroid,
    // then reassign, until every cluster is populated.
    for (;;) {
      std::vector<int64_t> count(static_cast<size_t>(k), 0);
      for (int32_t a : assign) ++count[static_cast<size_t>(a)];
      int64_t empty = -1;
      for (int64_t j = 0; j < k; ++j)
        if (count[static_cast<size_t>(j)] == 0) {
          empty = j;
          break;
        }
      if (empty < 0) break;
      int64_t far = 0;
      double far_d = -1.0;
      for (int64_t i = 0; i < n; ++i) {
        double d2 = sq_dist(points[static_cast<size_t>(i)].data(),
                            c.data.data() + assign[static_cast<size_t>(i)] * d, d);
        if (d2 > far_d) {
          far_d = d2;
          far = i;
        }
      }
      std::copy(points[static_cast<size_t>(far)].begin(),
                points[static_cast<size_t>(far)].end(),
                c.data.begin() + empty * d);
      for (int64_t i = 0; i < n; ++i)
        assign[static_cast<size_t>(i)] =
            nearest_centroid(points[static_cast<size_t>(i)].data(), c);
    }

    if (sse_out != nullptr) {
      double sse = 0.0;
      for (int64_t i = 0; i < n; ++i)
        sse += sq_dist(points[static_cast<size_t>(i)].data(),
                       c.data.data() + assign[static_cast<size_t>(i)] * d, d);
      sse_out->push_back(sse);
    }
    if (assign == prev) break;  // fixed point

    // centroid update: mean of assigned points
    std::fill(c.data.begin(), c.data.end(), 0.0);
    std::vector<int64_t> count(static_cast<size_t>(k), 0);
    for (int64_t i = 0; i < n; ++i) {
      int32_t a = assign[static_cast<size_t>(i)];
      ++count[static_cast<size_t>(a)];
      for (int64_t x = 0; x < d; ++x)
        c.data[a * d + x] += points[static_cast<size_t>(i)][static_cast<size_t>(x)];
    }
    for (int64_t j = 0; j < k; ++j)
      for (int64_t x = 0; x < d; ++x)
        c.data[j * d + x] /= static_cast<double>(count[static_cast<size_t>(j)]);
  }
  return c;
}

}  // namespace

int32_t nearest_centroid(const double* x, const Tensor& centroids) {
  int64_t k = centroids.rows();
  int64_t d = centroids.cols();
  int32_t best = 0;
  double best_d = sq_dist(x, centroids.data.data(), d);
  for (int64_t j = 1; j < k; ++j) {
    double dj = sq_dist(x, centroids.data.data() + j * d, d);
    if (dj < best_d) {
      best_d = dj;
      best = static_cast<int32_t>(j);
    }
  }
  return best;
}

Codebook train_rq_kmeans(const std::vector<std::vector<double>>& embeddings,
                         int64_t n_levels, int64_t k, int64_t lloyd_iters,
                         uint64_t seed, double beta_commit,
                         KmeansTrace* trace) {
  check(!embeddings.empty(), "train_rq_kmeans: empty embedding set");
  check(n_levels >= 1, "train_rq_kmeans: need at least one level");
  check(k >= 1, "train_rq_kmeans: k must be positive");
  check(lloyd_iters >= 1, "train_rq_kmeans: need at least one iteration");
  int64_t d = static_cast<int64_t>(embeddings[0].size());
  for (const auto& e : embeddings)
    check(static_cast<int64_t>(e.size()) == d,
          "train_rq_kmeans: inconsistent embedding dims");

  Codebook cb;
  cb.dim = d;
  cb.nominal_k = k;
  cb.beta_commit = beta_commit;

  Rng root(seed);
  std::vector<std::vector<double>> residuals = embeddings;
  for (int64_t l = 0; l < n_levels; ++l) {
    Rng rng = root.fork(static_cast<uint64_t>(l) + 1);
    std::vector<double>* sse = nullptr;
    if (trace != nullptr) {
      trace->sse.emplace_back();
      sse = &trace->sse.back();
    }
    Tensor centroids = kmeans_level(residuals, k, lloyd_iters, rng, sse);
    for (auto& r : residuals) {
      int32_t code = nearest_centroid(r.data(), centroids);
      const double* cr = centroids.data.data() + code * d;
      for (int64_t x = 0; x < d; ++x) r[static_cast<size_t>(x)] -= cr[x];
    }
    cb.levels.push_back(std::move(centroids));
  }
  for (const auto& level : cb.levels)
    check(level.all_finite(), "train_rq_kmeans: non-finite centroid");
  return cb;
}

SidAssignment quantize(const std::vector<double>& x, const Codebook& cb) {
  check(static_cast<int64_t>(x.size()) == cb.dim, "quantize: input dim ",
        x.size(), " does not match codebook dim ", cb.dim);
  SidAssignment a;
  a.residual = x;
  for (int64_t l = 0; l < cb.n_levels(); ++l) {
    const Tensor& level = cb.levels[static_cast<size_t>(l)];
    int32_t code = nearest_centroid(a.residual.data(), level);
    a.codes.push_back(code);
    const double* c = level.data.data() + code * cb.dim;
    for (int64_t i = 0; i < cb.dim; ++i) a.residual[static_cast<size_t>(i)] -= c[i];
  }
  return a;
}

std::vector<double> reconstruct(const std::vector<int32_t>& codes,
                                const Codebook& cb) {
  check(static_cast<int64_t>(codes.size()) == cb.n_levels(),
        "reconstruct: ", codes.size(), " codes for ", cb.n_levels(),
        " levels");
  std::vector<double> out(static_cast<size_t>(cb.dim), 0.0);
  for (int64_t l = 0; l < cb.n_levels(); ++l) {
    int32_t code = codes[static_cast<size_t>(l)];
    check(code >= 0 && code < cb.level_size(l), "reconstruct: code ", code,
          " out of range for level ", l, " with ", cb.level_size(l), " rows");
    const double* c =
        cb.levels[static_cast<size_t>(l)].data.data() + code * cb.dim;
    for (int64_t i = 0; i < cb.dim; ++i) out[static_cast<size_t>(i)] += c[i];
  }
  return out;
}

void disambiguate_collisions(std::vector<SidAssignment>& assignments) {
  std::map<std::vector<int32_t>, std::vector<size_t>> groups;
  for (size_t i = 0; i < assignments.size(); ++i)
    groups[assignments[i].codes].push_back(i);
  for (auto& [codes, members] : groups) {
    std::sort(members.begin(), members.end(), [&](size_t a, size_t b) {
      return assignments[a].item_id < assignments[b].item_id;
    });
    for (size_t j = 0; j < members.size(); ++j)
      assignments[members[j]].disambiguation = static_cast<int32_t>(j);
  }
}

std::vector<SidAssignment> assign_sids(
    const std::vector<std::vector<double>>& embeddings, const Codebook& cb) {
  std::vector<SidAssignment> out;
  out.reserve(embeddings.size());
  for (size_t i = 0; i < embeddings.size(); ++i) {
    SidAssignment a = quantize(embeddings[i], cb);
    a.item_id = static_cast<int32_t>(i);
    out.push_back(std::move(a));
  }
  disambiguate_collisions(out);
  return out;
}

namespace {

constexpr char kCbMagic[4] = {'g', 'r', 'c', 'b'};
constexpr uint32_t kCbVersion = 1;

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <typename T>
T take(std::ifstream& in, int64_t* offset, const std::string& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  check(in.good(), "load_codebook: ", path, " truncated at byte offset ",
        *offset);
  *offset += static_cast<int64_t>(sizeof(v));
  return v;
}

}  // namespace

void save_codebook(const Codebook& cb, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  check(out.good(), "save_codebook: cannot open ", path);
  out.write(kCbMagic, sizeof(kCbMagic));
  put(out, kCbVersion);
  put(out, static_cast<uint32_t>(cb.n_levels()));
  put(out, static_cast<uint32_t>(cb.nominal_k));
  put(out, static_cast<uint32_t>(cb.dim));
  put(out, cb.beta_commit);
  for (const auto& level : cb.levels) {
    put(out, static_cast<uint32_t>(level.rows()));
    out.write(reinterpret_cast<const char*>(level.data.data()),
              static_cast<std::streamsize>(level.data.size() * sizeof(double)));
  }
  check(out.good(), "save_codebook: write failed for ", path);
}

Codebook load_codebook(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check(in.good(), "load_codebook: cannot open ", path);
  int64_t offset = 0;
  char magic[sizeof(kCbMagic)];
  in.read(magic, sizeof(magic));
  check(in.good() && std::memcmp(magic, kCbMagic, sizeof(magic)) == 0,
        "load_codebook: ", path, " has wrong magic at byte offset 0");
  offset += sizeof(magic);
  uint32_t version = take<uint32_t>(in, &offset, path);
  check(version == kCbVersion, "load_codebook: ", path, " has version ",
        version, ", this build reads version ", kCbVersion);
  uint32_t n_levels = take<uint32_t>(in, &offset, path);
  uint32_t nominal_k = take<uint32_t>(in, &offset, path);
  uint32_t dim = take<uint32_t>(in, &offset, path);
  double beta = take<double>(in, &offset, path);
  check(n_levels >= 1 && n_levels <= 64 && dim >= 1 && nominal_k >= 1,
        "load_codebook: ", path, " has implausible header values");

  Codebook cb;
  cb.dim = dim;
  cb.nominal_k = nominal_k;
  cb.beta_commit = beta;
  for (uint32_t l = 0; l < n_levels; ++l) {
    uint32_t rows = take<uint32_t>(in, &offset, path);
    check(rows >= 1 && rows <= nominal_k, "load_codebook: ", path, " level ",
          l, " has bad row count ", rows, " at byte offset ", offset - 4);
    Tensor t({static_cast<int64_t>(rows), static_cast<int64_t>(dim)});
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    check(in.good(), "load_codebook: ", path, " truncated at byte offset ",
          offset);
    offset += static_cast<int64_t>(t.data.size() * sizeof(double));
    check(t.all_finite(), "load_codebook: ", path, " level ", l,
          " contains non-finite centroids");
    cb.levels.push_back(std::move(t));
  }
  return cb;
}

void save_assignments_jsonl(const std::vector<SidAssignment>& assignments,
                            const std::string& path) {
  std::ofstream out(path);
  check(out.good(), "save_assignments_jsonl: cannot open ", path);
  for (const auto& a : assignments) {
    json j;
    j["item_id"] = a.item_id;
    j["codes"] = a.codes;
    j["disambiguation"] = a.disambiguation;
    out << j.dump() << "\n";
  }
  check(out.good(), "save_assignments_jsonl: write failed for ", path);
}

std::vector<SidAssignment> load_assignments_jsonl(const std::string& path) {
  std::ifstream in(path);
  check(in.good(), "load_assignments_jsonl: cannot open ", path);
  std::vector<SidAssignment> out;
  std::string line;
  int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    check(!j.is_discarded(), "load_assignments_jsonl: bad JSON at ", path, ":",
          lineno);
    SidAssignment a;
    a.item_id = j.at("item_id").get<int32_t>();
    a.codes = j.at("codes").get<std::vector<int32_t>>();
    a.disambiguation = j.at("disambiguation").get<int32_t>();
    out.push_back(std::move(a));
  }
  check(!out.empty(), "load_assignments_jsonl: no assignments in ", path);
  return out;
}

}  // namespace genrec
