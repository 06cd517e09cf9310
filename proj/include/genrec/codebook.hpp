// Copyright 2026 The GenRec Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "genrec/tensor.hpp"

namespace genrec {

// Residual quantizer: level l approximates the residual left by levels
// 0..l-1 with its nearest centroid. Levels may hold fewer than the nominal
// K rows when the training residuals had fewer distinct values.
struct Codebook {
  int64_t dim = 0;
  int64_t nominal_k = 0;
  double beta_commit = 0.25;
  std::vector<Tensor> levels;  // each [K_l, dim]

  int64_t n_levels() const { return static_cast<int64_t>(levels.size()); }
  int64_t level_size(int64_t l) const { return levels[static_cast<size_t>(l)].rows(); }
};

struct SidAssignment {
  int32_t item_id = 0;
  std::vector<int32_t> codes;    // one per level
  std::vector<double> residual;  // what the codes leave unexplained
  int32_t disambiguation = 0;
};

// Per level, the within-cluster SSE recorded after each assignment pass.
struct KmeansTrace {
  std::vector<std::vector<double>> sse;
};

// Recursive k-means over residuals: level l is fit on what levels 0..l-1
// left behind. k-means++ seeding, Lloyd iterations with lowest-index tie
// breaks, empty clusters reseeded from the point farthest from its
// centroid. Deterministic in the seed.
Codebook train_rq_kmeans(const std::vector<std::vector<double>>& embeddings,
                         int64_t n_levels, int64_t k, int64_t lloyd_iters,
                         uint64_t seed, double beta_commit = 0.25,
                         KmeansTrace* trace = nullptr);

// Index of the nearest centroid row by L2 distance, ties to the lowest index.
int32_t nearest_centroid(const double* x, const Tensor& centroids);

// Greedy per-level nearest centroid (exhaustive argmin, ties to the lowest
// index); the returned residual makes x = sum of centroids + residual.
SidAssignment quantize(const std::vector<double>& x, const Codebook& cb);

// Sum of the selected centroids. Out-of-range codes are rejected.
std::vector<double> reconstruct(const std::vector<int32_t>& codes,
                                const Codebook& cb);

// Items sharing a code tuple get disambiguation indices 0,1,2,... in
// item_id order; unique tuples keep index 0.
void disambiguate_collisions(std::vector<SidAssignment>& assignments);

// quantize + disambiguate over a whole embedding table, item_id = row.
std::vector<SidAssignment> assign_sids(
    const std::vector<std::vector<double>>& embeddings, const Codebook& cb);

// Binary format: magic/version header, dims and beta, then per-level row
// counts and row-major little-endian doubles. Round trips are bit-exact.
void save_codebook(const Codebook& cb, const std::string& path);
Codebook load_codebook(const std::string& path);

void save_assignments_jsonl(const std::vector<SidAssignment>& assignments,
                            const std::string& path);
std::vector<SidAssignment> load_assignments_jsonl(const std::string& path);

}  // namespace genrec
