#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lingsim/core_model.hpp"
#include "lingsim/tensorstore.hpp"

namespace lingsim {

// ---------------------------------------------------------------------------
// Intra-/inter-class statistics

inline constexpr std::size_t kHistBins = 200;

/// Bin of a similarity value on 200 equal bins over [-1, 1]; 1.0 goes to the last bin.
std::size_t hist_bin(double x);

struct ClassStats {
  TaxonomyLevel level = TaxonomyLevel::phenomenon;
  double intra_mean = 0.0;
  double inter_mean = 0.0;
  double gap = 0.0;  // intra_mean - inter_mean
  double intra_se = 0.0;  // standard error of each mean
  double inter_se = 0.0;
  std::vector<std::uint64_t> intra_hist;  // kHistBins
  std::vector<std::uint64_t> inter_hist;
  std::uint64_t intra_count = 0;
  std::uint64_t inter_count = 0;
  std::uint64_t sentinel_pairs = 0;  // unordered pairs skipped as undefined (exact mode)
  bool exact = true;
  std::uint64_t seed = 0;  // subsampled mode only
};

struct ClassStatsOptions {
  std::optional<std::size_t> sample_pairs;  // unset: exact enumeration of all i < j
  std::uint64_t seed = 0;
  int threads = 0;
};

ClassStats class_similarity_stats(const SimMatrix& sim, std::span<const std::string> labels, TaxonomyLevel level,
                                  const ClassStatsOptions& opts = {});

/// Same, streaming rows from an LSIM file (one pass, rows read in parallel).
ClassStats class_similarity_stats(const SimMatrixReader& sim, std::span<const std::string> labels,
                                  TaxonomyLevel level, const ClassStatsOptions& opts = {});

// ---------------------------------------------------------------------------
// Block means: phenomenon matrices and cross-lingual term tables

struct BlockMeans {
  std::vector<std::string> row_labels;
  std::vector<std::string> col_labels;
  std::vector<double> means;          // row_labels x col_labels; NaN where count is 0
  std::vector<std::uint64_t> counts;  // contributing defined pairs

  double at(std::size_t p, std::size_t q) const { return means[p * col_labels.size() + q]; }
  std::uint64_t count(std::size_t p, std::size_t q) const { return counts[p * col_labels.size() + q]; }
};

using PhenomenonMatrix = BlockMeans;
using TermTable = BlockMeans;

/// Mean similarity over pairs (i in p, j in q), i != j, sentinels excluded.
/// `order` fixes the label order (default: first appearance); every listed
/// label must own at least one sample.
PhenomenonMatrix phenomenon_matrix(const SimMatrix& sim, std::span<const std::string> labels,
                                   std::span<const std::string> order = {});

/// Mean similarity of every (row term, column term) block of a rectangular matrix.
TermTable cross_lingual_term_table(const SimMatrix& sim, std::span<const std::string> row_terms,
                                   std::span<const std::string> col_terms,
                                   std::span<const std::string> row_order = {},
                                   std::span<const std::string> col_order = {});

// ---------------------------------------------------------------------------
// Linguistic vs semantic joint distribution

/// Half-open range lo < x <= hi.
struct SimBucket {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double x) const { return x > lo && x <= hi; }
  std::string label() const;
};

/// (0.9, 1.0], (0.8, 0.9], ..., (0, 0.1], (-inf, 0].
std::vector<SimBucket> default_buckets();

/// Parses "lo:hi,lo:hi,..." with "-inf" allowed as a bound.
std::vector<SimBucket> parse_buckets(std::string_view spec);

struct JointRecord {
  std::size_t i = 0;  // i < j
  std::size_t j = 0;
  double linguistic_sim = 0.0;
  double semantic_sim = 0.0;
  std::size_t bucket = 0;
};

struct JointSample {
  std::vector<SimBucket> buckets;
  std::vector<JointRecord> records;  // grouped by bucket, then (i, j) ascending
  std::vector<std::uint64_t> eligible;  // candidate pairs per bucket
  std::vector<std::size_t> shortfall;   // per_bucket - drawn, per bucket
  std::optional<double> pearson_r;      // unset when undefined (zero variance, < 2 records)
  std::size_t per_bucket = 0;
  std::uint64_t seed = 0;
};

/// Uniform reservoir sample of up to `per_bucket` unordered pairs per bucket.
/// Pairs with undefined linguistic or semantic similarity are not eligible.
JointSample joint_distribution_sample(const SimMatrix& sim, const VectorSet& semantic,
                                      std::span<const SimBucket> buckets, std::size_t per_bucket,
                                      std::uint64_t seed);

std::optional<double> pearson(std::span<const double> x, std::span<const double> y);

enum class Quadrant { HH, HL, LH, LL };  // (linguistic, semantic)

std::string_view to_string(Quadrant q);

struct QuadrantExample {
  Quadrant quadrant = Quadrant::HH;
  JointRecord record;
  MinimalPair pair_i;
  MinimalPair pair_j;
};

/// Up to `per_quadrant` records per quadrant, in joint-record order. High means
/// > high, low means < low.
std::vector<QuadrantExample> quadrant_examples(const JointSample& joint, const Dataset& pairs, double high = 0.6,
                                               double low = 0.3, std::size_t per_quadrant = 5);

}  // namespace lingsim
