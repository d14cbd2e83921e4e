#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

#include "lingsim/tensorstore.hpp"

namespace lingsim {

struct SimConfig {
  Aggregation aggregation = Aggregation::layer_mean;
  std::size_t tile = 256;  // output tile edge
  int threads = 0;         // 0 = OpenMP default
  bool force_cross_model = false;
};

struct CosineResult {
  double value = 0.0;
  bool defined = false;  // false when either vector has zero norm
};

/// Exact integer dot product of two int8 vectors of equal length.
std::int64_t dot_i8(std::span<const std::int8_t> a, std::span<const std::int8_t> b);

/// Cosine of two code vectors. Per-vector scales cancel, so this equals the
/// cosine of the dequantized vectors.
CosineResult cosine_layer(std::span<const std::int8_t> a, std::span<const std::int8_t> b);

/// Square similarity of `a` with itself. Only j >= i is computed and mirrored.
SimMatrix pairwise_similarity(const VectorSet& a, const SimConfig& cfg);

/// Rectangular similarity, rows from `a`, columns from `b`. The two sets must
/// share model_id unless cfg.force_cross_model is set.
SimMatrix pairwise_similarity(const VectorSet& a, const VectorSet& b, const SimConfig& cfg);

namespace reference {

/// Serial cell-by-cell evaluation with the same arithmetic as the tiled
/// kernel. Kept as the baseline for the equivalence tests and the benchmark.
SimMatrix pairwise_similarity(const VectorSet& a, const VectorSet* b, const SimConfig& cfg);

}  // namespace reference

}  // namespace lingsim
