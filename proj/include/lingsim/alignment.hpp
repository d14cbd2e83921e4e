#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lingsim/tensorstore.hpp"

namespace lingsim {

inline constexpr std::size_t kNoSelf = std::numeric_limits<std::size_t>::max();

/// Indices of the k largest similarities in `row`, skipping `self_index` and
/// undefined (-128) entries. Ties go to the lower index. Output is ascending.
std::vector<std::size_t> topk_neighbors(std::span<const std::int8_t> row, std::size_t self_index, std::size_t k);

struct AlignmentResult {
  std::string model_a;
  std::string model_b;
  std::size_t k = 0;
  std::size_t n = 0;         // samples in the matrices
  std::size_t n_scored = 0;  // samples with k defined neighbours in both
  std::vector<std::size_t> skipped;
  double score = 0.0;
};

/// Per-sample top-k neighbour sets of one model (self excluded). A row is
/// empty when the sample has fewer than k defined neighbours.
struct KnnTable {
  std::string model_id;
  std::uint64_t sample_hash = 0;
  std::size_t k = 0;
  std::vector<std::optional<std::vector<std::size_t>>> rows;

  std::size_t n() const { return rows.size(); }
};

KnnTable knn_table(const SimMatrix& sim, std::size_t k, int threads = 0);
/// Streams rows from an LSIM file; only the neighbour sets are kept in memory.
KnnTable knn_table(const SimMatrixReader& sim, std::size_t k, int threads = 0);

/// Mean over samples of |topk_A(i) n topk_B(i)| / k, self excluded.
AlignmentResult mutual_knn_alignment(const SimMatrix& a, const SimMatrix& b, std::size_t k, int threads = 0);
AlignmentResult mutual_knn_alignment(const KnnTable& a, const KnnTable& b);

struct NamedSim {
  std::string model_id;
  const SimMatrix* sim = nullptr;
};

struct AlignmentMatrix {
  std::vector<std::string> model_ids;
  std::vector<double> scores;  // m x m, row-major

  std::size_t size() const { return model_ids.size(); }
  double at(std::size_t i, std::size_t j) const { return scores[i * model_ids.size() + j]; }
};

/// Scores all unordered pairs; the diagonal is 1.
AlignmentMatrix alignment_matrix(std::span<const NamedSim> sims, std::size_t k, int threads = 0);
AlignmentMatrix alignment_matrix(std::span<const KnnTable> tables);

inline constexpr double kDistanceFloor = 1e-6;

/// -ln(max(score, 1e-6)).
double distance_from_alignment(double score);

}  // namespace lingsim
