#include "lingsim/alignment.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <optional>

#include <fmt/core.h>

#include "lingsim/common.hpp"

namespace lingsim {

namespace {

// Ranking order: higher code first, then lower index.
struct Better {
  std::span<const std::int8_t> row;
  bool operator()(std::size_t x, std::size_t y) const {
    return row[x] != row[y] ? row[x] > row[y] : x < y;
  }
};

// Top-k, or nullopt when fewer than k usable entries exist.
std::optional<std::vector<std::size_t>> try_topk(std::span<const std::int8_t> row, std::size_t self_index,
                                                 std::size_t k, std::vector<std::size_t>& scratch) {
  scratch.clear();
  for (std::size_t j = 0; j < row.size(); ++j)
    if (j != self_index && row[j] != kUndefinedCode) scratch.push_back(j);
  if (scratch.size() < k) return std::nullopt;
  std::nth_element(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(k - 1), scratch.end(),
                   Better{row});
  std::vector<std::size_t> out(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(out.begin(), out.end());
  return out;
}

std::size_t overlap(const std::vector<std::size_t>& x, const std::vector<std::size_t>& y) {
  std::size_t i = 0, j = 0, c = 0;
  while (i < x.size() && j < y.size()) {
    if (x[i] == y[j]) ++c, ++i, ++j;
    else if (x[i] < y[j]) ++i;
    else ++j;
  }
  return c;
}

void check_square(std::size_t rows, std::size_t cols, std::size_t k) {
  if (rows != cols) throw Error(ErrorKind::shape, "alignment: matrices must be square");
  if (k == 0 || k >= rows) throw Error(ErrorKind::invalid, fmt::format("alignment: k = {} with n = {}", k, rows));
}

void check_tables(const KnnTable& a, const KnnTable& b) {
  if (a.n() != b.n()) throw Error(ErrorKind::shape, fmt::format("alignment: n = {} vs {}", a.n(), b.n()));
  if (a.sample_hash != b.sample_hash)
    throw Error(ErrorKind::mismatch, fmt::format("alignment: sample order {} vs {}", hex16(a.sample_hash),
                                                 hex16(b.sample_hash)));
  if (a.k != b.k) throw Error(ErrorKind::invalid, fmt::format("alignment: k = {} vs {}", a.k, b.k));
}

template <class RowFill>
KnnTable build_table(std::size_t n, std::size_t k, int threads, RowFill fill) {
  KnnTable t;
  t.k = k;
  t.rows.resize(n);
  const auto rows = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel num_threads(threads > 0 ? threads : omp_get_max_threads())
  {
    std::vector<std::size_t> scratch;
    std::vector<std::int8_t> buf(n);
#pragma omp for schedule(dynamic, 16)
    for (std::ptrdiff_t i = 0; i < rows; ++i) {
      const auto u = static_cast<std::size_t>(i);
      t.rows[u] = try_topk(fill(u, buf), u, k, scratch);
    }
  }
  return t;
}

}  // namespace

KnnTable knn_table(const SimMatrix& sim, std::size_t k, int threads) {
  check_square(sim.rows, sim.cols, k);
  auto t = build_table(sim.rows, k, threads, [&](std::size_t i, std::vector<std::int8_t>&) { return sim.row(i); });
  t.model_id = sim.row_model;
  t.sample_hash = sim.row_hash;
  return t;
}

KnnTable knn_table(const SimMatrixReader& sim, std::size_t k, int threads) {
  const auto& info = sim.info();
  check_square(info.rows, info.cols, k);
  auto t = build_table(info.rows, k, threads, [&](std::size_t i, std::vector<std::int8_t>& buf) {
    sim.read_row(i, buf);
    return std::span<const std::int8_t>(buf);
  });
  t.model_id = info.row_model;
  t.sample_hash = info.row_hash;
  return t;
}

AlignmentResult mutual_knn_alignment(const KnnTable& a, const KnnTable& b) {
  check_tables(a, b);
  AlignmentResult r;
  r.model_a = a.model_id;
  r.model_b = b.model_id;
  r.k = a.k;
  r.n = a.n();
  // Integer overlap counts summed in sample order; exact for any thread count.
  std::size_t shared = 0;
  for (std::size_t i = 0; i < a.n(); ++i) {
    if (!a.rows[i] || !b.rows[i]) {
      r.skipped.push_back(i);
      continue;
    }
    shared += overlap(*a.rows[i], *b.rows[i]);
    ++r.n_scored;
  }
  if (r.n_scored == 0) throw Error(ErrorKind::invalid, "alignment: no sample has k defined neighbours");
  r.score = static_cast<double>(shared) / (static_cast<double>(r.k) * static_cast<double>(r.n_scored));
  return r;
}

std::vector<std::size_t> topk_neighbors(std::span<const std::int8_t> row, std::size_t self_index, std::size_t k) {
  if (k == 0) throw Error(ErrorKind::invalid, "topk: k must be positive");
  std::vector<std::size_t> scratch;
  auto r = try_topk(row, self_index, k, scratch);
  if (!r)
    throw Error(ErrorKind::invalid,
                fmt::format("topk: fewer than {} defined entries besides the query", k));
  return *r;
}

AlignmentResult mutual_knn_alignment(const SimMatrix& a, const SimMatrix& b, std::size_t k, int threads) {
  if (a.rows != b.rows) throw Error(ErrorKind::shape, fmt::format("alignment: n = {} vs {}", a.rows, b.rows));
  if (a.row_hash != b.row_hash)
    throw Error(ErrorKind::mismatch, fmt::format("alignment: sample order {} vs {}", hex16(a.row_hash),
                                                 hex16(b.row_hash)));
  return mutual_knn_alignment(knn_table(a, k, threads), knn_table(b, k, threads));
}

AlignmentMatrix alignment_matrix(std::span<const KnnTable> tables) {
  if (tables.size() < 2) throw Error(ErrorKind::invalid, "alignment matrix: need at least 2 models");
  for (const auto& t : tables) check_tables(tables.front(), t);
  const std::size_t m = tables.size();
  AlignmentMatrix out;
  for (const auto& t : tables) out.model_ids.push_back(t.model_id);
  out.scores.assign(m * m, 1.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j) {
      const double v = mutual_knn_alignment(tables[i], tables[j]).score;
      out.scores[i * m + j] = v;
      out.scores[j * m + i] = v;
    }
  return out;
}

AlignmentMatrix alignment_matrix(std::span<const NamedSim> sims, std::size_t k, int threads) {
  if (sims.size() < 2) throw Error(ErrorKind::invalid, "alignment matrix: need at least 2 models");
  std::vector<KnnTable> tables;
  tables.reserve(sims.size());
  for (const auto& s : sims) {
    if (s.sim == nullptr) throw Error(ErrorKind::invalid, "alignment matrix: null matrix");
    tables.push_back(knn_table(*s.sim, k, threads));
    tables.back().model_id = s.model_id;
  }
  return alignment_matrix(tables);
}

double distance_from_alignment(double score) {
  if (!(score >= 0.0 && score <= 1.0))
    throw Error(ErrorKind::invalid, fmt::format("alignment score {} outside [0, 1]", score));
  const double d = -std::log(std::max(score, kDistanceFloor));
  return d == 0.0 ? 0.0 : d;  // no negative zero for score 1
}

}  // namespace lingsim
