#include "lingsim/simkernel.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include <fmt/core.h>

#include "lingsim/common.hpp"

namespace lingsim {

std::int64_t dot_i8(std::span<const std::int8_t> a, std::span<const std::int8_t> b) {
  if (a.size() != b.size())
    throw Error(ErrorKind::shape, fmt::format("dot: length {} vs {}", a.size(), b.size()));
  // 65536 * 127 * 127 < 2^31, so each chunk fits a 32-bit accumulator.
  constexpr std::size_t kChunk = std::size_t{1} << 16;
  const std::int8_t* pa = a.data();
  const std::int8_t* pb = b.data();
  std::int64_t total = 0;
  for (std::size_t base = 0; base < a.size(); base += kChunk) {
    const std::size_t end = std::min(a.size(), base + kChunk);
    std::int32_t acc = 0;
    for (std::size_t k = base; k < end; ++k) acc += static_cast<std::int32_t>(pa[k]) * pb[k];
    total += acc;
  }
  return total;
}

CosineResult cosine_layer(std::span<const std::int8_t> a, std::span<const std::int8_t> b) {
  if (a.size() != b.size())
    throw Error(ErrorKind::shape, fmt::format("cosine: length {} vs {}", a.size(), b.size()));
  if (a.empty()) throw Error(ErrorKind::shape, "cosine: empty vectors");
  const auto na = dot_i8(a, a);
  const auto nb = dot_i8(b, b);
  if (na == 0 || nb == 0) return {0.0, false};
  const double c = static_cast<double>(dot_i8(a, b)) /
                   (std::sqrt(static_cast<double>(na)) * std::sqrt(static_cast<double>(nb)));
  return {std::clamp(c, -1.0, 1.0), true};
}

namespace {

void check_inputs(const VectorSet& a, const VectorSet& b, bool same, const SimConfig& cfg) {
  if (a.n_samples == 0 || b.n_samples == 0) throw Error(ErrorKind::invalid, "pairwise similarity: empty input");
  if (cfg.tile == 0) throw Error(ErrorKind::invalid, "pairwise similarity: tile must be >= 1");
  if (a.dim != b.dim)
    throw Error(ErrorKind::shape, fmt::format("pairwise similarity: dim {} vs {}", a.dim, b.dim));
  if (a.n_layers != b.n_layers)
    throw Error(ErrorKind::shape, fmt::format("pairwise similarity: {} layers vs {}", a.n_layers, b.n_layers));
  if (a.codes.size() != a.n_samples * a.n_layers * a.dim || b.codes.size() != b.n_samples * b.n_layers * b.dim)
    throw Error(ErrorKind::shape, "pairwise similarity: code array does not match shape");
  if (!same && a.model_id != b.model_id && !cfg.force_cross_model)
    throw Error(ErrorKind::mismatch,
                fmt::format("pairwise similarity: model '{}' vs '{}' (pass force to override)", a.model_id,
                            b.model_id));
}

SimMatrix make_output(const VectorSet& a, const VectorSet& b, bool same, const SimConfig& cfg) {
  SimMatrix m;
  m.rows = a.n_samples;
  m.cols = b.n_samples;
  m.symmetric = same;
  m.aggregation = cfg.aggregation;
  m.row_hash = a.dataset_hash;
  m.col_hash = b.dataset_hash;
  m.row_model = a.model_id;
  m.col_model = b.model_id;
  m.provenance["row_set_digest"] = hex16(a.digest());
  m.provenance["col_set_digest"] = hex16(b.digest());
  m.provenance["layer_indices"] = a.layer_indices;
  m.codes.assign(m.rows * m.cols, 0);
  return m;
}

std::vector<std::int64_t> squared_norms(const VectorSet& v) {
  std::vector<std::int64_t> out(v.n_samples * v.n_layers);
  for (std::size_t s = 0; s < v.n_samples; ++s)
    for (std::size_t l = 0; l < v.n_layers; ++l) out[s * v.n_layers + l] = dot_i8(v.vec(s, l), v.vec(s, l));
  return out;
}

// Combines per-layer integer dots into one similarity code. Both the tiled
// kernel and the reference call this, so their outputs agree bit for bit.
std::int8_t combine(Aggregation agg, std::size_t layers, const std::int64_t* dots, const std::int64_t* na,
                    const std::int64_t* nb, const float* sa, const float* sb) {
  if (agg == Aggregation::layer_mean) {
    double sum = 0.0;
    std::size_t used = 0;
    for (std::size_t l = 0; l < layers; ++l) {
      if (na[l] == 0 || nb[l] == 0) continue;
      sum += static_cast<double>(dots[l]) /
             (std::sqrt(static_cast<double>(na[l])) * std::sqrt(static_cast<double>(nb[l])));
      ++used;
    }
    if (used == 0) return kUndefinedCode;
    return quantize_similarity(sum / static_cast<double>(used));
  }
  double dot = 0.0, qa = 0.0, qb = 0.0;
  for (std::size_t l = 0; l < layers; ++l) {
    const double fa = sa[l], fb = sb[l];
    dot += fa * fb * static_cast<double>(dots[l]);
    qa += fa * fa * static_cast<double>(na[l]);
    qb += fb * fb * static_cast<double>(nb[l]);
  }
  if (qa == 0.0 || qb == 0.0) return kUndefinedCode;
  return quantize_similarity(dot / (std::sqrt(qa) * std::sqrt(qb)));
}

bool any_defined(const std::int64_t* norms, std::size_t layers) {
  return std::any_of(norms, norms + layers, [](std::int64_t v) { return v != 0; });
}

SimMatrix tiled(const VectorSet& a, const VectorSet& b, bool same, const SimConfig& cfg) {
  check_inputs(a, b, same, cfg);
  SimMatrix m = make_output(a, b, same, cfg);
  const std::size_t L = a.n_layers;
  const std::size_t T = cfg.tile;
  const auto na = squared_norms(a);
  const auto nb = same ? na : squared_norms(b);

  const std::size_t row_tiles = (m.rows + T - 1) / T;
  const std::size_t col_tiles = (m.cols + T - 1) / T;
  std::vector<std::pair<std::size_t, std::size_t>> tiles;
  for (std::size_t ti = 0; ti < row_tiles; ++ti)
    for (std::size_t tj = same ? ti : 0; tj < col_tiles; ++tj) tiles.emplace_back(ti, tj);

  const int threads = cfg.threads > 0 ? cfg.threads : omp_get_max_threads();
  const auto n_tiles = static_cast<std::ptrdiff_t>(tiles.size());

#pragma omp parallel num_threads(threads)
  {
    // Per-layer integer Gram block of the current tile: [L][bi][bj].
    std::vector<std::int64_t> gram;
    std::vector<std::int64_t> dots(L);

#pragma omp for schedule(dynamic, 1)
    for (std::ptrdiff_t t = 0; t < n_tiles; ++t) {
      const auto [ti, tj] = tiles[static_cast<std::size_t>(t)];
      const std::size_t i0 = ti * T, i1 = std::min(m.rows, i0 + T);
      const std::size_t j0 = tj * T, j1 = std::min(m.cols, j0 + T);
      const std::size_t bi = i1 - i0, bj = j1 - j0;
      const bool diag_tile = same && ti == tj;
      gram.assign(L * bi * bj, 0);
      for (std::size_t l = 0; l < L; ++l) {
        std::int64_t* g = gram.data() + l * bi * bj;
        for (std::size_t i = i0; i < i1; ++i) {
          const auto va = a.vec(i, l);
          for (std::size_t j = diag_tile ? i : j0; j < j1; ++j) g[(i - i0) * bj + (j - j0)] = dot_i8(va, b.vec(j, l));
        }
      }
      for (std::size_t i = i0; i < i1; ++i) {
        for (std::size_t j = diag_tile ? i : j0; j < j1; ++j) {
          std::int8_t code;
          if (same && i == j) {
            code = any_defined(&na[i * L], L) ? std::int8_t{127} : kUndefinedCode;
          } else {
            for (std::size_t l = 0; l < L; ++l) dots[l] = gram[l * bi * bj + (i - i0) * bj + (j - j0)];
            code = combine(cfg.aggregation, L, dots.data(), &na[i * L], &nb[j * L], &a.scales[i * L],
                           &b.scales[j * L]);
          }
          m.codes[i * m.cols + j] = code;
          if (same) m.codes[j * m.cols + i] = code;
        }
      }
    }
  }
  return m;
}

}  // namespace

SimMatrix pairwise_similarity(const VectorSet& a, const SimConfig& cfg) { return tiled(a, a, true, cfg); }

SimMatrix pairwise_similarity(const VectorSet& a, const VectorSet& b, const SimConfig& cfg) {
  return tiled(a, b, false, cfg);
}

namespace reference {

SimMatrix pairwise_similarity(const VectorSet& a, const VectorSet* b_ptr, const SimConfig& cfg) {
  const bool same = b_ptr == nullptr;
  const VectorSet& b = same ? a : *b_ptr;
  check_inputs(a, b, same, cfg);
  SimMatrix m = make_output(a, b, same, cfg);
  const std::size_t L = a.n_layers;
  std::vector<std::int64_t> dots(L), na(L), nb(L);
  for (std::size_t i = 0; i < m.rows; ++i) {
    for (std::size_t j = 0; j < m.cols; ++j) {
      for (std::size_t l = 0; l < L; ++l) {
        dots[l] = dot_i8(a.vec(i, l), b.vec(j, l));
        na[l] = dot_i8(a.vec(i, l), a.vec(i, l));
        nb[l] = dot_i8(b.vec(j, l), b.vec(j, l));
      }
      if (same && i == j)
        m.codes[i * m.cols + j] = any_defined(na.data(), L) ? std::int8_t{127} : kUndefinedCode;
      else
        m.codes[i * m.cols + j] =
            combine(cfg.aggregation, L, dots.data(), na.data(), nb.data(), &a.scales[i * L], &b.scales[j * L]);
    }
  }
  return m;
}

}  // namespace reference

}  // namespace lingsim
