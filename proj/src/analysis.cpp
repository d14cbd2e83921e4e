#include "lingsim/analysis.hpp"

#include <omp.h>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <unordered_map>

#include <fmt/core.h>

#include "lingsim/common.hpp"
#include "lingsim/rng.hpp"
#include "lingsim/simkernel.hpp"

namespace lingsim {

std::size_t hist_bin(double x) {
  const double b = std::floor((x + 1.0) * (static_cast<double>(kHistBins) / 2.0));
  if (b < 0.0) return 0;
  return std::min(kHistBins - 1, static_cast<std::size_t>(b));
}

namespace {

// Per-code tallies; index = code + 127.
struct CodeCounts {
  std::array<std::uint64_t, 255> intra{};
  std::array<std::uint64_t, 255> inter{};
  std::uint64_t sentinel = 0;

  void merge(const CodeCounts& o) {
    for (std::size_t c = 0; c < 255; ++c) {
      intra[c] += o.intra[c];
      inter[c] += o.inter[c];
    }
    sentinel += o.sentinel;
  }
};

struct Moments {
  std::uint64_t count = 0;
  double mean = 0.0;
  double se = 0.0;
  std::vector<std::uint64_t> hist = std::vector<std::uint64_t>(kHistBins, 0);
};

Moments moments(const std::array<std::uint64_t, 255>& tally) {
  Moments m;
  std::int64_t sum = 0;
  long double sumsq = 0;
  for (std::size_t c = 0; c < 255; ++c) {
    const auto cnt = tally[c];
    if (cnt == 0) continue;
    const int code = static_cast<int>(c) - 127;
    m.count += cnt;
    sum += static_cast<std::int64_t>(code) * static_cast<std::int64_t>(cnt);
    sumsq += static_cast<long double>(code) * code * cnt;
    m.hist[hist_bin(dequantize_similarity(static_cast<std::int8_t>(code)))] += cnt;
  }
  if (m.count == 0) return m;
  const double n = static_cast<double>(m.count);
  m.mean = static_cast<double>(sum) / kCodeScale / n;
  if (m.count > 1) {
    const long double ms = sumsq / (static_cast<long double>(kCodeScale) * kCodeScale);
    const double var = static_cast<double>((ms - static_cast<long double>(n) * m.mean * m.mean) / (n - 1.0));
    m.se = std::sqrt(std::max(var, 0.0) / n);
  }
  return m;
}

// Dense class ids in first-appearance order.
std::vector<std::size_t> encode_labels(std::span<const std::string> labels, std::vector<std::string>& names) {
  std::unordered_map<std::string, std::size_t> index;
  std::vector<std::size_t> ids;
  ids.reserve(labels.size());
  for (const auto& l : labels) {
    auto [it, inserted] = index.emplace(l, names.size());
    if (inserted) names.push_back(l);
    ids.push_back(it->second);
  }
  return ids;
}

// Class ids under an explicit order; every sample's label must be listed and
// every listed label must own a sample.
std::vector<std::size_t> encode_labels(std::span<const std::string> labels, std::span<const std::string> order,
                                       std::vector<std::string>& names) {
  if (order.empty()) return encode_labels(labels, names);
  names.assign(order.begin(), order.end());
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t p = 0; p < names.size(); ++p)
    if (!index.emplace(names[p], p).second)
      throw Error(ErrorKind::invalid, fmt::format("label '{}' listed twice", names[p]));
  std::vector<std::size_t> ids;
  std::vector<bool> used(names.size(), false);
  for (const auto& l : labels) {
    auto it = index.find(l);
    if (it == index.end()) throw Error(ErrorKind::invalid, fmt::format("label '{}' missing from order", l));
    ids.push_back(it->second);
    used[it->second] = true;
  }
  for (std::size_t p = 0; p < names.size(); ++p)
    if (!used[p]) throw Error(ErrorKind::invalid, fmt::format("label '{}' has no samples", names[p]));
  return ids;
}

ClassStats finish_stats(const CodeCounts& counts, TaxonomyLevel level, bool exact, std::uint64_t seed) {
  const auto intra = moments(counts.intra);
  const auto inter = moments(counts.inter);
  if (intra.count == 0 && inter.count == 0)
    throw Error(ErrorKind::invalid, "class stats: every pair is undefined");
  if (inter.count == 0) throw Error(ErrorKind::invalid, "class stats: inter-class undefined (no defined cross-class pair)");
  if (intra.count == 0) throw Error(ErrorKind::invalid, "class stats: intra-class undefined (no defined same-class pair)");
  ClassStats s;
  s.level = level;
  s.intra_mean = intra.mean;
  s.inter_mean = inter.mean;
  s.gap = intra.mean - inter.mean;
  s.intra_se = intra.se;
  s.inter_se = inter.se;
  s.intra_hist = intra.hist;
  s.inter_hist = inter.hist;
  s.intra_count = intra.count;
  s.inter_count = inter.count;
  s.sentinel_pairs = counts.sentinel;
  s.exact = exact;
  s.seed = seed;
  return s;
}

void check_class_inputs(std::size_t rows, std::size_t cols, std::span<const std::string> labels,
                        const std::vector<std::string>& names, const std::vector<std::size_t>& ids) {
  if (rows != cols) throw Error(ErrorKind::shape, "class stats: matrix must be square");
  if (labels.size() != rows)
    throw Error(ErrorKind::shape, fmt::format("class stats: {} labels for {} samples", labels.size(), rows));
  if (names.size() < 2) throw Error(ErrorKind::invalid, "class stats: inter-class undefined (single class)");
  std::vector<std::size_t> sizes(names.size(), 0);
  for (auto id : ids) ++sizes[id];
  if (*std::max_element(sizes.begin(), sizes.end()) < 2)
    throw Error(ErrorKind::invalid, "class stats: intra-class undefined (every class is a singleton)");
}

// One pass over i < j. `fill(i, buf)` provides row i.
template <class RowFill>
CodeCounts exact_counts(std::size_t n, const std::vector<std::size_t>& ids, RowFill fill, int threads) {
  CodeCounts total;
  const auto rows = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel num_threads(threads > 0 ? threads : omp_get_max_threads())
  {
    CodeCounts local;
    std::vector<std::int8_t> buf(n);
#pragma omp for schedule(dynamic, 16)
    for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
      const auto i = static_cast<std::size_t>(ii);
      const std::int8_t* row = fill(i, buf);
      for (std::size_t j = i + 1; j < n; ++j) {
        const auto c = row[j];
        if (c == kUndefinedCode) {
          ++local.sentinel;
          continue;
        }
        auto& tally = ids[i] == ids[j] ? local.intra : local.inter;
        ++tally[static_cast<std::size_t>(c + 127)];
      }
    }
    // Integer tallies: merge order does not affect the result.
#pragma omp critical
    total.merge(local);
  }
  return total;
}

template <class CellFn>
CodeCounts sampled_counts(std::size_t n, const std::vector<std::size_t>& ids, CellFn cell, std::size_t want,
                          std::uint64_t seed) {
  if (want == 0) throw Error(ErrorKind::invalid, "class stats: sample count must be positive");
  CodeCounts counts;
  SplitMix64 rng(seed);
  std::size_t got = 0;
  const std::size_t max_draws = want * 1000 + 1000;
  for (std::size_t draw = 0; got < want && draw < max_draws; ++draw) {
    auto i = static_cast<std::size_t>(rng.bounded(n));
    auto j = static_cast<std::size_t>(rng.bounded(n));
    if (i == j) continue;
    if (i > j) std::swap(i, j);
    const auto c = cell(i, j);
    if (c == kUndefinedCode) continue;
    auto& tally = ids[i] == ids[j] ? counts.intra : counts.inter;
    ++tally[static_cast<std::size_t>(c + 127)];
    ++got;
  }
  if (got < want)
    throw Error(ErrorKind::invalid, fmt::format("class stats: only {} of {} defined pairs drawn", got, want));
  return counts;
}

}  // namespace

ClassStats class_similarity_stats(const SimMatrix& sim, std::span<const std::string> labels, TaxonomyLevel level,
                                  const ClassStatsOptions& opts) {
  std::vector<std::string> names;
  const auto ids = encode_labels(labels, names);
  check_class_inputs(sim.rows, sim.cols, labels, names, ids);
  if (sim.codes.size() != sim.rows * sim.cols) throw Error(ErrorKind::shape, "class stats: code array size");
  if (opts.sample_pairs) {
    auto counts = sampled_counts(
        sim.rows, ids, [&](std::size_t i, std::size_t j) { return sim.at(i, j); }, *opts.sample_pairs, opts.seed);
    return finish_stats(counts, level, false, opts.seed);
  }
  auto counts = exact_counts(
      sim.rows, ids, [&](std::size_t i, std::vector<std::int8_t>&) { return sim.row(i).data(); }, opts.threads);
  return finish_stats(counts, level, true, 0);
}

ClassStats class_similarity_stats(const SimMatrixReader& sim, std::span<const std::string> labels,
                                  TaxonomyLevel level, const ClassStatsOptions& opts) {
  const auto& info = sim.info();
  std::vector<std::string> names;
  const auto ids = encode_labels(labels, names);
  check_class_inputs(info.rows, info.cols, labels, names, ids);
  if (opts.sample_pairs) {
    auto counts = sampled_counts(
        info.rows, ids, [&](std::size_t i, std::size_t j) { return sim.read_cell(i, j); }, *opts.sample_pairs,
        opts.seed);
    return finish_stats(counts, level, false, opts.seed);
  }
  auto counts = exact_counts(
      info.rows, ids,
      [&](std::size_t i, std::vector<std::int8_t>& buf) {
        sim.read_row(i, buf);
        return static_cast<const std::int8_t*>(buf.data());
      },
      opts.threads);
  return finish_stats(counts, level, true, 0);
}

// ---------------------------------------------------------------------------

namespace {

BlockMeans block_means(const SimMatrix& sim, const std::vector<std::size_t>& row_ids,
                       const std::vector<std::size_t>& col_ids, std::vector<std::string> row_names,
                       std::vector<std::string> col_names, bool skip_self) {
  const std::size_t P = row_names.size(), Q = col_names.size();
  std::vector<std::int64_t> sums(P * Q, 0);
  std::vector<std::uint64_t> counts(P * Q, 0);
  for (std::size_t i = 0; i < sim.rows; ++i) {
    const auto row = sim.row(i);
    const std::size_t p = row_ids[i];
    for (std::size_t j = 0; j < sim.cols; ++j) {
      if (skip_self && i == j) continue;
      const auto c = row[j];
      if (c == kUndefinedCode) continue;
      const std::size_t cell = p * Q + col_ids[j];
      sums[cell] += c;
      ++counts[cell];
    }
  }
  BlockMeans out;
  out.row_labels = std::move(row_names);
  out.col_labels = std::move(col_names);
  out.counts = std::move(counts);
  out.means.resize(P * Q);
  for (std::size_t k = 0; k < P * Q; ++k)
    out.means[k] = out.counts[k] == 0 ? std::numeric_limits<double>::quiet_NaN()
                                      : static_cast<double>(sums[k]) / kCodeScale / static_cast<double>(out.counts[k]);
  return out;
}

}  // namespace

PhenomenonMatrix phenomenon_matrix(const SimMatrix& sim, std::span<const std::string> labels,
                                   std::span<const std::string> order) {
  if (sim.rows != sim.cols) throw Error(ErrorKind::shape, "phenomenon matrix: matrix must be square");
  if (labels.size() != sim.rows)
    throw Error(ErrorKind::shape, fmt::format("phenomenon matrix: {} labels for {} samples", labels.size(), sim.rows));
  std::vector<std::string> names;
  const auto ids = encode_labels(labels, order, names);
  return block_means(sim, ids, ids, names, names, true);
}

TermTable cross_lingual_term_table(const SimMatrix& sim, std::span<const std::string> row_terms,
                                   std::span<const std::string> col_terms, std::span<const std::string> row_order,
                                   std::span<const std::string> col_order) {
  if (row_terms.size() != sim.rows || col_terms.size() != sim.cols)
    throw Error(ErrorKind::shape, fmt::format("term table: labels {}x{} for a {}x{} matrix", row_terms.size(),
                                              col_terms.size(), sim.rows, sim.cols));
  std::vector<std::string> rn, cn;
  const auto rid = encode_labels(row_terms, row_order, rn);
  const auto cid = encode_labels(col_terms, col_order, cn);
  return block_means(sim, rid, cid, rn, cn, false);
}

// ---------------------------------------------------------------------------

std::string SimBucket::label() const {
  auto bound = [](double v) { return std::isinf(v) ? std::string(v < 0 ? "-inf" : "inf") : fmt::format("{}", v); };
  return fmt::format("({}, {}]", bound(lo), bound(hi));
}

std::vector<SimBucket> default_buckets() {
  std::vector<SimBucket> out;
  for (int k = 9; k >= 0; --k) out.push_back({k / 10.0, (k + 1) / 10.0});
  out.push_back({-std::numeric_limits<double>::infinity(), 0.0});
  return out;
}

std::vector<SimBucket> parse_buckets(std::string_view spec) {
  auto number = [&](std::string_view s) {
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
      throw Error(ErrorKind::invalid, fmt::format("bad bucket bound '{}'", s));
    return v;
  };
  std::vector<SimBucket> out;
  while (!spec.empty()) {
    const auto comma = spec.find(',');
    const auto item = spec.substr(0, comma);
    const auto colon = item.find(':');
    if (colon == std::string_view::npos) throw Error(ErrorKind::invalid, fmt::format("bad bucket '{}'", item));
    const double lo = number(item.substr(0, colon)), hi = number(item.substr(colon + 1));
    if (!(lo < hi)) throw Error(ErrorKind::invalid, fmt::format("bucket '{}' is empty (lo must be below hi)", item));
    out.push_back({lo, hi});
    spec = comma == std::string_view::npos ? std::string_view{} : spec.substr(comma + 1);
  }
  return out;
}

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(ErrorKind::shape, "pearson: length mismatch");
  if (x.size() < 2) return std::nullopt;
  double mx = 0.0, my = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) mx += x[k], my += y[k];
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(y.size());
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double dx = x[k] - mx, dy = y[k] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

JointSample joint_distribution_sample(const SimMatrix& sim, const VectorSet& semantic,
                                      std::span<const SimBucket> buckets, std::size_t per_bucket,
                                      std::uint64_t seed) {
  if (buckets.empty()) throw Error(ErrorKind::invalid, "joint: empty bucket list");
  if (per_bucket == 0) throw Error(ErrorKind::invalid, "joint: per_bucket must be positive");
  for (std::size_t b = 0; b < buckets.size(); ++b) {
    if (!(buckets[b].lo < buckets[b].hi))
      throw Error(ErrorKind::invalid, fmt::format("joint: empty bucket {}", buckets[b].label()));
    for (std::size_t c = 0; c < b; ++c)
      if (buckets[b].lo < buckets[c].hi && buckets[c].lo < buckets[b].hi)
        throw Error(ErrorKind::invalid,
                    fmt::format("joint: buckets {} and {} overlap", buckets[c].label(), buckets[b].label()));
  }
  if (sim.rows != sim.cols) throw Error(ErrorKind::shape, "joint: similarity matrix must be square");
  if (semantic.n_layers != 1)
    throw Error(ErrorKind::shape, fmt::format("joint: embeddings have {} layers, expected 1", semantic.n_layers));
  if (semantic.n_samples != sim.rows)
    throw Error(ErrorKind::shape,
                fmt::format("joint: {} embeddings for {} samples", semantic.n_samples, sim.rows));
  if (semantic.dataset_hash != sim.row_hash)
    throw Error(ErrorKind::mismatch, fmt::format("joint: embeddings hash {} vs matrix {}",
                                                 hex16(semantic.dataset_hash), hex16(sim.row_hash)));

  const std::size_t n = sim.rows, B = buckets.size();
  // Code -> bucket lookup; every pair's bucket depends only on its code.
  std::array<int, 256> bucket_of{};
  for (int c = -128; c <= 127; ++c) {
    int which = -1;
    if (c != kUndefinedCode) {
      const double x = dequantize_similarity(static_cast<std::int8_t>(c));
      for (std::size_t b = 0; b < B && which < 0; ++b)
        if (buckets[b].contains(x)) which = static_cast<int>(b);
    }
    bucket_of[static_cast<std::size_t>(c + 128)] = which;
  }
  std::vector<bool> has_embedding(n);
  for (std::size_t i = 0; i < n; ++i) has_embedding[i] = semantic.scale(i, 0) != 0.0f;

  struct Reservoir {
    std::vector<std::pair<std::size_t, std::size_t>> items;
    std::uint64_t seen = 0;
    SplitMix64 rng{0};
  };
  std::vector<Reservoir> res(B);
  for (std::size_t b = 0; b < B; ++b) res[b].rng = SplitMix64(seed ^ (0x9e3779b97f4a7c15ULL * (b + 1)));

  // Algorithm R over pairs i < j in row-major order.
  for (std::size_t i = 0; i < n; ++i) {
    if (!has_embedding[i]) continue;
    const auto row = sim.row(i);
    for (std::size_t j = i + 1; j < n; ++j) {
      if (!has_embedding[j]) continue;
      const int b = bucket_of[static_cast<std::size_t>(row[j] + 128)];
      if (b < 0) continue;
      auto& r = res[static_cast<std::size_t>(b)];
      ++r.seen;
      if (r.items.size() < per_bucket) {
        r.items.emplace_back(i, j);
      } else {
        const auto slot = r.rng.bounded(r.seen);
        if (slot < per_bucket) r.items[slot] = {i, j};
      }
    }
  }

  JointSample out;
  out.buckets.assign(buckets.begin(), buckets.end());
  out.per_bucket = per_bucket;
  out.seed = seed;
  std::vector<double> xs, ys;
  for (std::size_t b = 0; b < B; ++b) {
    auto& items = res[b].items;
    std::sort(items.begin(), items.end());
    out.eligible.push_back(res[b].seen);
    out.shortfall.push_back(per_bucket - items.size());
    for (auto [i, j] : items) {
      JointRecord rec;
      rec.i = i;
      rec.j = j;
      rec.bucket = b;
      rec.linguistic_sim = dequantize_similarity(sim.at(i, j));
      rec.semantic_sim = cosine_layer(semantic.vec(i, 0), semantic.vec(j, 0)).value;
      xs.push_back(rec.linguistic_sim);
      ys.push_back(rec.semantic_sim);
      out.records.push_back(rec);
    }
  }
  out.pearson_r = pearson(xs, ys);
  return out;
}

std::string_view to_string(Quadrant q) {
  switch (q) {
    case Quadrant::HH: return "HH";
    case Quadrant::HL: return "HL";
    case Quadrant::LH: return "LH";
    case Quadrant::LL: return "LL";
  }
  return "?";
}

std::vector<QuadrantExample> quadrant_examples(const JointSample& joint, const Dataset& pairs, double high,
                                               double low, std::size_t per_quadrant) {
  if (!(low >= 0.0 && low < high && high <= 1.0))
    throw Error(ErrorKind::invalid, fmt::format("quadrants: need 0 <= low < high <= 1, got {} / {}", low, high));
  std::array<std::vector<QuadrantExample>, 4> buckets;
  for (const auto& r : joint.records) {
    const bool lh = r.linguistic_sim > high, ll = r.linguistic_sim < low;
    const bool sh = r.semantic_sim > high, sl = r.semantic_sim < low;
    std::optional<Quadrant> q;
    if (lh && sh) q = Quadrant::HH;
    else if (lh && sl) q = Quadrant::HL;
    else if (ll && sh) q = Quadrant::LH;
    else if (ll && sl) q = Quadrant::LL;
    if (!q) continue;
    auto& list = buckets[static_cast<std::size_t>(*q)];
    if (list.size() >= per_quadrant) continue;
    if (r.i >= pairs.size() || r.j >= pairs.size())
      throw Error(ErrorKind::shape, fmt::format("quadrants: record ({}, {}) outside dataset of {}", r.i, r.j,
                                                pairs.size()));
    list.push_back({*q, r, pairs.pairs[r.i], pairs.pairs[r.j]});
  }
  std::vector<QuadrantExample> out;
  for (auto& list : buckets) out.insert(out.end(), list.begin(), list.end());
  return out;
}

}  // namespace lingsim
