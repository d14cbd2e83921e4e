// Shared generators and brute-force oracles for the test binaries.
#pragma once

#include <unistd.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "lingsim/common.hpp"
#include "lingsim/tensorstore.hpp"

namespace fixtures {

// (total layers, sampled layers) for the 104 evaluated checkpoints; 16
// distinct depths occur.
inline const std::vector<std::pair<int, std::vector<int>>> kLayerTable = {
    {7, {1, 2, 3, 4, 5}},        {13, {2, 4, 6, 8, 10}},      {17, {2, 5, 8, 11, 14}},
    {19, {3, 6, 9, 12, 15}},     {23, {3, 7, 11, 15, 19}},    {24, {4, 8, 12, 16, 20}},
    {25, {4, 8, 12, 16, 20}},    {27, {4, 9, 13, 18, 22}},    {29, {4, 9, 14, 19, 24}},
    {31, {5, 10, 15, 20, 25}},   {33, {5, 11, 16, 22, 27}},   {37, {6, 12, 18, 24, 30}},
    {41, {6, 13, 20, 27, 34}},   {43, {7, 14, 21, 28, 35}},   {45, {7, 15, 22, 30, 37}},
    {49, {8, 16, 24, 32, 40}},
};

inline std::vector<float> gaussian(std::size_t count, std::uint64_t seed, float sigma = 1.0f) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> g(0.0f, sigma);
  std::vector<float> v(count);
  for (auto& x : v) x = g(rng);
  return v;
}

inline std::vector<int> layer_ids(std::size_t layers) {
  std::vector<int> ids(layers);
  for (std::size_t l = 0; l < layers; ++l) ids[l] = static_cast<int>(l + 1);
  return ids;
}

inline lingsim::VectorSet random_set(std::size_t n, std::size_t layers, std::size_t dim, std::uint64_t seed,
                                     std::string model = "model", std::uint64_t hash = 0x1234) {
  return lingsim::make_vector_set(std::move(model), hash, layer_ids(layers), n, dim, gaussian(n * layers * dim, seed));
}

// Dequantized float64 copy of one (sample, layer) vector.
inline std::vector<double> dequant(const lingsim::VectorSet& vs, std::size_t s, std::size_t l) {
  std::vector<double> out;
  const double sc = vs.scale(s, l);
  for (auto c : vs.vec(s, l)) out.push_back(sc * c);
  return out;
}

// Float64 cosine; nullopt-like NaN when either norm is zero.
inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0, na = 0, nb = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    d += a[k] * b[k];
    na += a[k] * a[k];
    nb += b[k] * b[k];
  }
  if (na == 0 || nb == 0) return std::nan("");
  return d / std::sqrt(na * nb);
}

// Similarity of sample i of `a` and sample j of `b` computed directly from
// dequantized floats. NaN when undefined.
inline double oracle_sim(const lingsim::VectorSet& a, std::size_t i, const lingsim::VectorSet& b, std::size_t j,
                         bool concat) {
  if (concat) {
    std::vector<double> x, y;
    for (std::size_t l = 0; l < a.n_layers; ++l) {
      auto u = dequant(a, i, l), v = dequant(b, j, l);
      x.insert(x.end(), u.begin(), u.end());
      y.insert(y.end(), v.begin(), v.end());
    }
    return cosine(x, y);
  }
  double sum = 0;
  int used = 0;
  for (std::size_t l = 0; l < a.n_layers; ++l) {
    const double c = cosine(dequant(a, i, l), dequant(b, j, l));
    if (std::isnan(c)) continue;
    sum += c;
    ++used;
  }
  return used ? sum / used : std::nan("");
}

// Symmetric matrix from real similarities; NaN becomes the sentinel. Diagonal
// is forced to 127.
inline lingsim::SimMatrix sim_from(std::size_t n, const std::vector<double>& values, std::uint64_t hash = 0x77,
                                   std::string model = "m") {
  lingsim::SimMatrix m;
  m.rows = m.cols = n;
  m.symmetric = true;
  m.row_hash = m.col_hash = hash;
  m.row_model = m.col_model = std::move(model);
  m.codes.resize(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double v = values[i * n + j];
      m.codes[i * n + j] = i == j ? std::int8_t{127}
                           : std::isnan(v) ? lingsim::kUndefinedCode
                                           : lingsim::quantize_similarity(v);
    }
  return m;
}

// Three nested levels: 2 fields x 3 terms x 4 phenomena x `per` samples. Each
// vector is the sum of its field, term and phenomenon centroids plus noise,
// all with unit variance per component.
struct Nested {
  lingsim::VectorSet set;
  std::vector<std::string> phenomenon, term, field;
};

inline Nested nested_clusters(std::size_t per, std::size_t dim, std::uint64_t seed) {
  const std::size_t layers = 2, F = 2, T = 3, P = 4;
  const std::size_t n = F * T * P * per;
  auto centroids = [&](std::size_t count, std::uint64_t s) { return gaussian(count * layers * dim, s); };
  const auto cf = centroids(F, seed + 1), ct = centroids(F * T, seed + 2), cp = centroids(F * T * P, seed + 3);
  const auto noise = gaussian(n * layers * dim, seed + 4);
  Nested out;
  std::vector<float> v(n * layers * dim);
  std::size_t s = 0;
  for (std::size_t f = 0; f < F; ++f)
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t p = 0; p < P; ++p)
        for (std::size_t k = 0; k < per; ++k, ++s) {
          const std::size_t ti = f * T + t, pi = ti * P + p;
          out.field.push_back("f" + std::to_string(f));
          out.term.push_back("t" + std::to_string(ti));
          out.phenomenon.push_back("p" + std::to_string(pi));
          for (std::size_t x = 0; x < layers * dim; ++x)
            v[s * layers * dim + x] = cf[f * layers * dim + x] + ct[ti * layers * dim + x] +
                                      cp[pi * layers * dim + x] + noise[s * layers * dim + x];
        }
  out.set = lingsim::make_vector_set("nested", 0xabc, layer_ids(layers), n, dim, v);
  return out;
}

// Removes itself on destruction.
class TempDir {
 public:
  TempDir() {
    path_ = std::filesystem::temp_directory_path() /
            ("lingsim-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter()++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }
  const std::filesystem::path& path() const { return path_; }

 private:
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::filesystem::path path_;
};

}  // namespace fixtures
