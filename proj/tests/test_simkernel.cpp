#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fixtures.hpp"
#include "lingsim/simkernel.hpp"

using namespace lingsim;

namespace {

constexpr double kBound = 1.0 / 127 + 1e-6;

void check_against_oracle(const SimMatrix& m, const VectorSet& a, const VectorSet& b, bool concat) {
  double worst = 0;
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t j = 0; j < m.cols; ++j) {
      const double want = fixtures::oracle_sim(a, i, b, j, concat);
      if (std::isnan(want)) {
        CHECK(m.at(i, j) == kUndefinedCode);
        continue;
      }
      worst = std::max(worst, std::fabs(dequantize_similarity(m.at(i, j)) - want));
    }
  CHECK(worst <= kBound);
}

}  // namespace

TEST_CASE("cosine examples") {
  const std::vector<std::int8_t> a{3, -4}, x{1, 0}, y{0, 1}, p{127, 0}, q{90, 90}, z{0, 0};
  CHECK(cosine_layer(a, a).value == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(cosine_layer(x, y).value == 0.0);
  CHECK(cosine_layer(p, q).value == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
  CHECK_FALSE(cosine_layer(p, z).defined);
  CHECK_THROWS_AS(cosine_layer(a, std::vector<std::int8_t>{1}), Error);
  CHECK(dot_i8(std::vector<std::int8_t>(100000, -127), std::vector<std::int8_t>(100000, -127)) ==
        100000LL * 127 * 127);
}

TEST_CASE("square similarity matches the float64 oracle") {
  const auto vs = fixtures::random_set(120, 3, 48, 21);
  for (auto agg : {Aggregation::layer_mean, Aggregation::concat}) {
    SimConfig cfg;
    cfg.aggregation = agg;
    cfg.tile = 32;
    const auto m = pairwise_similarity(vs, cfg);
    CHECK(m.symmetric);
    CHECK(m.row_hash == vs.dataset_hash);
    for (std::size_t i = 0; i < m.rows; ++i) CHECK(m.at(i, i) == 127);
    check_against_oracle(m, vs, vs, agg == Aggregation::concat);
  }
}

TEST_CASE("rectangular similarity") {
  const auto a = fixtures::random_set(30, 2, 40, 1, "m", 0xa);
  const auto b = fixtures::random_set(45, 2, 40, 2, "m", 0xb);
  SimConfig cfg;
  cfg.tile = 16;
  const auto m = pairwise_similarity(a, b, cfg);
  CHECK(m.rows == 30);
  CHECK(m.cols == 45);
  CHECK_FALSE(m.symmetric);
  CHECK(m.row_hash == 0xa);
  CHECK(m.col_hash == 0xb);
  check_against_oracle(m, a, b, false);

  const auto other = fixtures::random_set(45, 2, 40, 2, "other", 0xb);
  CHECK_THROWS_AS(pairwise_similarity(a, other, cfg), Error);
  cfg.force_cross_model = true;
  CHECK_NOTHROW(pairwise_similarity(a, other, cfg));
  CHECK_THROWS_AS(pairwise_similarity(a, fixtures::random_set(5, 2, 41, 3), cfg), Error);
  CHECK_THROWS_AS(pairwise_similarity(a, fixtures::random_set(5, 3, 40, 3), cfg), Error);
}

TEST_CASE("tiled kernel equals the serial reference byte for byte") {
  const auto vs = fixtures::random_set(97, 2, 64, 8);
  for (auto agg : {Aggregation::layer_mean, Aggregation::concat}) {
    SimConfig cfg;
    cfg.aggregation = agg;
    const auto ref = reference::pairwise_similarity(vs, nullptr, cfg);
    for (std::size_t tile : {1, 7, 32, 256}) {
      for (int threads : {1, 2, 8}) {
        cfg.tile = tile;
        cfg.threads = threads;
        CAPTURE(tile);
        CAPTURE(threads);
        CHECK(pairwise_similarity(vs, cfg) == ref);
      }
    }
  }
  const auto b = fixtures::random_set(13, 2, 64, 9);
  SimConfig cfg;
  cfg.tile = 5;
  cfg.threads = 3;
  CHECK(pairwise_similarity(vs, b, cfg) == reference::pairwise_similarity(vs, &b, cfg));
}

TEST_CASE("zero vectors produce sentinels") {
  auto v = fixtures::gaussian(4 * 2 * 8, 3);
  // sample 1: both layers zero; sample 2: layer 0 zero only
  std::fill(v.begin() + 16, v.begin() + 32, 0.0f);
  std::fill(v.begin() + 32, v.begin() + 40, 0.0f);
  const auto vs = make_vector_set("m", 1, {1, 2}, 4, 8, v);
  SimConfig cfg;
  const auto m = pairwise_similarity(vs, cfg);
  for (std::size_t j = 0; j < 4; ++j) {
    CHECK(m.at(1, j) == kUndefinedCode);
    CHECK(m.at(j, 1) == kUndefinedCode);
  }
  CHECK(m.at(2, 2) == 127);
  // layer_mean of sample 2 uses layer 1 only
  const double want = fixtures::cosine(fixtures::dequant(vs, 0, 1), fixtures::dequant(vs, 2, 1));
  CHECK(std::fabs(dequantize_similarity(m.at(0, 2)) - want) <= kBound);
  check_against_oracle(m, vs, vs, false);
  cfg.aggregation = Aggregation::concat;
  check_against_oracle(pairwise_similarity(vs, cfg), vs, vs, true);
}

TEST_CASE("positive rescaling leaves a row within one code") {
  const std::size_t n = 40, L = 2, d = 32;
  auto v = fixtures::gaussian(n * L * d, 77);
  const auto base = pairwise_similarity(make_vector_set("m", 1, {1, 2}, n, d, v), {});
  for (std::size_t k = 5 * L * d; k < 6 * L * d; ++k) v[k] *= 37.5f;
  const auto scaled = pairwise_similarity(make_vector_set("m", 1, {1, 2}, n, d, v), {});
  for (std::size_t j = 0; j < n; ++j) CHECK(std::abs(base.at(5, j) - scaled.at(5, j)) <= 1);
}

TEST_CASE("provenance records inputs but not scheduling") {
  const auto vs = fixtures::random_set(10, 2, 8, 4);
  SimConfig a, b;
  b.threads = 2;
  b.tile = 3;
  const auto x = pairwise_similarity(vs, a), y = pairwise_similarity(vs, b);
  CHECK(x.provenance == y.provenance);
  CHECK(x.provenance.at("row_set_digest") == hex16(vs.digest()));
}
