#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <sstream>

#include "fixtures.hpp"
#include "lingsim/analysis.hpp"
#include "lingsim/rng.hpp"
#include "lingsim/simkernel.hpp"

using namespace lingsim;

namespace {

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

SimMatrix hand_4x4() {
  // classes {0, 1} and {2, 3}
  std::vector<double> v(16, 0.2);
  v[0 * 4 + 1] = v[1 * 4 + 0] = 0.8;
  v[2 * 4 + 3] = v[3 * 4 + 2] = 0.8;
  return fixtures::sim_from(4, v);
}

Dataset tiny_dataset(std::size_t n) {
  Dataset d;
  for (std::size_t i = 0; i < n; ++i) {
    MinimalPair p;
    p.pair_id = "p" + std::to_string(i);
    p.language = "en";
    p.phenomenon_uid = "u";
    p.sentence_good = "good " + std::to_string(i);
    p.sentence_bad = "bad " + std::to_string(i);
    d.pairs.push_back(p);
  }
  d.taxonomy.add("u", {"u", "t", "f"});
  d.content_hash = content_hash(d.pairs);
  return d;
}

// Unit vectors at multiples of 90 degrees, so every cosine is -1, 0 or 1.
VectorSet compass(std::size_t n, std::uint64_t hash) {
  std::vector<float> v;
  for (std::size_t i = 0; i < n; ++i) {
    const int q = static_cast<int>((i * 7) % 4);
    v.push_back(q == 0 ? 1.f : q == 2 ? -1.f : 0.f);
    v.push_back(q == 1 ? 1.f : q == 3 ? -1.f : 0.f);
  }
  return make_vector_set("emb", hash, {0}, n, 2, v);
}

}  // namespace

TEST_CASE("histogram bins") {
  CHECK(hist_bin(-1.0) == 0);
  CHECK(hist_bin(1.0) == 199);
  CHECK(hist_bin(0.0) == 100);
  CHECK(hist_bin(-0.995) == 0);
  CHECK(hist_bin(0.004) == 100);
}

TEST_CASE("hand-built two-class matrix") {
  const auto m = hand_4x4();
  const std::vector<std::string> labels{"a", "a", "b", "b"};
  const auto s = class_similarity_stats(m, labels, TaxonomyLevel::phenomenon);
  CHECK(s.intra_mean == doctest::Approx(0.8).epsilon(0.5 / 127));
  CHECK(s.inter_mean == doctest::Approx(0.2).epsilon(0.5 / 127));
  CHECK(s.gap == doctest::Approx(0.6).epsilon(1.0 / 127));
  CHECK(s.intra_mean == 102.0 / 127);
  CHECK(s.inter_mean == 25.0 / 127);
  CHECK(s.intra_count == 2);
  CHECK(s.inter_count == 4);
  CHECK(std::accumulate(s.intra_hist.begin(), s.intra_hist.end(), std::uint64_t{0}) == 2);
  CHECK(std::accumulate(s.inter_hist.begin(), s.inter_hist.end(), std::uint64_t{0}) == 4);
  CHECK(s.exact);
}

TEST_CASE("class statistics error paths") {
  const auto m = hand_4x4();
  const std::vector<std::string> same(4, "a");
  CHECK(error_of([&] { class_similarity_stats(m, same, TaxonomyLevel::term); }).find("inter-class undefined") !=
        std::string::npos);
  const std::vector<std::string> three{"a", "b", "c"};
  CHECK_THROWS_AS(class_similarity_stats(m, three, TaxonomyLevel::term), Error);
  auto dead = m;
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      if (i != j) dead.codes[i * 4 + j] = kUndefinedCode;
  const std::vector<std::string> labels{"a", "a", "b", "b"};
  CHECK(error_of([&] { class_similarity_stats(dead, labels, TaxonomyLevel::term); }).find("undefined") !=
        std::string::npos);
}

TEST_CASE("sentinels are counted and excluded") {
  auto m = hand_4x4();
  m.codes[0 * 4 + 2] = m.codes[2 * 4 + 0] = kUndefinedCode;
  const std::vector<std::string> labels{"a", "a", "b", "b"};
  const auto s = class_similarity_stats(m, labels, TaxonomyLevel::phenomenon);
  CHECK(s.sentinel_pairs == 1);
  CHECK(s.inter_count == 3);
}

TEST_CASE("nested clusters: gap shrinks at each coarser level") {
  const auto nc = fixtures::nested_clusters(25, 128, 1);
  const auto m = pairwise_similarity(nc.set, {});
  const auto g1 = class_similarity_stats(m, nc.phenomenon, TaxonomyLevel::phenomenon).gap;
  const auto g2 = class_similarity_stats(m, nc.term, TaxonomyLevel::term).gap;
  const auto g3 = class_similarity_stats(m, nc.field, TaxonomyLevel::field).gap;
  CHECK(g1 > g2);
  CHECK(g2 > g3);
  CHECK(g3 > 0);
}

TEST_CASE("exact and streamed statistics agree; threads do not matter") {
  const auto nc = fixtures::nested_clusters(10, 32, 2);
  const auto m = pairwise_similarity(nc.set, {});
  std::ostringstream out;
  write_sim_matrix(m, out);
  const SimMatrixReader r(memory_source(out.str()));
  ClassStatsOptions one, many;
  one.threads = 1;
  many.threads = 8;
  const auto a = class_similarity_stats(m, nc.term, TaxonomyLevel::term, one);
  const auto b = class_similarity_stats(r, nc.term, TaxonomyLevel::term, many);
  CHECK(a.intra_mean == b.intra_mean);
  CHECK(a.inter_mean == b.inter_mean);
  CHECK(a.intra_hist == b.intra_hist);
  CHECK(a.inter_se == b.inter_se);
}

TEST_CASE("subsampled estimate lies within 3 standard errors of the exact value") {
  const auto nc = fixtures::nested_clusters(21, 32, 3);  // 504 samples
  const auto m = pairwise_similarity(nc.set, {});
  const auto exact = class_similarity_stats(m, nc.term, TaxonomyLevel::term);
  ClassStatsOptions o;
  o.sample_pairs = 20000;
  o.seed = 11;
  const auto est = class_similarity_stats(m, nc.term, TaxonomyLevel::term, o);
  CHECK_FALSE(est.exact);
  CHECK(est.intra_count + est.inter_count == 20000);
  CHECK(std::fabs(est.intra_mean - exact.intra_mean) <= 3 * est.intra_se);
  CHECK(std::fabs(est.inter_mean - exact.inter_mean) <= 3 * est.inter_se);
  const auto again = class_similarity_stats(m, nc.term, TaxonomyLevel::term, o);
  CHECK(again.intra_mean == est.intra_mean);
  CHECK(again.inter_hist == est.inter_hist);
}

TEST_CASE("phenomenon matrix equals a brute-force oracle") {
  const auto nc = fixtures::nested_clusters(8, 16, 4);  // 192 samples
  auto m = pairwise_similarity(nc.set, {});
  m.codes[3 * m.cols + 50] = m.codes[50 * m.cols + 3] = kUndefinedCode;
  const auto pm = phenomenon_matrix(m, nc.phenomenon);
  const std::size_t P = pm.row_labels.size();
  REQUIRE(P == 24);
  for (std::size_t p = 0; p < P; ++p)
    for (std::size_t q = 0; q < P; ++q) {
      std::int64_t sum = 0;
      std::uint64_t count = 0;
      for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = 0; j < m.cols; ++j)
          if (i != j && nc.phenomenon[i] == pm.row_labels[p] && nc.phenomenon[j] == pm.col_labels[q] &&
              m.at(i, j) != kUndefinedCode) {
            sum += m.at(i, j);
            ++count;
          }
      CHECK(pm.count(p, q) == count);
      CHECK(pm.at(p, q) == static_cast<double>(sum) / 127 / static_cast<double>(count));
      CHECK(pm.at(p, q) == pm.at(q, p));
    }
}

TEST_CASE("phenomenon matrix small cases") {
  SUBCASE("2 x 2 hand computation") {
    std::vector<double> v{1, 0.5, 0.1, 0.3, 0.5, 1, 0.2, 0.4, 0.1, 0.2, 1, 0.7, 0.3, 0.4, 0.7, 1};
    const auto m = fixtures::sim_from(4, v);
    const std::vector<std::string> labels{"x", "x", "y", "y"};
    const auto pm = phenomenon_matrix(m, labels);
    CHECK(pm.at(0, 0) == doctest::Approx(0.5).epsilon(0.5 / 127));
    CHECK(pm.at(1, 1) == doctest::Approx(0.7).epsilon(0.5 / 127));
    const double cross = (13.0 + 38.0 + 25.0 + 51.0) / 4 / 127;  // codes of 0.1, 0.3, 0.2, 0.4
    CHECK(pm.at(0, 1) == doctest::Approx(cross).epsilon(1e-15));
  }
  SUBCASE("duplicated rows give a diagonal of 1") {
    std::vector<float> v(6 * 8);
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t k = 0; k < 8; ++k) v[i * 8 + k] = static_cast<float>((i / 3) == 0 ? k + 1 : 8.0 - k);
    const auto m = pairwise_similarity(make_vector_set("m", 1, {1}, 6, 8, v), {});
    const std::vector<std::string> labels{"a", "a", "a", "b", "b", "b"};
    const auto pm = phenomenon_matrix(m, labels);
    CHECK(pm.at(0, 0) == doctest::Approx(1.0).epsilon(1.0 / 127));
    CHECK(pm.at(1, 1) == doctest::Approx(1.0).epsilon(1.0 / 127));
  }
  SUBCASE("explicit order must be complete and populated") {
    const auto m = hand_4x4();
    const std::vector<std::string> labels{"a", "a", "b", "b"};
    const std::vector<std::string> order{"b", "a"};
    CHECK(phenomenon_matrix(m, labels, order).row_labels == order);
    const std::vector<std::string> extra{"b", "a", "c"};
    CHECK(error_of([&] { phenomenon_matrix(m, labels, extra); }).find("no samples") != std::string::npos);
    const std::vector<std::string> missing{"a"};
    CHECK_THROWS_AS(phenomenon_matrix(m, labels, missing), Error);
  }
}

TEST_CASE("aggregates are invariant to a consistent permutation") {
  const auto nc = fixtures::nested_clusters(6, 16, 5);
  const auto m = pairwise_similarity(nc.set, {});
  const std::size_t n = m.rows;
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  SplitMix64 r(9);
  for (std::size_t i = n - 1; i > 0; --i) std::swap(perm[i], perm[r.bounded(i + 1)]);
  auto pmx = m;
  std::vector<std::string> plabels(n);
  for (std::size_t i = 0; i < n; ++i) {
    plabels[i] = nc.term[perm[i]];
    for (std::size_t j = 0; j < n; ++j) pmx.codes[i * n + j] = m.at(perm[i], perm[j]);
  }
  const auto a = class_similarity_stats(m, nc.term, TaxonomyLevel::term);
  const auto b = class_similarity_stats(pmx, plabels, TaxonomyLevel::term);
  CHECK(a.intra_mean == b.intra_mean);
  CHECK(a.inter_mean == b.inter_mean);
  const auto pa = phenomenon_matrix(m, nc.term);
  const auto pb = phenomenon_matrix(pmx, plabels, pa.row_labels);
  CHECK(pa.means == pb.means);
}

TEST_CASE("cross-lingual term table") {
  SUBCASE("one term each side") {
    SimMatrix m;
    m.rows = 2;
    m.cols = 3;
    m.codes.assign(6, quantize_similarity(0.5));
    const std::vector<std::string> r{"t", "t"}, c{"s", "s", "s"};
    const auto t = cross_lingual_term_table(m, r, c);
    CHECK(t.at(0, 0) == doctest::Approx(0.5).epsilon(0.5 / 127));
  }
  SUBCASE("3 x 3 blocks") {
    const std::size_t R = 6, C = 9;
    SimMatrix m;
    m.rows = R;
    m.cols = C;
    SplitMix64 g(1);
    for (std::size_t k = 0; k < R * C; ++k) m.codes.push_back(static_cast<std::int8_t>(static_cast<int>(g.bounded(255)) - 127));
    const std::vector<std::string> r{"A", "B", "C", "A", "B", "C"};
    const std::vector<std::string> c{"x", "y", "z", "x", "y", "z", "x", "y", "z"};
    const auto t = cross_lingual_term_table(m, r, c);
    CHECK(t.row_labels == std::vector<std::string>{"A", "B", "C"});
    for (std::size_t p = 0; p < 3; ++p)
      for (std::size_t q = 0; q < 3; ++q) {
        std::int64_t sum = 0;
        for (std::size_t i = p; i < R; i += 3)
          for (std::size_t j = q; j < C; j += 3) sum += m.at(i, j);
        CHECK(t.at(p, q) == doctest::Approx(sum / 127.0 / 6).epsilon(1e-14));
      }
    const std::vector<std::string> order{"A", "B", "C", "D"};
    CHECK_THROWS_AS(cross_lingual_term_table(m, r, c, order), Error);
  }
}

TEST_CASE("buckets") {
  const auto d = default_buckets();
  REQUIRE(d.size() == 11);
  CHECK(d[0].contains(1.0));
  CHECK_FALSE(d[0].contains(0.9));
  CHECK(d[1].contains(0.9));
  CHECK(d[10].contains(0.0));
  CHECK(d[10].contains(-0.7));
  CHECK(d[10].label() == "(-inf, 0]");
  const auto p = parse_buckets("0.5:1,-inf:0.5");
  REQUIRE(p.size() == 2);
  CHECK(p[1].lo == -INFINITY);
  CHECK_THROWS_AS(parse_buckets("1:0.5"), Error);
  CHECK_THROWS_AS(parse_buckets("abc"), Error);
}

TEST_CASE("joint distribution sampling") {
  const auto nc = fixtures::nested_clusters(5, 16, 6);
  auto m = pairwise_similarity(nc.set, {});
  const auto emb = fixtures::random_set(m.rows, 1, 24, 8, "emb", m.row_hash);
  const auto buckets = default_buckets();
  const auto a = joint_distribution_sample(m, emb, buckets, 20, 42);
  const auto b = joint_distribution_sample(m, emb, buckets, 20, 42);
  CHECK(a.records.size() == b.records.size());
  for (std::size_t k = 0; k < a.records.size(); ++k) {
    CHECK(a.records[k].i == b.records[k].i);
    CHECK(a.records[k].j == b.records[k].j);
  }
  std::uint64_t total = 0;
  for (std::size_t bk = 0; bk < buckets.size(); ++bk) {
    total += a.eligible[bk];
    CHECK(a.shortfall[bk] == 20 - std::min<std::uint64_t>(20, a.eligible[bk]));
  }
  CHECK(total == m.rows * (m.rows - 1) / 2);
  for (const auto& r : a.records) {
    CHECK(r.i < r.j);
    CHECK(buckets[r.bucket].contains(r.linguistic_sim));
    CHECK(r.linguistic_sim == dequantize_similarity(m.at(r.i, r.j)));
  }
  const auto c = joint_distribution_sample(m, emb, buckets, 20, 43);
  bool differs = false;
  for (std::size_t k = 0; k < std::min(a.records.size(), c.records.size()); ++k)
    differs = differs || a.records[k].i != c.records[k].i || a.records[k].j != c.records[k].j;
  CHECK(differs);

  auto wrong = emb;
  wrong.dataset_hash ^= 1;
  CHECK_THROWS_AS(joint_distribution_sample(m, wrong, buckets, 5, 1), Error);
  CHECK_THROWS_AS(joint_distribution_sample(m, nc.set, buckets, 5, 1), Error);
  CHECK_THROWS_AS(joint_distribution_sample(m, emb, std::vector<SimBucket>{}, 5, 1), Error);
}

TEST_CASE("joint: constructed linear relation gives r = 1") {
  const std::size_t n = 11;  // 55 pairs
  const auto emb = compass(n, 0x3);
  SimMatrix m;
  m.rows = m.cols = n;
  m.symmetric = true;
  m.row_hash = m.col_hash = 0x3;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      m.codes.push_back(i == j ? 127 : quantize_similarity(cosine_layer(emb.vec(i, 0), emb.vec(j, 0)).value));
  const auto js = joint_distribution_sample(m, emb, default_buckets(), 1000, 1);
  CHECK(js.records.size() == 55);
  for (const auto& r : js.records) CHECK(r.semantic_sim == r.linguistic_sim);
  REQUIRE(js.pearson_r.has_value());
  CHECK(std::fabs(*js.pearson_r - 1.0) <= 1e-9);
}

TEST_CASE("joint: identical embeddings leave r undefined") {
  const std::size_t n = 8;
  std::vector<float> v(n * 4, 1.0f);
  const auto emb = make_vector_set("emb", 0x9, {0}, n, 4, v);
  auto m = pairwise_similarity(fixtures::random_set(n, 2, 8, 3, "m", 0x9), {});
  const auto js = joint_distribution_sample(m, emb, default_buckets(), 100, 1);
  for (const auto& r : js.records) CHECK(r.semantic_sim == doctest::Approx(1.0).epsilon(1e-15));
  CHECK_FALSE(js.pearson_r.has_value());
}

TEST_CASE("quadrants") {
  const auto d = tiny_dataset(10);
  JointSample js;
  auto rec = [](std::size_t i, std::size_t j, double l, double s) {
    JointRecord r;
    r.i = i;
    r.j = j;
    r.linguistic_sim = l;
    r.semantic_sim = s;
    return r;
  };
  SUBCASE("single HL record") {
    js.records = {rec(0, 1, 0.9, 0.1)};
    const auto ex = quadrant_examples(js, d);
    REQUIRE(ex.size() == 1);
    CHECK(ex[0].quadrant == Quadrant::HL);
    CHECK(ex[0].pair_i.pair_id == "p0");
    CHECK(ex[0].pair_j.sentence_bad == "bad 1");
  }
  SUBCASE("one per quadrant, plus unclassified") {
    js.records = {rec(0, 1, 0.1, 0.1), rec(1, 2, 0.9, 0.9), rec(2, 3, 0.2, 0.7), rec(3, 4, 0.7, 0.2),
                  rec(4, 5, 0.45, 0.9), rec(5, 6, 0.6, 0.9)};
    const auto ex = quadrant_examples(js, d);
    REQUIRE(ex.size() == 4);
    CHECK(ex[0].quadrant == Quadrant::HH);
    CHECK(ex[1].quadrant == Quadrant::HL);
    CHECK(ex[2].quadrant == Quadrant::LH);
    CHECK(ex[3].quadrant == Quadrant::LL);
  }
  SUBCASE("per-quadrant cap and thresholds") {
    for (std::size_t k = 0; k < 8; ++k) js.records.push_back(rec(k, k + 1, 0.95, 0.95));
    CHECK(quadrant_examples(js, d, 0.6, 0.3, 3).size() == 3);
    CHECK_THROWS_AS(quadrant_examples(js, d, 0.3, 0.6), Error);
    CHECK_THROWS_AS(quadrant_examples(js, d, 1.2, 0.3), Error);
  }
}

TEST_CASE("pearson") {
  const std::vector<double> x{1, 2, 3, 4}, y{2, 4, 6, 8}, z{4, 3, 2, 1}, c{1, 1, 1, 1};
  CHECK(*pearson(x, y) == doctest::Approx(1.0));
  CHECK(*pearson(x, z) == doctest::Approx(-1.0));
  CHECK_FALSE(pearson(x, c).has_value());
  CHECK_FALSE(pearson(std::vector<double>{1}, std::vector<double>{2}).has_value());
}
