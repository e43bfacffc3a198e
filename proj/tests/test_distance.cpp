#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <sstream>

#include "knng/distance.hpp"
#include "oracles.hpp"

using namespace knng;

TEST_CASE("gram extracts coordinates with basis vectors", "[distance][gram]") {
  Dataset basis(2, 2, {1, 0, 0, 1});
  Dataset y(2, 1, {3, 4});
  GramMatrix g = gram(basis, y);
  REQUIRE(g.rows == 2);
  REQUIRE(g.cols == 1);
  CHECK(g(0, 0) == 3.0f);
  CHECK(g(1, 0) == 4.0f);

  Dataset x(2, 1, {3, 4});
  CHECK(gram(x, x)(0, 0) == 25.0f);
}

TEST_CASE("blocked gram matches the naive triple loop", "[distance][gram]") {
  std::mt19937_64 gen(3);
  Dataset q = oracle::random_dataset(gen, 7, 5);
  Dataset c = oracle::random_dataset(gen, 7, 9);
  auto naive = oracle::naive_gram(q, c);
  for (GramTiling t : {GramTiling{}, GramTiling{1, 1}, GramTiling{2, 3}, GramTiling{5, 4}}) {
    GramMatrix g = gram(q, c, t);
    for (std::uint32_t i = 0; i < 5; ++i)
      for (std::uint32_t j = 0; j < 9; ++j)
        CHECK(std::abs(g(i, j) - naive[i][j]) <= 1e-4 * std::max(1.0, std::abs(naive[i][j])));
  }
}

TEST_CASE("gram of a set with itself is symmetric", "[distance][gram]") {
  std::mt19937_64 gen(8);
  Dataset x = oracle::random_dataset(gen, 12, 40);
  GramMatrix g = gram(x, x, {7, 9});
  for (std::uint32_t i = 0; i < 40; ++i)
    for (std::uint32_t j = 0; j < 40; ++j) CHECK(std::abs(g(i, j) - g(j, i)) <= 1e-5f * std::max(1.0f, std::abs(g(i, j))));
}

TEST_CASE("gram rejects dimension mismatch", "[distance][gram][errors]") {
  Dataset a(2, 1, {1, 2}), b(3, 1, {1, 2, 3});
  CHECK_THROWS_AS(gram(a, b), ConfigError);
}

TEST_CASE("transpose_gram swaps positions exactly", "[distance][gram]") {
  GramMatrix one{1, 1, {7.5f}};
  CHECK(transpose_gram(one).dots == one.dots);

  GramMatrix g{2, 3, {1, 2, 3, 4, 5, 6}};
  GramMatrix t = transpose_gram(g);
  REQUIRE(t.rows == 3);
  REQUIRE(t.cols == 2);
  for (std::uint32_t i = 0; i < 2; ++i)
    for (std::uint32_t j = 0; j < 3; ++j) CHECK(t(j, i) == g(i, j));
  CHECK(transpose_gram(t).dots == g.dots);

  // Y-vs-X dots from the X-vs-Y product equal a direct computation.
  std::mt19937_64 gen(4);
  Dataset x = oracle::random_dataset(gen, 5, 6), y = oracle::random_dataset(gen, 5, 4);
  CHECK(transpose_gram(gram(x, y)).dots == gram(y, x).dots);
}

TEST_CASE("assemble_row metric keys", "[distance][assemble]") {
  SECTION("reduced euclidean drops the query norm") {
    Dataset x(2, 1, {0, 0}), y(2, 1, {3, 4});
    DistanceRow r = assemble_row(gram(x, y), compute_stats(x), compute_stats(y), Metric::euclidean_reduced, 0);
    CHECK(r.keys[0] == 25.0f);
  }
  SECTION("cosine of parallel vectors is zero") {
    Dataset x(3, 1, {1, 2, 3}), y(3, 1, {2.5f, 5, 7.5f});
    DistanceRow r = assemble_row(gram(x, y), compute_stats(x), compute_stats(y), Metric::cosine, 0);
    CHECK(std::abs(r.keys[0]) <= 1e-6f);
  }
  SECTION("pearson is invariant to y = 2x + 3") {
    std::vector<float> xv{0.3f, -1.2f, 2.0f, 0.7f, 5.1f}, yv;
    for (float v : xv) yv.push_back(2 * v + 3);
    Dataset x(5, 1, xv), y(5, 1, yv);
    Dataset xc = center_dataset(x, compute_stats(x)), yc = center_dataset(y, compute_stats(y));
    DistanceRow r = assemble_row(gram(xc, yc), compute_stats(xc), compute_stats(yc), Metric::pearson, 0);
    CHECK(std::abs(r.keys[0]) <= 1e-5f);
  }
}

TEST_CASE("zero-norm vectors under cosine", "[distance][assemble][errors]") {
  Dataset x(2, 1, {1, 1}), y(2, 2, {0, 0, 1, 0});
  GramMatrix g = gram(x, y);
  std::uint32_t warnings = 0;
  DistanceRow r = assemble_row(g, compute_stats(x), compute_stats(y), Metric::cosine, 0, {}, &warnings);
  CHECK(r.keys[0] == kZeroNormKey);
  CHECK(r.keys[0] == 3.0f);
  CHECK(warnings == 1);
  CHECK(r.keys[1] < 2.0f);
  CHECK_THROWS_AS(assemble_row(g, compute_stats(x), compute_stats(y), Metric::cosine, 0, {true}), ConfigError);
  // Euclidean has no such restriction.
  CHECK_NOTHROW(assemble_row(g, compute_stats(x), compute_stats(y), Metric::euclidean_reduced, 0, {true}));
}

TEST_CASE("metric key properties on random data", "[distance][property]") {
  std::mt19937_64 gen(21);
  Dataset q = oracle::random_dataset(gen, 10, 8);
  Dataset c = oracle::random_dataset(gen, 10, 50);
  const VectorStats sq = compute_stats(q), sc = compute_stats(c);
  GramMatrix g = gram(q, c);

  Dataset qc = center_dataset(q, sq), cc = center_dataset(c, sc);
  const VectorStats sqc = compute_stats(qc), scc = compute_stats(cc);
  GramMatrix gc = gram(qc, cc);

  for (std::uint32_t i = 0; i < q.count(); ++i) {
    DistanceRow cos = assemble_row(g, sq, sc, Metric::cosine, i);
    for (float k : cos.keys) {
      CHECK(k >= -1e-5f);
      CHECK(k <= 2.0f + 1e-5f);
    }
    // pearson(x, y) = cosine(center(x), center(y)), checked against a
    // direct double-precision correlation.
    DistanceRow pr = assemble_row(gc, sqc, scc, Metric::pearson, i);
    for (std::uint32_t j = 0; j < c.count(); ++j) {
      double mx = 0, my = 0;
      for (std::uint32_t d = 0; d < 10; ++d) mx += q(d, i), my += c(d, j);
      mx /= 10, my /= 10;
      double xy = 0, xx = 0, yy = 0;
      for (std::uint32_t d = 0; d < 10; ++d) {
        const double a = q(d, i) - mx, b = c(d, j) - my;
        xy += a * b, xx += a * a, yy += b * b;
      }
      CHECK(std::abs(pr.keys[j] - (1.0 - xy / std::sqrt(xx * yy))) <= 1e-5);
    }
  }
}

TEST_CASE("row dump CSV", "[distance]") {
  DistanceRow r{4, {0.5f, 1.25f}};
  std::ostringstream out;
  write_rows_csv(out, std::span<const DistanceRow>(&r, 1));
  CHECK(out.str() == "query_id,corpus_id,key\n4,0,0.5\n4,1,1.25\n");
}

TEST_CASE("metric names", "[distance]") {
  CHECK(parse_metric("euclidean") == Metric::euclidean_reduced);
  CHECK(parse_metric("pearson") == Metric::pearson);
  CHECK_THROWS_AS(parse_metric("hamming"), ConfigError);
}
