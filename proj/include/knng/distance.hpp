#pragma once

// Gram products and metric keys. Every metric is expressed as a key where
// smaller means nearer, so selection always looks for the k smallest keys.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "knng/dataset.hpp"
#include "knng/error.hpp"

namespace knng {

enum class Metric : std::uint8_t {
  euclidean_reduced = 0,  // |y|^2 - 2 x.y, same order as |x - y|^2 for fixed x
  cosine = 1,             // 1 - cos(x, y)
  pearson = 2,            // cosine on centered vectors
};

inline const char* to_string(Metric m) {
  switch (m) {
    case Metric::euclidean_reduced: return "euclidean";
    case Metric::cosine: return "cosine";
    case Metric::pearson: return "pearson";
  }
  return "unknown";
}

inline Metric parse_metric(std::string_view name) {
  if (name == "euclidean" || name == "euclidean_reduced") return Metric::euclidean_reduced;
  if (name == "cosine") return Metric::cosine;
  if (name == "pearson") return Metric::pearson;
  throw ConfigError("unknown metric '" + std::string(name) + "'");
}

/// Key assigned to zero-norm vectors under cosine/pearson in lenient mode.
/// Valid cosine keys lie in [0, 2], so this ranks behind every real neighbor.
inline constexpr float kZeroNormKey = 3.0f;

struct GramTiling {
  std::uint32_t query_block = 64;
  std::uint32_t corpus_block = 64;
};

/// Row-major rows x cols matrix of dot products; row i belongs to query i.
struct GramMatrix {
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<float> dots;

  float operator()(std::uint32_t i, std::uint32_t j) const noexcept {
    return dots[static_cast<std::size_t>(i) * cols + j];
  }
  std::span<const float> row(std::uint32_t i) const noexcept {
    return std::span<const float>(dots).subspan(static_cast<std::size_t>(i) * cols, cols);
  }
};

inline double dot64(std::span<const float> a, std::span<const float> b) {
  double acc = 0.0;
  for (std::size_t c = 0; c < a.size(); ++c) acc += static_cast<double>(a[c]) * b[c];
  return acc;
}

/// Dot products of queries [q_begin, q_end) against the whole corpus,
/// written row-major into `out` (size (q_end - q_begin) * corpus.count()).
inline void gram_rows(const Dataset& queries, std::uint32_t q_begin, std::uint32_t q_end,
                      const Dataset& corpus, std::span<float> out, GramTiling tiling = {}) {
  if (queries.dim() != corpus.dim())
    throw ConfigError("dimension mismatch: queries d=" + std::to_string(queries.dim()) +
                      ", corpus d=" + std::to_string(corpus.dim()));
  if (q_begin > q_end || q_end > queries.count()) throw ConfigError("query range out of bounds");
  const std::uint32_t n = corpus.count();
  if (out.size() != static_cast<std::size_t>(q_end - q_begin) * n)
    throw ConfigError("gram output buffer has wrong size");
  const std::uint32_t qb = std::max(1u, tiling.query_block);
  const std::uint32_t cb = std::max(1u, tiling.corpus_block);

  for (std::uint32_t i0 = q_begin; i0 < q_end; i0 += qb) {
    const std::uint32_t i1 = std::min(q_end, i0 + qb);
    for (std::uint32_t j0 = 0; j0 < n; j0 += cb) {
      const std::uint32_t j1 = std::min(n, j0 + cb);
      for (std::uint32_t i = i0; i < i1; ++i) {
        auto x = queries.column(i);
        float* dst = out.data() + static_cast<std::size_t>(i - q_begin) * n;
        for (std::uint32_t j = j0; j < j1; ++j) dst[j] = static_cast<float>(dot64(x, corpus.column(j)));
      }
    }
  }
}

inline GramMatrix gram(const Dataset& queries, const Dataset& corpus, GramTiling tiling = {}) {
  GramMatrix g;
  g.rows = queries.count();
  g.cols = corpus.count();
  g.dots.resize(static_cast<std::size_t>(g.rows) * g.cols);
  gram_rows(queries, 0, queries.count(), corpus, g.dots, tiling);
  return g;
}

/// Y-vs-X dots from an X-vs-Y Gram matrix without recomputation.
inline GramMatrix transpose_gram(const GramMatrix& g) {
  GramMatrix t;
  t.rows = g.cols;
  t.cols = g.rows;
  t.dots.resize(g.dots.size());
  for (std::uint32_t i = 0; i < g.rows; ++i)
    for (std::uint32_t j = 0; j < g.cols; ++j)
      t.dots[static_cast<std::size_t>(j) * t.cols + i] = g.dots[static_cast<std::size_t>(i) * g.cols + j];
  return t;
}

struct AssembleOptions {
  bool strict_zero_norm = false;
};

/// Keys for one query against all N corpus vectors; indices are implicit
/// 0..N-1 at creation.
struct DistanceRow {
  std::uint64_t query_id = 0;
  std::vector<float> keys;
};

/// Computes metric keys from one row of dot products. For pearson, the dots
/// and stats must come from centered data. Returns the number of zero-norm
/// pairs that were given kZeroNormKey.
inline std::uint32_t assemble_keys(std::span<const float> dots, float query_sq_norm,
                                   std::span<const float> corpus_sq_norms, Metric metric,
                                   std::span<float> keys, AssembleOptions opts = {}) {
  const std::size_t n = dots.size();
  if (corpus_sq_norms.size() != n || keys.size() != n) throw ConfigError("row/stat size mismatch");
  if (metric == Metric::euclidean_reduced) {
    for (std::size_t j = 0; j < n; ++j)
      keys[j] = static_cast<float>(static_cast<double>(corpus_sq_norms[j]) - 2.0 * dots[j]);
    return 0;
  }
  std::uint32_t zero_norm = 0;
  const double qn = std::sqrt(static_cast<double>(query_sq_norm));
  for (std::size_t j = 0; j < n; ++j) {
    const double denom = qn * std::sqrt(static_cast<double>(corpus_sq_norms[j]));
    if (denom == 0.0) {
      if (opts.strict_zero_norm)
        throw ConfigError("zero-norm vector under " + std::string(to_string(metric)) + " metric (corpus index " +
                          std::to_string(j) + ")");
      keys[j] = kZeroNormKey;
      ++zero_norm;
      continue;
    }
    keys[j] = static_cast<float>(1.0 - dots[j] / denom);
  }
  return zero_norm;
}

inline DistanceRow assemble_row(const GramMatrix& g, const VectorStats& stats_q, const VectorStats& stats_c,
                                Metric metric, std::uint32_t i, AssembleOptions opts = {},
                                std::uint32_t* zero_norm_count = nullptr) {
  if (i >= g.rows || stats_q.sq_norms.size() != g.rows || stats_c.sq_norms.size() != g.cols)
    throw ConfigError("assemble_row: stats do not match Gram matrix");
  DistanceRow row;
  row.query_id = i;
  row.keys.resize(g.cols);
  std::uint32_t z = assemble_keys(g.row(i), stats_q.sq_norms[i], stats_c.sq_norms, metric, row.keys, opts);
  if (zero_norm_count) *zero_norm_count += z;
  return row;
}

/// Debug dump: `query_id,corpus_id,key`, one line per entry.
inline void write_rows_csv(std::ostream& out, std::span<const DistanceRow> rows) {
  out << "query_id,corpus_id,key\n";
  for (const auto& r : rows)
    for (std::size_t j = 0; j < r.keys.size(); ++j)
      out << r.query_id << ',' << j << ',' << detail::format_float(r.keys[j]) << '\n';
}

}  // namespace knng
