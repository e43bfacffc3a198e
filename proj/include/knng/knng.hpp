#pragma once

// Brute-force k-NN and k-NN graph construction: Gram block -> metric keys ->
// quick multi-select per row.

#include <atomic>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <cstdint>
#include <istream>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "knng/dataset.hpp"
#include "knng/distance.hpp"
#include "knng/error.hpp"
#include "knng/multiselect.hpp"
#include "knng/parallel.hpp"

namespace knng {

/// Key written over a query's own column when self matches are excluded.
/// Finite and above every key a validated input can produce.
inline constexpr float kSelfKey = std::numeric_limits<float>::max() / 2;

inline constexpr std::uint32_t kGraphVersion = 1;

struct BuildOptions {
  bool exclude_self = true;  // only applies when queries and corpus are the same data
  std::uint32_t lane_groups = 1;
  std::uint32_t row_block = 256;
  std::uint64_t seed = 0;
  bool sort_output = false;
  unsigned workers = 0;  // 0 = hardware concurrency
  bool strict_zero_norm = false;
  GramTiling tiling{};
};

struct GraphMeta {
  std::uint64_t seed = 0;
  std::uint64_t query_hash = 0;
  std::uint64_t corpus_hash = 0;
  std::string mode;  // "knn" or "knng"
  bool self_excluded = false;
  std::uint32_t lane_groups = 1;
  std::uint64_t zero_norm_keys = 0;  // lenient zero-norm substitutions
};

struct KnnGraph {
  std::uint32_t q = 0;
  std::uint32_t k = 0;
  Metric metric = Metric::euclidean_reduced;
  std::vector<NeighborList> rows;
  GraphMeta meta;
};

namespace detail {

struct PreparedSet {
  const Dataset* data;
  Dataset centered;  // filled for pearson only
  VectorStats stats;
};

inline void prepare(const Dataset& ds, Metric metric, PreparedSet& out) {
  out.data = &ds;
  if (metric == Metric::pearson) {
    out.centered = center_dataset(ds, compute_stats(ds));
    out.data = &out.centered;
  }
  out.stats = compute_stats(*out.data);
}

}  // namespace detail

inline KnnGraph build_knn(const Dataset& queries, const Dataset& corpus, Metric metric, std::uint32_t k,
                          const BuildOptions& opts = {}) {
  if (queries.dim() != corpus.dim())
    throw ConfigError("dimension mismatch: queries d=" + std::to_string(queries.dim()) +
                      ", corpus d=" + std::to_string(corpus.dim()));
  if (opts.lane_groups < 1 || opts.lane_groups > kMaxLaneGroups)
    throw ConfigError("lane_groups must be in 1.." + std::to_string(kMaxLaneGroups));
  if (opts.row_block == 0) throw ConfigError("row_block must be positive");
  if (corpus.id_offset() + corpus.count() > UINT32_MAX) throw ConfigError("corpus ids exceed 32 bits");

  const bool same = &queries == &corpus || queries.same_content(corpus);
  const bool exclude = opts.exclude_self && same;
  const std::uint32_t n = corpus.count();
  const std::uint32_t max_k = exclude ? n - 1 : n;
  if (k < 1 || k > max_k)
    throw ConfigError("k=" + std::to_string(k) + " out of range 1.." + std::to_string(max_k));

  detail::PreparedSet pc, pq;
  detail::prepare(corpus, metric, pc);
  const detail::PreparedSet* qs = &pc;
  if (&queries != &corpus) {
    detail::prepare(queries, metric, pq);
    qs = &pq;
  }

  KnnGraph g;
  g.q = queries.count();
  g.k = k;
  g.metric = metric;
  g.rows.resize(g.q);
  g.meta.seed = opts.seed;
  g.meta.query_hash = content_hash(queries);
  g.meta.corpus_hash = same ? g.meta.query_hash : content_hash(corpus);
  g.meta.mode = same ? "knng" : "knn";
  g.meta.self_excluded = exclude;
  g.meta.lane_groups = opts.lane_groups;

  SelectOptions sel;
  sel.lane_groups = opts.lane_groups;
  sel.sort_output = opts.sort_output;

  struct Arena {
    std::vector<float> dots;
    std::vector<float> keys;
    SelectTask task;
  };
  const std::uint32_t blocks = (g.q + opts.row_block - 1) / opts.row_block;
  const unsigned workers = std::min<unsigned>(resolve_workers(opts.workers), blocks);
  std::vector<Arena> arenas;
  arenas.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) arenas.push_back({{}, std::vector<float>(n), SelectTask(sel)});
  std::atomic<std::uint64_t> zero_norm{0};
  AssembleOptions aopts{opts.strict_zero_norm};

  parallel_for(blocks, workers, [&](unsigned worker, std::size_t b) {
    Arena& arena = arenas[worker];
    const auto r0 = static_cast<std::uint32_t>(b * opts.row_block);
    const std::uint32_t r1 = std::min(g.q, r0 + opts.row_block);
    arena.dots.resize(static_cast<std::size_t>(r1 - r0) * n);
    gram_rows(*qs->data, r0, r1, *pc.data, arena.dots, opts.tiling);
    std::uint64_t z = 0;
    for (std::uint32_t i = r0; i < r1; ++i) {
      auto dots = std::span<const float>(arena.dots).subspan(static_cast<std::size_t>(i - r0) * n, n);
      z += assemble_keys(dots, qs->stats.sq_norms[i], pc.stats.sq_norms, metric, arena.keys, aopts);
      if (exclude) arena.keys[i] = kSelfKey;
      g.rows[i] = arena.task.select_keys(arena.keys, k, row_rng(opts.seed, i), queries.id_offset() + i,
                                         static_cast<std::uint32_t>(corpus.id_offset()));
    }
    zero_norm += z;
  });
  g.meta.zero_norm_keys = zero_norm.load();
  return g;
}

/// k-NN graph of a corpus: every vector is also a query.
inline KnnGraph build_knng(const Dataset& corpus, Metric metric, std::uint32_t k, BuildOptions opts = {}) {
  return build_knn(corpus, corpus, metric, k, opts);
}

inline std::uint8_t metric_tag(Metric m) { return static_cast<std::uint8_t>(m); }

inline Metric metric_from_tag(std::uint8_t tag) {
  if (tag > 2) throw FormatError("unknown metric tag " + std::to_string(tag), 16);
  return static_cast<Metric>(tag);
}

inline void write_graph_comment(std::ostream& out, const KnnGraph& g) {
  out << "# knng seed=" << g.meta.seed << " metric=" << to_string(g.metric) << " k=" << g.k << " q=" << g.q
      << " mode=" << g.meta.mode << " self_excluded=" << (g.meta.self_excluded ? 1 : 0)
      << " lane_groups=" << g.meta.lane_groups << " query_hash=" << g.meta.query_hash
      << " corpus_hash=" << g.meta.corpus_hash << '\n';
}

/// `query_id,neighbor_id,key` edges in query order. A leading `#` line
/// records provenance.
inline void write_graph_csv(std::ostream& out, const KnnGraph& g) {
  write_graph_comment(out, g);
  out << "query_id,neighbor_id,key\n";
  for (const auto& row : g.rows)
    for (const auto& e : row.entries) out << row.query_id << ',' << e.idx << ',' << detail::format_float(e.key) << '\n';
}

inline void write_graph_binary(std::ostream& out, const KnnGraph& g) {
  out.write(kMagic, 4);
  detail::put_u32(out, kGraphVersion);
  detail::put_u32(out, g.q);
  detail::put_u32(out, g.k);
  const char tag = static_cast<char>(metric_tag(g.metric));
  out.write(&tag, 1);
  for (const auto& row : g.rows) {
    if (row.entries.size() != g.k) throw InternalError("graph row length differs from k");
    for (const auto& e : row.entries) {
      detail::put_u32(out, e.idx);
      detail::put_u32(out, std::bit_cast<std::uint32_t>(e.key));
    }
  }
}

/// Binary graphs carry no query ids; rows are numbered 0..q-1.
inline KnnGraph read_graph_binary(std::istream& in) {
  std::vector<unsigned char> bytes = detail::read_all(in);
  if (bytes.size() < 17) throw FormatError("truncated graph header", bytes.size());
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("bad magic, expected KNNG", 0);
  const std::uint32_t version = detail::get_u32(bytes.data() + 4);
  if (version != kGraphVersion) throw FormatError("unsupported graph version " + std::to_string(version), 4);
  KnnGraph g;
  g.q = detail::get_u32(bytes.data() + 8);
  g.k = detail::get_u32(bytes.data() + 12);
  g.metric = metric_from_tag(bytes[16]);
  const std::uint64_t edges = static_cast<std::uint64_t>(g.q) * g.k;
  if (bytes.size() - 17 != edges * 8) throw FormatError("graph payload size does not match q*k", 17);
  g.rows.resize(g.q);
  const unsigned char* p = bytes.data() + 17;
  for (std::uint32_t i = 0; i < g.q; ++i) {
    g.rows[i].query_id = i;
    g.rows[i].entries.resize(g.k);
    for (std::uint32_t j = 0; j < g.k; ++j, p += 8) {
      const float key = std::bit_cast<float>(detail::get_u32(p + 4));
      if (!std::isfinite(key)) throw FormatError("non-finite key in graph", static_cast<std::uint64_t>(p - bytes.data()));
      g.rows[i].entries[j] = {detail::get_u32(p), key};
    }
  }
  return g;
}

/// Parses the CSV edge list. Rows must be grouped by query and every query
/// must have the same number of edges; `#` lines are ignored.
inline KnnGraph read_graph_csv(std::istream& in, Metric metric) {
  KnnGraph g;
  g.metric = metric;
  std::string line;
  std::uint64_t line_no = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view sv = detail::trim(line);
    if (sv.empty() || sv.front() == '#') continue;
    if (!header) {
      if (sv != "query_id,neighbor_id,key") throw FormatError("expected header query_id,neighbor_id,key", line_no);
      header = true;
      continue;
    }
    std::uint64_t qid = 0;
    std::uint32_t nid = 0;
    float key = 0;
    auto c1 = sv.find(','), c2 = sv.find(',', c1 == std::string_view::npos ? c1 : c1 + 1);
    if (c1 == std::string_view::npos || c2 == std::string_view::npos) throw FormatError("expected 3 fields", line_no);
    auto f1 = sv.substr(0, c1), f2 = sv.substr(c1 + 1, c2 - c1 - 1), f3 = sv.substr(c2 + 1);
    auto r1 = std::from_chars(f1.data(), f1.data() + f1.size(), qid);
    auto r2 = std::from_chars(f2.data(), f2.data() + f2.size(), nid);
    auto r3 = std::from_chars(f3.data(), f3.data() + f3.size(), key);
    if (r1.ec != std::errc{} || r1.ptr != f1.data() + f1.size() || r2.ec != std::errc{} ||
        r2.ptr != f2.data() + f2.size() || r3.ec != std::errc{} || r3.ptr != f3.data() + f3.size() ||
        !std::isfinite(key))
      throw FormatError("bad graph edge", line_no);
    if (g.rows.empty() || g.rows.back().query_id != qid) {
      g.rows.push_back({});
      g.rows.back().query_id = qid;
    }
    g.rows.back().entries.push_back({nid, key});
  }
  if (!header) throw FormatError("missing graph header", line_no);
  g.q = static_cast<std::uint32_t>(g.rows.size());
  g.k = g.rows.empty() ? 0 : static_cast<std::uint32_t>(g.rows.front().entries.size());
  for (const auto& r : g.rows)
    if (r.entries.size() != g.k) throw FormatError("query " + std::to_string(r.query_id) + " has a different edge count", 0);
  return g;
}

}  // namespace knng
