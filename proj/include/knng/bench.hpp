#pragma once

// Reference selectors and the benchmark sweep harness.
//
// The oracles are deliberately plain: a full stable sort and std::nth_element.
// Equivalence tests and the harness's own sanity check compare the
// multi-select engine against them.

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "knng/ballot.hpp"
#include "knng/dataset.hpp"
#include "knng/distance.hpp"
#include "knng/error.hpp"
#include "knng/multiselect.hpp"
#include "knng/parallel.hpp"

namespace knng {

/// Full sort by (key, idx), then the first k.
inline NeighborList oracle_sort_select(std::span<const Element> row, std::uint32_t k) {
  std::vector<Neighbor> all;
  all.reserve(row.size());
  for (const Element& e : row) all.push_back({e.idx, e.key});
  std::sort(all.begin(), all.end(), key_then_index);
  NeighborList out;
  const std::size_t take = std::min<std::size_t>(k, all.size());
  out.entries.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(take));
  out.sorted = true;
  return out;
}

/// The k-th smallest key (1-based k). Keeps no neighbor list.
inline float oracle_nth_element(std::span<const Element> row, std::uint32_t k) {
  if (k < 1 || k > row.size()) throw ConfigError("oracle_nth_element: k out of range");
  std::vector<float> keys(row.size());
  for (std::size_t i = 0; i < row.size(); ++i) keys[i] = row[i].key;
  std::nth_element(keys.begin(), keys.begin() + (k - 1), keys.end());
  return keys[k - 1];
}

/// Exact neighbor lists from directly computed distances in double
/// precision, fully sorted. Keys returned are the true metric values:
/// squared Euclidean distance, 1 - cosine, or 1 - Pearson correlation.
inline std::vector<NeighborList> oracle_knn(const Dataset& queries, const Dataset& corpus, Metric metric,
                                            std::uint32_t k, bool exclude_self) {
  const std::uint32_t d = corpus.dim();
  auto centered = [d](std::span<const float> v) {
    std::vector<double> out(v.begin(), v.end());
    if (d == 0) return out;
    const double mean = std::accumulate(out.begin(), out.end(), 0.0) / d;
    for (double& x : out) x -= mean;
    return out;
  };
  std::vector<NeighborList> rows(queries.count());
  for (std::uint32_t i = 0; i < queries.count(); ++i) {
    std::vector<std::pair<double, std::uint32_t>> all;
    for (std::uint32_t j = 0; j < corpus.count(); ++j) {
      if (exclude_self && i == j) continue;
      auto x = queries.column(i), y = corpus.column(j);
      double dist = 0;
      if (metric == Metric::euclidean_reduced) {
        for (std::uint32_t c = 0; c < d; ++c) {
          const double t = static_cast<double>(x[c]) - y[c];
          dist += t * t;
        }
      } else {
        std::vector<double> a(x.begin(), x.end()), b(y.begin(), y.end());
        if (metric == Metric::pearson) {
          a = centered(x);
          b = centered(y);
        }
        double ab = 0, aa = 0, bb = 0;
        for (std::uint32_t c = 0; c < d; ++c) {
          ab += a[c] * b[c];
          aa += a[c] * a[c];
          bb += b[c] * b[c];
        }
        dist = (aa == 0 || bb == 0) ? static_cast<double>(kZeroNormKey) : 1.0 - ab / std::sqrt(aa * bb);
      }
      all.emplace_back(dist, j);
    }
    std::sort(all.begin(), all.end());
    rows[i].query_id = i;
    rows[i].sorted = true;
    for (std::uint32_t t = 0; t < k && t < all.size(); ++t)
      rows[i].entries.push_back({all[t].second, static_cast<float>(all[t].first)});
  }
  return rows;
}

enum class SweepMode { fix_Q_vary_nk, fix_product_vary_ratio, fix_n_vary_Q, vs_full_sort };

inline const char* to_string(SweepMode m) {
  switch (m) {
    case SweepMode::fix_Q_vary_nk: return "fix_Q_vary_nk";
    case SweepMode::fix_product_vary_ratio: return "fix_product_vary_ratio";
    case SweepMode::fix_n_vary_Q: return "fix_n_vary_Q";
    case SweepMode::vs_full_sort: return "vs_full_sort";
  }
  return "unknown";
}

inline SweepMode parse_sweep_mode(std::string_view s) {
  if (s == "fix_Q_vary_nk") return SweepMode::fix_Q_vary_nk;
  if (s == "fix_product_vary_ratio" || s == "fix_product") return SweepMode::fix_product_vary_ratio;
  if (s == "fix_n_vary_Q") return SweepMode::fix_n_vary_Q;
  if (s == "vs_full_sort") return SweepMode::vs_full_sort;
  throw ConfigError("unknown sweep mode '" + std::string(s) + "'");
}

enum class BenchMethod { quick_multiselect, full_sort, nth_element_loop };

inline const char* to_string(BenchMethod m) {
  switch (m) {
    case BenchMethod::quick_multiselect: return "quick_multiselect";
    case BenchMethod::full_sort: return "full_sort";
    case BenchMethod::nth_element_loop: return "nth_element_loop";
  }
  return "unknown";
}

inline BenchMethod parse_bench_method(std::string_view s) {
  if (s == "quick_multiselect" || s == "quick") return BenchMethod::quick_multiselect;
  if (s == "full_sort" || s == "sort") return BenchMethod::full_sort;
  if (s == "nth_element_loop" || s == "nth_element") return BenchMethod::nth_element_loop;
  throw ConfigError("unknown bench method '" + std::string(s) + "'");
}

enum class KeyDistribution { uniform, duplicates };

/// Grid expansion by mode:
///   fix_Q_vary_nk           Q = qs[0], every (n, k)
///   fix_product_vary_ratio  (ns[i], qs[i]) zipped, n*Q equal for all i; every k
///   fix_n_vary_Q            n = ns[0], every (Q, k)
///   vs_full_sort            every (n, Q, k)
struct SweepSpec {
  SweepMode mode = SweepMode::vs_full_sort;
  std::vector<std::uint32_t> ns;
  std::vector<std::uint32_t> qs;
  std::vector<std::uint32_t> ks;
  std::uint32_t trials = 30;
  std::uint64_t seed = 0;
  std::vector<BenchMethod> methods{BenchMethod::quick_multiselect, BenchMethod::full_sort,
                                   BenchMethod::nth_element_loop};
  KeyDistribution keys = KeyDistribution::uniform;
  std::uint32_t lane_groups = 1;
  unsigned workers = 0;
  std::uint64_t memory_budget_bytes = 3ull << 30;
};

struct GridPoint {
  std::uint32_t n;
  std::uint32_t q;
  std::uint32_t k;
};

/// (n, Q) pairs with n*Q = 2^log2_product for every integral ratio
/// log2(n/Q) in [ratio_min, ratio_max]. Ratios whose parity differs from
/// log2_product have no power-of-two solution and are skipped.
inline void fill_fix_product_grid(SweepSpec& spec, int log2_product, int ratio_min, int ratio_max) {
  if (ratio_min > ratio_max) throw ConfigError("ratio range is empty");
  spec.mode = SweepMode::fix_product_vary_ratio;
  spec.ns.clear();
  spec.qs.clear();
  for (int r = ratio_min; r <= ratio_max; ++r) {
    if (((log2_product + r) % 2 + 2) % 2 != 0) continue;
    const int log_n = (log2_product + r) / 2;
    const int log_q = (log2_product - r) / 2;
    if (log_n < 0 || log_q < 0 || log_n > 31 || log_q > 31) throw ConfigError("ratio outside representable range");
    spec.ns.push_back(1u << log_n);
    spec.qs.push_back(1u << log_q);
  }
  if (spec.ns.empty()) throw ConfigError("no integral grid points for this product and ratio range");
}

inline std::vector<GridPoint> expand_grid(const SweepSpec& spec) {
  auto positive = [](const std::vector<std::uint32_t>& v, const char* name) {
    if (v.empty()) throw ConfigError(std::string("sweep grid needs at least one ") + name);
    for (auto x : v)
      if (x == 0) throw ConfigError(std::string("sweep grid values must be positive: ") + name);
  };
  positive(spec.ns, "n");
  positive(spec.qs, "Q");
  positive(spec.ks, "k");
  if (spec.trials == 0) throw ConfigError("trials must be positive");
  if (spec.methods.empty()) throw ConfigError("no bench methods selected");

  std::vector<GridPoint> pts;
  switch (spec.mode) {
    case SweepMode::fix_Q_vary_nk:
      if (spec.qs.size() != 1) throw ConfigError("fix_Q_vary_nk takes exactly one Q");
      for (auto n : spec.ns)
        for (auto k : spec.ks) pts.push_back({n, spec.qs[0], k});
      break;
    case SweepMode::fix_product_vary_ratio: {
      if (spec.ns.size() != spec.qs.size()) throw ConfigError("fix_product needs paired n and Q lists");
      const std::uint64_t product = std::uint64_t{spec.ns[0]} * spec.qs[0];
      for (std::size_t i = 0; i < spec.ns.size(); ++i) {
        if (std::uint64_t{spec.ns[i]} * spec.qs[i] != product)
          throw ConfigError("fix_product grid does not keep n*Q constant");
        for (auto k : spec.ks) pts.push_back({spec.ns[i], spec.qs[i], k});
      }
      break;
    }
    case SweepMode::fix_n_vary_Q:
      if (spec.ns.size() != 1) throw ConfigError("fix_n_vary_Q takes exactly one n");
      for (auto q : spec.qs)
        for (auto k : spec.ks) pts.push_back({spec.ns[0], q, k});
      break;
    case SweepMode::vs_full_sort:
      for (auto n : spec.ns)
        for (auto q : spec.qs)
          for (auto k : spec.ks) pts.push_back({n, q, k});
      break;
  }
  for (const auto& p : pts)
    if (p.k > p.n) throw ConfigError("k=" + std::to_string(p.k) + " exceeds n=" + std::to_string(p.n));
  return pts;
}

/// Bytes needed to hold one grid point's key matrix plus per-worker arenas.
inline std::uint64_t point_memory_bytes(const GridPoint& p, unsigned workers) {
  return std::uint64_t{p.q} * p.n * sizeof(float) + std::uint64_t{workers} * 2 * p.n * sizeof(Element) +
         std::uint64_t{p.n} * (sizeof(Neighbor) + sizeof(float));
}

/// Row-major Q x n keys in [0, 1). Row r depends only on (seed, n, r).
inline std::vector<float> generate_keys(std::uint32_t q, std::uint32_t n, std::uint64_t seed, KeyDistribution dist,
                                        unsigned workers) {
  std::vector<float> keys(static_cast<std::size_t>(q) * n);
  parallel_for(q, workers, [&](unsigned, std::size_t r) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), n,
                      static_cast<std::uint32_t>(r)};
    std::mt19937 gen(seq);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    float* row = keys.data() + r * n;
    for (std::uint32_t j = 0; j < n; ++j) {
      float v = u(gen);
      if (dist == KeyDistribution::duplicates) v = std::floor(v * 256.0f) / 256.0f;
      row[j] = v;
    }
  });
  return keys;
}

struct BenchRecord {
  SweepMode mode;
  std::uint32_t n;
  std::uint32_t q;
  std::uint32_t k;
  BenchMethod method;
  std::uint32_t trials;
  double total_seconds;      // mean over trials
  double per_query_seconds;  // total_seconds / Q
  double min_seconds;
  double max_seconds;
  double speedup_vs_full_sort;  // NaN when full_sort was not run
};

inline constexpr std::string_view kBenchHeader =
    "mode,n,Q,k,method,trials,total_seconds,per_query_seconds,speedup_vs_full_sort";

inline void write_bench_csv(std::ostream& out, const SweepSpec& spec, std::span<const BenchRecord> records) {
  out << "# clock=steady_clock warmup=1 timed=selection_only seed=" << spec.seed
      << " keys=" << (spec.keys == KeyDistribution::uniform ? "uniform" : "duplicates")
      << " lane_groups=" << spec.lane_groups << " workers=" << resolve_workers(spec.workers) << '\n';
  out << kBenchHeader << '\n';
  char buf[64];
  auto num = [&buf](double v) -> std::string {
    if (std::isnan(v)) return "nan";
    auto r = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, r.ptr);
  };
  for (const auto& r : records)
    out << to_string(r.mode) << ',' << r.n << ',' << r.q << ',' << r.k << ',' << to_string(r.method) << ','
        << r.trials << ',' << num(r.total_seconds) << ',' << num(r.per_query_seconds) << ','
        << num(r.speedup_vs_full_sort) << '\n';
}

namespace detail {

// Times one method over all Q rows. Arenas are allocated by the caller so
// allocation stays outside the timed region.
struct MethodRunner {
  std::uint32_t n, q, k;
  std::span<const float> keys;
  SelectOptions opts;
  std::uint64_t seed;
  unsigned workers;
  std::vector<SelectTask>& tasks;
  std::vector<std::vector<Element>>& scratch;
  std::vector<std::vector<float>>& key_scratch;
  std::vector<float> sink;  // defeats dead-code elimination

  double run(BenchMethod method) {
    sink.assign(q, 0.0f);
    const auto t0 = std::chrono::steady_clock::now();
    parallel_for(q, workers, [&](unsigned w, std::size_t r) {
      auto row = keys.subspan(r * n, n);
      switch (method) {
        case BenchMethod::quick_multiselect: {
          NeighborList res = tasks[w].select_keys(row, k, row_rng(seed, r), r);
          sink[r] = res.entries.front().key;
          break;
        }
        case BenchMethod::full_sort: {
          auto& buf = scratch[w];
          for (std::uint32_t j = 0; j < n; ++j) buf[j] = {row[j], j};
          std::sort(buf.begin(), buf.end(), [](const Element& a, const Element& b) {
            return a.key < b.key || (a.key == b.key && a.idx < b.idx);
          });
          sink[r] = buf[k - 1].key;
          break;
        }
        case BenchMethod::nth_element_loop: {
          auto& buf = key_scratch[w];
          std::copy(row.begin(), row.end(), buf.begin());
          std::nth_element(buf.begin(), buf.begin() + (k - 1), buf.end());
          sink[r] = buf[k - 1];
          break;
        }
      }
    });
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
};

}  // namespace detail

/// Runs every grid point and method: one warm-up run, then `trials` timed
/// runs of the selection step over all Q rows. One randomly chosen
/// (point, row) is cross-checked against oracle_sort_select.
inline std::vector<BenchRecord> run_sweep(const SweepSpec& spec) {
  const std::vector<GridPoint> grid = expand_grid(spec);
  const unsigned workers = resolve_workers(spec.workers);
  for (const auto& p : grid) {
    const std::uint64_t need = point_memory_bytes(p, workers);
    if (need > spec.memory_budget_bytes)
      throw ResourceError("grid point n=" + std::to_string(p.n) + " Q=" + std::to_string(p.q) + " needs " +
                          std::to_string(need >> 20) + " MiB, budget is " +
                          std::to_string(spec.memory_budget_bytes >> 20) + " MiB");
  }

  std::mt19937_64 pick(spec.seed ^ 0x9e3779b97f4a7c15ULL);
  const std::size_t check_point = std::uniform_int_distribution<std::size_t>(0, grid.size() - 1)(pick);

  SelectOptions opts;
  opts.lane_groups = spec.lane_groups;
  std::vector<BenchRecord> records;
  std::vector<float> keys;
  std::uint32_t keys_n = 0, keys_q = 0;

  for (std::size_t gi = 0; gi < grid.size(); ++gi) {
    const GridPoint p = grid[gi];
    if (keys_n != p.n || keys_q != p.q) {
      keys.clear();
      keys.shrink_to_fit();
      keys = generate_keys(p.q, p.n, spec.seed, spec.keys, workers);
      keys_n = p.n;
      keys_q = p.q;
    }
    const unsigned w = std::min<unsigned>(workers, p.q);
    std::vector<SelectTask> tasks;
    std::vector<std::vector<Element>> scratch;
    std::vector<std::vector<float>> key_scratch;
    for (unsigned i = 0; i < w; ++i) {
      tasks.emplace_back(opts);
      scratch.emplace_back(p.n);
      key_scratch.emplace_back(p.n);
    }

    if (gi == check_point) {
      const auto row = std::uniform_int_distribution<std::uint32_t>(0, p.q - 1)(pick);
      std::vector<Element> elems(p.n);
      for (std::uint32_t j = 0; j < p.n; ++j) elems[j] = {keys[std::size_t{row} * p.n + j], j};
      NeighborList got = tasks[0].select(elems, p.k, row_rng(spec.seed, row));
      NeighborList want = oracle_sort_select(elems, p.k);
      std::vector<float> a, b;
      for (auto& e : got.entries) a.push_back(e.key);
      for (auto& e : want.entries) b.push_back(e.key);
      std::sort(a.begin(), a.end());
      if (a != b) throw InternalError("harness cross-check failed: multi-select disagrees with sort oracle");
    }

    detail::MethodRunner runner{p.n, p.q, p.k, keys, opts, spec.seed, w, tasks, scratch, key_scratch, {}};
    std::vector<BenchRecord> point_records;
    double full_sort_mean = std::nan("");
    for (BenchMethod m : spec.methods) {
      runner.run(m);  // warm-up
      double sum = 0, lo = 1e300, hi = 0;
      for (std::uint32_t t = 0; t < spec.trials; ++t) {
        const double s = runner.run(m);
        sum += s;
        lo = std::min(lo, s);
        hi = std::max(hi, s);
      }
      const double mean = sum / spec.trials;
      if (m == BenchMethod::full_sort) full_sort_mean = mean;
      point_records.push_back({spec.mode, p.n, p.q, p.k, m, spec.trials, mean, mean / p.q, lo, hi, 0.0});
    }
    for (auto& r : point_records) {
      r.speedup_vs_full_sort = full_sort_mean / r.total_seconds;
      records.push_back(r);
    }
  }
  return records;
}

}  // namespace knng
