#pragma once

// Quick multi-select: find the k smallest keys of a row by repeated ballot
// partitions between two swap buffers. Finished left sides are never copied
// back; a stack of segment references remembers which buffer each one lives
// in, and only the final gather touches them again.

#include <algorithm>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "knng/ballot.hpp"
#include "knng/error.hpp"
#include "knng/parallel.hpp"

namespace knng {

enum class Buffer : std::uint8_t { A, B };

constexpr Buffer other(Buffer b) noexcept { return b == Buffer::A ? Buffer::B : Buffer::A; }

struct SegmentRef {
  Buffer buffer;
  std::uint32_t start;
  std::uint32_t end;  // exclusive
  bool resolved;

  std::uint32_t size() const noexcept { return end - start; }
};

struct Neighbor {
  std::uint32_t idx;
  float key;

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

struct NeighborList {
  std::uint64_t query_id = 0;
  std::vector<Neighbor> entries;
  bool sorted = false;
};

inline bool key_then_index(const Neighbor& a, const Neighbor& b) {
  return a.key < b.key || (a.key == b.key && a.idx < b.idx);
}

inline void sort_neighbors(NeighborList& list) {
  std::sort(list.entries.begin(), list.entries.end(), key_then_index);
  list.sorted = true;
}

struct SelectOptions {
  std::uint32_t lane_groups = 1;
  bool sort_output = false;
  // Active segments at or below this length are finished by direct scan.
  std::uint32_t small_cutoff = kLanes;
};

/// Element moves performed by the last select, by phase.
struct MoveStats {
  std::uint64_t loaded = 0;       // row -> buffer A
  std::uint64_t partitioned = 0;  // written by partition passes
  std::uint64_t scan_swaps = 0;   // swaps inside the direct-scan tail
  std::uint64_t gathered = 0;     // resolved segments -> result
  std::uint32_t passes = 0;
  std::uint32_t equality_splits = 0;
};

struct PassRecord {
  Buffer from;
  std::uint32_t start;
  std::uint32_t end;
  float pivot;
  std::uint32_t L;
  bool equality;
};

/// Uniformly chosen key of `segment`.
template <typename Rng>
float choose_pivot(std::span<const Element> segment, Rng& rng) {
  if (segment.empty()) throw InternalError("choose_pivot on empty segment");
  std::uniform_int_distribution<std::size_t> pick(0, segment.size() - 1);
  return segment[pick(rng)].key;
}

/// Progress guard for the case where a pass found nothing below the pivot,
/// i.e. the pivot is the segment minimum. Sends every copy of it left, so
/// L >= 1 whenever the pivot occurs in the segment.
inline PartitionResult equality_split(std::span<const Element> segment, float pivot, std::span<Element> out,
                                      std::uint32_t lane_groups = 1, PassStats* stats = nullptr) {
  return partition_pass(segment, pivot, out, lane_groups, KeyLessEqual{}, stats);
}

/// Per-row seed derived from a job seed, independent of which worker runs
/// the row.
inline std::mt19937_64 row_rng(std::uint64_t seed, std::uint64_t row) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(row), static_cast<std::uint32_t>(row >> 32)};
  return std::mt19937_64(seq);
}

/// Selection state for one row: both swap buffers, the reference stack and
/// the pivot generator. Buffers are kept between calls so one task can serve
/// many rows of the same length without reallocating.
class SelectTask {
 public:
  explicit SelectTask(SelectOptions opts = {}) : opts_(opts) {
    if (opts_.lane_groups < 1 || opts_.lane_groups > kMaxLaneGroups)
      throw ConfigError("lane_groups must be in 1.." + std::to_string(kMaxLaneGroups));
  }

  const SelectOptions& options() const noexcept { return opts_; }

  NeighborList select(std::span<const Element> row, std::uint32_t k, std::mt19937_64 rng,
                      std::uint64_t query_id = 0) {
    begin(row.size(), k, std::move(rng));
    std::copy(row.begin(), row.end(), a_.begin());
    stats_.loaded = row.size();
    return finish(query_id);
  }

  /// Row given as bare keys; element j gets index idx_base + j.
  NeighborList select_keys(std::span<const float> keys, std::uint32_t k, std::mt19937_64 rng,
                           std::uint64_t query_id = 0, std::uint32_t idx_base = 0) {
    begin(keys.size(), k, std::move(rng));
    for (std::size_t j = 0; j < keys.size(); ++j) a_[j] = {keys[j], idx_base + static_cast<std::uint32_t>(j)};
    stats_.loaded = keys.size();
    return finish(query_id);
  }

  const std::vector<SegmentRef>& stack() const noexcept { return stack_; }
  const MoveStats& stats() const noexcept { return stats_; }
  const std::vector<PassRecord>& passes() const noexcept { return passes_; }
  std::uint32_t remaining() const noexcept { return remaining_; }

  /// Concatenates the resolved segments, each read from its own buffer.
  NeighborList gather_result(std::uint64_t query_id) {
    NeighborList out;
    out.query_id = query_id;
    out.entries.reserve(k_);
    for (const SegmentRef& s : stack_) {
      if (!s.resolved) throw InternalError("gather with unresolved segment on the stack");
      const std::vector<Element>& buf = s.buffer == Buffer::A ? a_ : b_;
      for (std::uint32_t i = s.start; i < s.end; ++i) out.entries.push_back({buf[i].idx, buf[i].key});
    }
    if (out.entries.size() != k_)
      throw InternalError("resolved segments hold " + std::to_string(out.entries.size()) + " elements, expected " +
                          std::to_string(k_));
    stats_.gathered = out.entries.size();
    if (opts_.sort_output) sort_neighbors(out);
    return out;
  }

 private:
  void begin(std::size_t n, std::uint32_t k, std::mt19937_64 rng) {
    if (k == 0) throw ConfigError("k must be at least 1");
    if (n == 0) throw ConfigError("cannot select from an empty row");
    if (n > UINT32_MAX) throw ConfigError("row too long");
    n_ = static_cast<std::uint32_t>(n);
    k_ = std::min<std::uint32_t>(k, n_);
    if (a_.size() != n) {
      a_.resize(n);
      b_.resize(n);
    }
    rng_ = std::move(rng);
    stack_.clear();
    passes_.clear();
    stats_ = {};
  }

  std::span<Element> buf(Buffer b) noexcept { return b == Buffer::A ? std::span<Element>(a_) : std::span<Element>(b_); }

  NeighborList finish(std::uint64_t query_id) {
    run();
    return gather_result(query_id);
  }

  void run() {
    remaining_ = k_;
    stack_.push_back({Buffer::A, 0, n_, false});
    const std::uint64_t watchdog = 2ull * n_ + 2;

    for (;;) {
      SegmentRef active = stack_.back();
      const std::uint32_t len = active.size();
      if (remaining_ == len) {
        resolve_top(active.end);
        return;
      }
      if (len <= opts_.small_cutoff) {
        scan_select(active);
        resolve_top(active.start + remaining_);
        return;
      }
      if (stats_.passes + stats_.equality_splits >= watchdog) throw InternalError("multi-select made no progress");

      std::span<Element> src = buf(active.buffer).subspan(active.start, len);
      std::span<Element> dst = buf(other(active.buffer)).subspan(active.start, len);
      const float pivot = choose_pivot(std::span<const Element>(src), rng_);
      PassStats ps;
      PartitionResult part = partition_pass(std::span<const Element>(src), pivot, dst, opts_.lane_groups, KeyLess{}, &ps);
      stats_.partitioned += ps.elements_written;
      ++stats_.passes;
      passes_.push_back({active.buffer, active.start, active.end, pivot, part.L, false});
      Buffer where = other(active.buffer);

      if (part.L == 0) {
        // The pivot is the minimum: split its copies off, back into src.
        PassStats es;
        part = equality_split(std::span<const Element>(dst), pivot, src, opts_.lane_groups, &es);
        stats_.partitioned += es.elements_written;
        ++stats_.equality_splits;
        passes_.push_back({where, active.start, active.end, pivot, part.L, true});
        where = active.buffer;
        if (part.L == 0) throw InternalError("equality split made no progress");
        if (remaining_ <= part.L) {
          // Every left element has the same key; take the first `remaining`.
          stack_.back() = {where, active.start, active.start + remaining_, true};
          remaining_ = 0;
          return;
        }
      }

      const std::uint32_t mid = active.start + part.L;
      if (remaining_ < part.L) {
        stack_.back() = {where, active.start, mid, false};
      } else if (remaining_ == part.L) {
        stack_.back() = {where, active.start, mid, true};
        remaining_ = 0;
        return;
      } else {
        stack_.back() = {where, active.start, mid, true};
        remaining_ -= part.L;
        stack_.push_back({where, mid, active.end, false});
      }
    }
  }

  void resolve_top(std::uint32_t end) {
    SegmentRef& top = stack_.back();
    top.end = end;
    top.resolved = true;
    remaining_ = 0;
  }

  // Moves the `remaining` smallest of a short segment to its front by
  // repeated minimum extraction. Ties go to the earliest position.
  void scan_select(const SegmentRef& seg) {
    std::span<Element> s = buf(seg.buffer);
    for (std::uint32_t t = 0; t < remaining_; ++t) {
      std::uint32_t best = seg.start + t;
      for (std::uint32_t i = best + 1; i < seg.end; ++i)
        if (s[i].key < s[best].key) best = i;
      if (best != seg.start + t) {
        std::swap(s[best], s[seg.start + t]);
        ++stats_.scan_swaps;
      }
    }
  }

  SelectOptions opts_;
  std::vector<Element> a_, b_;
  std::vector<SegmentRef> stack_;
  std::vector<PassRecord> passes_;
  std::uint32_t n_ = 0;
  std::uint32_t k_ = 0;
  std::uint32_t remaining_ = 0;
  std::mt19937_64 rng_;
  MoveStats stats_;
};

/// The k smallest elements of `row` (all of them when k >= n).
inline NeighborList select_k(std::span<const Element> row, std::uint32_t k, std::uint32_t lane_groups = 1,
                             std::uint64_t seed = 0, bool sort_output = false) {
  SelectOptions opts;
  opts.lane_groups = lane_groups;
  opts.sort_output = sort_output;
  SelectTask task(opts);
  return task.select(row, k, row_rng(seed, 0));
}

/// Selects the k smallest of every row of a row-major rows x n key matrix.
/// Row r is seeded from (seed, r), so the result does not depend on the
/// worker count.
inline std::vector<NeighborList> select_rows(std::span<const float> matrix, std::uint32_t rows, std::uint32_t n,
                                             std::uint32_t k, SelectOptions opts, std::uint64_t seed,
                                             unsigned workers, std::vector<SelectTask>* arenas = nullptr) {
  if (matrix.size() != static_cast<std::size_t>(rows) * n) throw ConfigError("key matrix has wrong size");
  std::vector<NeighborList> out(rows);
  const unsigned w = std::min<unsigned>(resolve_workers(workers), std::max(rows, 1u));
  std::vector<SelectTask> local;
  if (!arenas) arenas = &local;
  while (arenas->size() < w) arenas->emplace_back(opts);
  parallel_for(rows, w, [&](unsigned worker, std::size_t r) {
    out[r] = (*arenas)[worker].select_keys(matrix.subspan(r * n, n), k, row_rng(seed, r), r);
  });
  return out;
}

}  // namespace knng
