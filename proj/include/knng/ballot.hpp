#pragma once

// Ballot partition: a deterministic software model of a warp-synchronous
// pivot step. A segment is streamed in 32-lane chunks; each chunk produces a
// 32-bit vote word (bit i = lane i's key is below the pivot), popcounts of
// the masked vote give every lane a distinct slot in a staging buffer, and
// the staged chunk leaves in at most two contiguous writes: the "< pivot"
// block at the left cursor and the ">= pivot" block at the right cursor.
//
// Output order: left side holds "<" elements in stream order; the right side
// fills from the end, so the j-th ">=" element in stream order lands at
// out[len - 1 - j].

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <functional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "knng/error.hpp"

namespace knng {

struct Element {
  float key;
  std::uint32_t idx;
};

inline constexpr std::uint32_t kLanes = 32;
inline constexpr std::uint32_t kMaxLaneGroups = 16;

/// Bits of significance strictly below `lane` (lane in 0..31).
constexpr std::uint32_t low_mask(std::uint32_t lane) noexcept { return (1u << lane) - 1u; }

struct KeyLess {
  bool operator()(float key, float pivot) const noexcept { return key < pivot; }
};

// Used by the equality split, which sends keys equal to the pivot left.
struct KeyLessEqual {
  bool operator()(float key, float pivot) const noexcept { return key <= pivot; }
};

struct BallotWord {
  std::uint32_t bits = 0;
  std::uint32_t active = 0;

  std::uint32_t width() const noexcept { return static_cast<std::uint32_t>(std::popcount(active)); }
  std::uint32_t count_lt() const noexcept { return static_cast<std::uint32_t>(std::popcount(bits)); }
  std::uint32_t count_ge() const noexcept { return width() - count_lt(); }
};

template <typename Pred = KeyLess>
BallotWord ballot(std::span<const Element> chunk, float pivot, Pred pred = {}) {
  const auto len = static_cast<std::uint32_t>(chunk.size());
  if (len == 0 || len > kLanes) throw InternalError("ballot chunk must hold 1..32 elements");
  BallotWord b;
  b.active = len == kLanes ? ~0u : low_mask(len);
  for (std::uint32_t lane = 0; lane < len; ++lane)
    b.bits |= static_cast<std::uint32_t>(pred(chunk[lane].key, pivot)) << lane;
  return b;
}

enum class Side : std::uint8_t { lt, ge };

struct LaneSlot {
  Side side;
  std::uint32_t slot;

  friend bool operator==(const LaneSlot&, const LaneSlot&) = default;
};

/// Staging slot of one lane. "<" lanes pack left in lane order; ">=" lanes
/// pack from the right end, the lowest ">=" lane taking slot W-1.
inline LaneSlot lane_rank(BallotWord b, std::uint32_t lane) {
  if (lane >= kLanes || !((b.active >> lane) & 1u)) throw InternalError("lane_rank on inactive lane " + std::to_string(lane));
  const std::uint32_t below = low_mask(lane);
  if ((b.bits >> lane) & 1u) return {Side::lt, static_cast<std::uint32_t>(std::popcount(b.bits & below))};
  return {Side::ge, b.width() - 1u - static_cast<std::uint32_t>(std::popcount(~b.bits & b.active & below))};
}

/// Shared-memory analog. Sized for a full block of lane groups.
struct StagingBuffer {
  std::array<Element, kLanes * kMaxLaneGroups> slots{};
  std::uint32_t width = 0;
  std::uint32_t count_lt = 0;

  std::uint32_t count_ge() const noexcept { return width - count_lt; }
  std::span<const Element> lt_block() const noexcept { return {slots.data(), count_lt}; }
  std::span<const Element> ge_block() const noexcept { return {slots.data() + count_lt, count_ge()}; }
};

inline StagingBuffer stage_chunk(std::span<const Element> chunk, BallotWord b) {
  StagingBuffer stage;
  stage.width = b.width();
  if (stage.width != chunk.size()) throw InternalError("ballot does not match chunk");
  stage.count_lt = b.count_lt();
  for (std::uint32_t lane = 0; lane < stage.width; ++lane) stage.slots[lane_rank(b, lane).slot] = chunk[lane];
  return stage;
}

struct PassCursor {
  std::uint32_t g_lt = 0;
  std::uint32_t g_ge = 0;

  friend bool operator==(const PassCursor&, const PassCursor&) = default;
};

/// Copies the staged blocks to out[g_lt..) and to the region ending at
/// out.size() - g_ge. Returns the advanced cursor.
inline PassCursor flush_chunk(const StagingBuffer& stage, PassCursor cursor, std::span<Element> out) {
  const std::size_t len = out.size();
  const std::size_t lt = stage.count_lt, ge = stage.count_ge();
  if (std::size_t{cursor.g_lt} + cursor.g_ge + lt + ge > len) throw InternalError("partition output overflow");
  if (lt) std::memcpy(out.data() + cursor.g_lt, stage.slots.data(), lt * sizeof(Element));
  if (ge) std::memcpy(out.data() + (len - cursor.g_ge - ge), stage.slots.data() + lt, ge * sizeof(Element));
  cursor.g_lt += static_cast<std::uint32_t>(lt);
  cursor.g_ge += static_cast<std::uint32_t>(ge);
  return cursor;
}

struct PartitionResult {
  std::uint32_t L = 0;  // keys < pivot
  std::uint32_t R = 0;  // keys >= pivot
};

/// One record per lane group per block; cursor values are after the flush.
struct ChunkTrace {
  std::uint64_t block;
  std::uint32_t group;
  std::uint32_t bits;
  std::uint32_t active;
  std::uint32_t count_lt;
  std::uint32_t g_lt;
  std::uint32_t g_ge;
};

struct PassStats {
  std::uint64_t blocks = 0;
  std::uint64_t writes = 0;            // contiguous block copies issued
  std::uint64_t elements_written = 0;
  std::vector<ChunkTrace>* trace = nullptr;
};

inline void write_trace_csv(std::ostream& out, std::span<const ChunkTrace> trace) {
  out << "block,group,bits,active,count_lt,g_lt,g_ge\n";
  for (const auto& t : trace)
    out << t.block << ',' << t.group << ',' << t.bits << ',' << t.active << ',' << t.count_lt << ',' << t.g_lt
        << ',' << t.g_ge << '\n';
}

namespace detail {

// Stages up to `groups` consecutive chunks into one block-wide buffer. Each
// group ranks its lanes with its own ballot; a sequential exclusive prefix
// sum over the per-group counts then offsets those ranks block-wide.
template <typename Pred>
void stage_block(std::span<const Element> block, float pivot, std::uint32_t groups, StagingBuffer& stage,
                 std::array<BallotWord, kMaxLaneGroups>& votes, Pred pred) {
  std::array<std::uint32_t, kMaxLaneGroups> lt_off{}, ge_off{};
  std::uint32_t used = 0, lt_total = 0, ge_total = 0;
  for (std::uint32_t g = 0; g < groups; ++g) {
    const std::size_t begin = std::size_t{g} * kLanes;
    if (begin >= block.size()) break;
    const auto chunk = block.subspan(begin, std::min<std::size_t>(kLanes, block.size() - begin));
    votes[g] = ballot(chunk, pivot, pred);
    lt_off[g] = lt_total;
    ge_off[g] = ge_total;
    lt_total += votes[g].count_lt();
    ge_total += votes[g].count_ge();
    ++used;
  }
  stage.width = lt_total + ge_total;
  stage.count_lt = lt_total;
  for (std::uint32_t g = 0; g < used; ++g) {
    const BallotWord b = votes[g];
    const std::uint32_t w = b.width();
    const Element* chunk = block.data() + std::size_t{g} * kLanes;
    for (std::uint32_t lane = 0; lane < w; ++lane) {
      const LaneSlot s = lane_rank(b, lane);
      // A ">=" lane's distance from the right end of its own group is
      // w - 1 - slot; shift that by the ">=" lanes of earlier groups.
      const std::uint32_t dst = s.side == Side::lt ? lt_off[g] + s.slot
                                                   : stage.width - 1u - (ge_off[g] + (w - 1u - s.slot));
      stage.slots[dst] = chunk[lane];
    }
  }
  for (std::uint32_t g = used; g < groups; ++g) votes[g] = {};
}

inline bool overlaps(std::span<const Element> a, std::span<const Element> b) {
  if (a.empty() || b.empty()) return false;
  const Element* a0 = a.data();
  const Element* b0 = b.data();
  return std::less<>{}(a0, b0 + b.size()) && std::less<>{}(b0, a0 + a.size());
}

}  // namespace detail

/// Partitions `input` into the disjoint buffer `out` of equal length:
/// out[0, L) satisfies pred(key, pivot), out[L, len) does not.
/// lane_groups > 1 runs the block mode, where that many 32-lane groups
/// cooperate on 32*lane_groups elements per step.
template <typename Pred = KeyLess>
PartitionResult partition_pass(std::span<const Element> input, float pivot, std::span<Element> out,
                               std::uint32_t lane_groups = 1, Pred pred = {}, PassStats* stats = nullptr) {
  if (out.size() != input.size()) throw ConfigError("partition output length must equal input length");
  if (detail::overlaps(input, out)) throw ConfigError("partition input and output must not alias");
  if (lane_groups < 1 || lane_groups > kMaxLaneGroups)
    throw ConfigError("lane_groups must be in 1.." + std::to_string(kMaxLaneGroups));

  const std::size_t len = input.size();
  const std::size_t step = std::size_t{kLanes} * lane_groups;
  StagingBuffer stage;
  std::array<BallotWord, kMaxLaneGroups> votes{};
  PassCursor cursor;
  std::uint64_t block_no = 0;

  for (std::size_t pos = 0; pos < len; pos += step, ++block_no) {
    const auto block = input.subspan(pos, std::min(step, len - pos));
    detail::stage_block(block, pivot, lane_groups, stage, votes, pred);
    cursor = flush_chunk(stage, cursor, out);
    if (stats) {
      ++stats->blocks;
      stats->writes += (stage.count_lt > 0) + (stage.count_ge() > 0);
      stats->elements_written += stage.width;
      if (stats->trace) {
        for (std::uint32_t g = 0; g < lane_groups && votes[g].active; ++g)
          stats->trace->push_back({block_no, g, votes[g].bits, votes[g].active, votes[g].count_lt(), cursor.g_lt,
                                   cursor.g_ge});
      }
    }
  }
  if (std::size_t{cursor.g_lt} + cursor.g_ge != len) throw InternalError("partition counters do not cover segment");
  return {cursor.g_lt, cursor.g_ge};
}

}  // namespace knng
