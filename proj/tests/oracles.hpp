#pragma once

// Test-only reference computations. Nothing here calls into the code paths
// it is used to check.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "knng/ballot.hpp"
#include "knng/dataset.hpp"

namespace oracle {

// Neumaier-compensated sum in long double.
inline long double compensated_sum(const std::vector<long double>& xs) {
  long double sum = 0, comp = 0;
  for (long double x : xs) {
    long double t = sum + x;
    if ((sum >= 0 ? sum : -sum) >= (x >= 0 ? x : -x))
      comp += (sum - t) + x;
    else
      comp += (x - t) + sum;
    sum = t;
  }
  return sum + comp;
}

// dots[i][j] = queries_i . corpus_j by the plain triple loop.
inline std::vector<std::vector<double>> naive_gram(const knng::Dataset& q, const knng::Dataset& c) {
  std::vector<std::vector<double>> g(q.count(), std::vector<double>(c.count(), 0.0));
  for (std::uint32_t i = 0; i < q.count(); ++i)
    for (std::uint32_t j = 0; j < c.count(); ++j)
      for (std::uint32_t d = 0; d < q.dim(); ++d) g[i][j] += static_cast<double>(q(d, i)) * c(d, j);
  return g;
}

// Scalar partition: one element at a time, predicate key < pivot.
struct ScalarPartition {
  std::vector<knng::Element> left;   // stream order
  std::vector<knng::Element> right;  // stream order
};

template <typename Pred = knng::KeyLess>
ScalarPartition scalar_partition(const std::vector<knng::Element>& in, float pivot, Pred pred = {}) {
  ScalarPartition p;
  for (const auto& e : in) (pred(e.key, pivot) ? p.left : p.right).push_back(e);
  return p;
}

using Pair = std::pair<std::uint32_t, std::uint32_t>;  // (key bits, idx)

template <typename Range>
std::vector<Pair> multiset(const Range& elems) {
  std::vector<Pair> out;
  for (const auto& e : elems) out.emplace_back(std::bit_cast<std::uint32_t>(e.key), e.idx);
  std::sort(out.begin(), out.end());
  return out;
}

template <typename Range>
std::vector<float> sorted_keys(const Range& elems) {
  std::vector<float> out;
  for (const auto& e : elems) out.push_back(e.key);
  std::sort(out.begin(), out.end());
  return out;
}

inline std::vector<knng::Element> random_row(std::mt19937_64& gen, std::uint32_t n, bool duplicates) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::vector<knng::Element> row(n);
  for (std::uint32_t j = 0; j < n; ++j) {
    float v = u(gen);
    if (duplicates) v = static_cast<float>(static_cast<int>(v * 256.0f)) / 256.0f;
    row[j] = {v, j};
  }
  return row;
}

inline knng::Dataset random_dataset(std::mt19937_64& gen, std::uint32_t dim, std::uint32_t count) {
  std::normal_distribution<float> nd(0.0f, 1.0f);
  std::vector<float> v(static_cast<std::size_t>(dim) * count);
  for (auto& x : v) x = nd(gen);
  return knng::Dataset(dim, count, std::move(v));
}

}  // namespace oracle
