#pragma once

// Column-major float32 vector collections, their binary/CSV encodings and
// per-vector statistics.

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <iterator>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "knng/error.hpp"

namespace knng {

enum class DataFormat { binary, csv };

inline constexpr char kMagic[4] = {'K', 'N', 'N', 'G'};
inline constexpr std::uint32_t kDatasetVersion = 1;

/// A dense set of `count` vectors of dimension `dim`. Column j (vector j)
/// occupies values[j*dim, (j+1)*dim). All entries are finite.
class Dataset {
 public:
  Dataset() = default;

  Dataset(std::uint32_t dim, std::uint32_t count, std::vector<float> values,
          std::uint64_t id_offset = 0)
      : dim_(dim), count_(count), id_offset_(id_offset), values_(std::move(values)) {
    if (dim_ == 0 || count_ == 0) throw FormatError("dataset dim and count must be positive", 0);
    if (values_.size() != static_cast<std::size_t>(dim_) * count_)
      throw FormatError("dataset payload length does not equal dim*count", values_.size());
    for (std::size_t i = 0; i < values_.size(); ++i)
      if (!std::isfinite(values_[i])) throw FormatError("non-finite value in dataset payload", i);
  }

  std::uint32_t dim() const noexcept { return dim_; }
  std::uint32_t count() const noexcept { return count_; }
  std::uint64_t id_offset() const noexcept { return id_offset_; }

  std::span<const float> values() const noexcept { return values_; }

  std::span<const float> column(std::uint32_t j) const noexcept {
    return std::span<const float>(values_).subspan(static_cast<std::size_t>(j) * dim_, dim_);
  }

  float operator()(std::uint32_t coord, std::uint32_t j) const noexcept {
    return values_[static_cast<std::size_t>(j) * dim_ + coord];
  }

  /// Bitwise equality of shape and payload.
  bool same_content(const Dataset& other) const noexcept {
    return dim_ == other.dim_ && count_ == other.count_ &&
           std::memcmp(values_.data(), other.values_.data(), values_.size() * sizeof(float)) == 0;
  }

 private:
  std::uint32_t dim_ = 0;
  std::uint32_t count_ = 0;
  std::uint64_t id_offset_ = 0;
  std::vector<float> values_;
};

struct VectorStats {
  std::vector<float> sq_norms;
  std::vector<float> means;
};

// Sums run in double; results are stored as float.
inline VectorStats compute_stats(const Dataset& ds) {
  VectorStats stats;
  stats.sq_norms.resize(ds.count());
  stats.means.resize(ds.count());
  for (std::uint32_t j = 0; j < ds.count(); ++j) {
    double sq = 0.0, sum = 0.0;
    for (float v : ds.column(j)) {
      sq += static_cast<double>(v) * v;
      sum += v;
    }
    float sq_f = static_cast<float>(sq);
    if (!std::isfinite(sq_f)) throw FormatError("squared norm overflows float32", j);
    stats.sq_norms[j] = sq_f;
    stats.means[j] = static_cast<float>(sum / ds.dim());
  }
  return stats;
}

/// Subtracts each column's mean from every coordinate of that column.
/// `stats` must have been computed from `ds`.
inline Dataset center_dataset(const Dataset& ds, const VectorStats& stats) {
  if (stats.means.size() != ds.count()) throw ConfigError("stats do not match dataset");
  std::vector<float> out(ds.values().begin(), ds.values().end());
  for (std::uint32_t j = 0; j < ds.count(); ++j) {
    float* col = out.data() + static_cast<std::size_t>(j) * ds.dim();
    const double mean = stats.means[j];
    for (std::uint32_t i = 0; i < ds.dim(); ++i)
      col[i] = static_cast<float>(static_cast<double>(col[i]) - mean);
  }
  return Dataset(ds.dim(), ds.count(), std::move(out), ds.id_offset());
}

/// 64-bit FNV-1a over shape and payload bits. Used to tag graphs with the
/// inputs they were built from.
inline std::uint64_t content_hash(const Dataset& ds) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::uint32_t word) {
    for (int b = 0; b < 4; ++b) {
      h ^= (word >> (8 * b)) & 0xFFu;
      h *= 0x100000001b3ULL;
    }
  };
  mix(ds.dim());
  mix(ds.count());
  for (float v : ds.values()) mix(std::bit_cast<std::uint32_t>(v));
  return h;
}

namespace detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
               static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
  out.write(b, 4);
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::string format_float(float v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<unsigned char> read_all(std::istream& in) {
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace detail

inline Dataset parse_binary_dataset(std::span<const unsigned char> bytes) {
  if (bytes.size() < 16) throw FormatError("truncated dataset header", bytes.size());
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("bad magic, expected KNNG", 0);
  const std::uint32_t version = detail::get_u32(bytes.data() + 4);
  if (version != kDatasetVersion) throw FormatError("unsupported dataset version " + std::to_string(version), 4);
  const std::uint32_t dim = detail::get_u32(bytes.data() + 8);
  const std::uint32_t count = detail::get_u32(bytes.data() + 12);
  if (dim == 0) throw FormatError("dim must be positive", 8);
  if (count == 0) throw FormatError("count must be positive", 12);
  const std::uint64_t n = static_cast<std::uint64_t>(dim) * count;
  if (bytes.size() - 16 != n * 4)
    throw FormatError("payload size " + std::to_string(bytes.size() - 16) + " bytes, expected " +
                          std::to_string(n * 4),
                      16);
  std::vector<float> values(n);
  for (std::uint64_t i = 0; i < n; ++i)
    values[i] = std::bit_cast<float>(detail::get_u32(bytes.data() + 16 + 4 * i));
  return Dataset(dim, count, std::move(values));
}

/// One vector per line, comma separated. Blank lines are skipped.
/// FormatError positions are 1-based line numbers.
inline Dataset parse_csv_dataset(std::string_view text) {
  std::vector<float> values;
  std::uint32_t dim = 0, count = 0;
  std::uint64_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    std::size_t eol = text.find('\n');
    std::string_view line = text.substr(0, eol);
    text = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
    line = detail::trim(line);
    if (line.empty()) continue;

    std::uint32_t fields = 0;
    for (;;) {
      std::size_t comma = line.find(',');
      std::string_view tok = detail::trim(line.substr(0, comma));
      float v = 0.0f;
      auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (tok.empty() || res.ec != std::errc{} || res.ptr != tok.data() + tok.size())
        throw FormatError("bad number '" + std::string(tok) + "' in field " + std::to_string(fields + 1), line_no);
      if (!std::isfinite(v))
        throw FormatError("non-finite value in field " + std::to_string(fields + 1), line_no);
      values.push_back(v);
      ++fields;
      if (comma == std::string_view::npos) break;
      line = line.substr(comma + 1);
    }
    if (count == 0) {
      dim = fields;
    } else if (fields != dim) {
      throw FormatError("row has " + std::to_string(fields) + " fields, expected " + std::to_string(dim), line_no);
    }
    ++count;
  }
  if (count == 0) throw FormatError("empty CSV dataset", 0);
  // Rows are vectors, so the row-major text is already column-major storage.
  return Dataset(dim, count, std::move(values));
}

inline Dataset load_dataset(std::istream& in, DataFormat format) {
  std::vector<unsigned char> bytes = detail::read_all(in);
  if (format == DataFormat::binary) return parse_binary_dataset(bytes);
  return parse_csv_dataset(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

inline DataFormat format_from_path(const std::string& path) {
  auto dot = path.rfind('.');
  if (dot != std::string::npos && path.substr(dot) == ".csv") return DataFormat::csv;
  return DataFormat::binary;
}

inline Dataset load_dataset_file(const std::string& path, DataFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open input file " + path);
  return load_dataset(in, format);
}

inline void write_dataset(std::ostream& out, const Dataset& ds, DataFormat format) {
  if (format == DataFormat::binary) {
    out.write(kMagic, 4);
    detail::put_u32(out, kDatasetVersion);
    detail::put_u32(out, ds.dim());
    detail::put_u32(out, ds.count());
    for (float v : ds.values()) detail::put_u32(out, std::bit_cast<std::uint32_t>(v));
    return;
  }
  for (std::uint32_t j = 0; j < ds.count(); ++j) {
    auto col = ds.column(j);
    for (std::uint32_t i = 0; i < ds.dim(); ++i) {
      if (i) out << ',';
      out << detail::format_float(col[i]);
    }
    out << '\n';
  }
}

}  // namespace knng
