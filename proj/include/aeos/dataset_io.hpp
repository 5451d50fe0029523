#pragma once

// CIFAR-10 binary batches and the flat float64 dataset cache.
//
// CIFAR-10 record: 1 label byte followed by 3072 pixel bytes, stored as three
// 32x32 row-major planes (R, G, B). 3073 bytes per record, no header.
//
// Cache file: 16-byte header of four little-endian uint32 (magic "AEDS", n, d, k),
// then n*d float64 inputs (row-major, little-endian), then n float64 labels.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "aeos/network.hpp"

namespace aeos {

inline constexpr std::size_t kCifarRecordBytes = 3073;
inline constexpr std::size_t kCifarSide = 32;
inline constexpr std::size_t kCifarPixels = 3 * kCifarSide * kCifarSide;
inline constexpr std::uint32_t kCacheMagic = 0x53444541;  // "AEDS" little-endian

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::vector<unsigned char> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Files making up a CIFAR-10 source: a single .bin file, or the data_batch_*.bin
/// (train) / test_batch.bin (test) files inside a directory.
inline std::vector<std::filesystem::path> cifar_files(const std::filesystem::path& path,
                                                      Split split) {
  namespace fs = std::filesystem;
  if (fs::is_regular_file(path)) return {path};
  if (!fs::is_directory(path)) throw std::runtime_error("no CIFAR-10 data at " + path.string());
  std::vector<fs::path> files;
  if (split == Split::Test) {
    files.push_back(path / "test_batch.bin");
  } else {
    for (int i = 1; i <= 5; ++i) files.push_back(path / ("data_batch_" + std::to_string(i) + ".bin"));
  }
  std::vector<fs::path> present;
  for (auto& f : files) {
    if (fs::exists(f)) present.push_back(f);
  }
  if (present.empty()) throw std::runtime_error("no CIFAR-10 batch files in " + path.string());
  return present;
}

}  // namespace detail

/// First n records, pixels scaled to [0, 1], per-channel mean (over the n
/// examples) subtracted. With `downsample` set, each channel plane is
/// area-averaged to side x side (side must divide 32).
inline Dataset load_cifar10_subset(const std::filesystem::path& path, std::size_t n,
                                   std::optional<std::size_t> downsample = std::nullopt,
                                   Split split = Split::Train,
                                   std::array<double, 3>* channel_means = nullptr) {
  const std::size_t side = downsample.value_or(kCifarSide);
  if (side == 0 || kCifarSide % side != 0) {
    throw std::invalid_argument("downsample side must divide 32");
  }
  const std::size_t f = kCifarSide / side;
  const std::size_t d = 3 * side * side;

  Dataset ds;
  ds.classes = 10;
  ds.split = split;
  ds.inputs.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  ds.labels.reserve(n);

  std::size_t row = 0;
  for (const auto& file : detail::cifar_files(path, split)) {
    if (row == n) break;
    const auto bytes = detail::read_bytes(file);
    if (bytes.size() % kCifarRecordBytes != 0) {
      throw FormatError(file.string() + ": size is not a multiple of 3073 bytes");
    }
    const std::size_t records = bytes.size() / kCifarRecordBytes;
    for (std::size_t r = 0; r < records && row < n; ++r, ++row) {
      const unsigned char* rec = bytes.data() + r * kCifarRecordBytes;
      if (rec[0] > 9) throw FormatError(file.string() + ": label byte out of range");
      ds.labels.push_back(rec[0]);
      const unsigned char* px = rec + 1;
      for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t i = 0; i < side; ++i) {
          for (std::size_t j = 0; j < side; ++j) {
            double acc = 0.0;
            for (std::size_t di = 0; di < f; ++di) {
              for (std::size_t dj = 0; dj < f; ++dj) {
                acc += px[c * kCifarSide * kCifarSide + (i * f + di) * kCifarSide + (j * f + dj)];
              }
            }
            ds.inputs(static_cast<Eigen::Index>(row),
                      static_cast<Eigen::Index>(c * side * side + i * side + j)) =
                acc / (255.0 * static_cast<double>(f * f));
          }
        }
      }
    }
  }
  if (row < n) {
    throw std::out_of_range("requested " + std::to_string(n) + " examples but only " +
                            std::to_string(row) + " available");
  }
  const auto plane = static_cast<Eigen::Index>(side * side);
  for (Eigen::Index c = 0; c < 3; ++c) {
    auto block = ds.inputs.middleCols(c * plane, plane);
    const double mean = block.mean();
    block.array() -= mean;
    if (channel_means) (*channel_means)[static_cast<std::size_t>(c)] = mean;
  }
  return ds;
}

namespace detail {

template <class T>
void put_le(std::ostream& out, T value) {
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T get_le(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw FormatError("truncated file");
  return value;
}

}  // namespace detail

inline void write_dataset_cache(const std::filesystem::path& path, const Dataset& ds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  detail::put_le<std::uint32_t>(out, kCacheMagic);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ds.size()));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ds.dim()));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ds.classes));
  for (Eigen::Index i = 0; i < ds.inputs.rows(); ++i) {
    for (Eigen::Index j = 0; j < ds.inputs.cols(); ++j) detail::put_le<double>(out, ds.inputs(i, j));
  }
  for (int y : ds.labels) detail::put_le<double>(out, static_cast<double>(y));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline Dataset read_dataset_cache(const std::filesystem::path& path, Split split = Split::Train) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  if (detail::get_le<std::uint32_t>(in) != kCacheMagic) throw FormatError("bad dataset cache magic");
  const auto n = detail::get_le<std::uint32_t>(in);
  const auto d = detail::get_le<std::uint32_t>(in);
  const auto k = detail::get_le<std::uint32_t>(in);
  Dataset ds;
  ds.classes = static_cast<int>(k);
  ds.split = split;
  ds.inputs.resize(n, d);
  for (Eigen::Index i = 0; i < ds.inputs.rows(); ++i) {
    for (Eigen::Index j = 0; j < ds.inputs.cols(); ++j) ds.inputs(i, j) = detail::get_le<double>(in);
  }
  ds.labels.resize(n);
  for (auto& y : ds.labels) y = static_cast<int>(detail::get_le<double>(in));
  ds.validate();
  return ds;
}

/// Parameter snapshot: uint64 magic "AEOSPARM", uint64 count, count float64.
inline constexpr std::uint64_t kSnapshotMagic = 0x4D524150534F4541ULL;

inline void write_vector(const std::filesystem::path& path, const Vec& v) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  detail::put_le<std::uint64_t>(out, kSnapshotMagic);
  detail::put_le<std::uint64_t>(out, static_cast<std::uint64_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) detail::put_le<double>(out, v[i]);
}

inline Vec read_vector(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  if (detail::get_le<std::uint64_t>(in) != kSnapshotMagic) throw FormatError("bad snapshot magic");
  const auto n = detail::get_le<std::uint64_t>(in);
  Vec v(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = detail::get_le<double>(in);
  return v;
}

}  // namespace aeos
