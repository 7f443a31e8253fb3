#pragma once

// On-disk formats. All multi-byte values are little-endian.
//
//   .bin    N x 4 float32 (x, y, z, intensity)
//   .label  N x uint32, low 16 bits semantic id, high 16 bits instance id
//   weights "SCANWT01", u32 tensor count, then per tensor: u16 name length,
//           UTF-8 name, u8 rank, u32 dims[rank], float32 values (row-major)

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "scan/voxelizer.hpp"

namespace scan {

constexpr std::pair<std::uint16_t, std::uint16_t> decode_label(std::uint32_t word) {
  return {static_cast<std::uint16_t>(word & 0xFFFFu), static_cast<std::uint16_t>(word >> 16)};
}
constexpr std::uint32_t encode_label(std::uint16_t semantic, std::uint16_t instance) {
  return static_cast<std::uint32_t>(semantic) | (static_cast<std::uint32_t>(instance) << 16);
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

PointCloud parse_point_bin(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> serialize_point_bin(const PointCloud& cloud);
PointCloud read_point_bin(const std::filesystem::path& path);
void write_point_bin(const std::filesystem::path& path, const PointCloud& cloud);

PointLabels parse_labels(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> serialize_labels(const PointLabels& labels);
// Throws FormatError(kBadLength) when the file does not hold exactly
// `expected_points` words.
PointLabels read_labels(const std::filesystem::path& path, std::size_t expected_points);
PointLabels read_labels(const std::filesystem::path& path);
void write_labels(const std::filesystem::path& path, const PointLabels& labels);

struct NamedTensor {
  std::vector<std::uint32_t> dims;
  std::vector<float> values;

  std::size_t numel() const;
  bool operator==(const NamedTensor&) const = default;
};

// Named float tensors, ordered by name.
class ModelWeights {
 public:
  void add(std::string name, NamedTensor tensor);  // DuplicateKeyError on reuse
  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
  const NamedTensor& at(const std::string& name) const;
  NamedTensor& at(const std::string& name);
  const std::map<std::string, NamedTensor>& tensors() const { return tensors_; }
  std::size_t size() const { return tensors_.size(); }

  bool operator==(const ModelWeights&) const = default;

 private:
  std::map<std::string, NamedTensor> tensors_;
};

std::vector<std::uint8_t> serialize_weights(const ModelWeights& w);
// Errors: kBadMagic, kTruncated (with byte offset), kDuplicateName, kBadRank,
// kBadLength for trailing bytes.
ModelWeights parse_weights(const std::vector<std::uint8_t>& bytes);
ModelWeights read_weights(const std::filesystem::path& path);
void write_weights(const std::filesystem::path& path, const ModelWeights& w);

}  // namespace scan
