#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace scan {

using Vec3 = std::array<double, 3>;

// Dense row-major matrix. Rows are the "points" or "voxels" axis everywhere
// in this library, columns are channels.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return rows_ == 0; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Largest absolute elementwise difference; shapes must agree.
double max_abs_diff(const Matrix& a, const Matrix& b);
double frobenius(const Matrix& a);

// Horizontal concatenation of equally tall matrices.
Matrix hconcat(std::span<const Matrix* const> parts);

// ---------------------------------------------------------------------------
// Errors. Every failure mode named by an operation contract has its own type
// so callers (and tests) can tell them apart.

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class RangeError : public Error {
 public:
  using Error::Error;
};
class DuplicateKeyError : public Error {
 public:
  using Error::Error;
};
class AlignmentError : public Error {
 public:
  using Error::Error;
};
class ScaleError : public Error {
 public:
  using Error::Error;
};
class ShapeError : public Error {
 public:
  using Error::Error;
};
class ConsistencyError : public Error {
 public:
  using Error::Error;
};
class ConfigError : public Error {
 public:
  using Error::Error;
};

enum class FormatErrc {
  kTruncated,
  kBadLength,
  kBadMagic,
  kDuplicateName,
  kBadRank,
  kIo,
};

const char* to_string(FormatErrc code);

class FormatError : public Error {
 public:
  FormatError(FormatErrc code, std::string what, std::uint64_t byte_offset = 0);
  FormatErrc code() const { return code_; }
  std::uint64_t byte_offset() const { return offset_; }

 private:
  FormatErrc code_;
  std::uint64_t offset_;
};

// Deterministic seed derivation (splitmix64 mixing). Used to give every
// (layer, head, instance, ...) its own reproducible random stream.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag);

template <typename... Tags>
std::uint64_t derive_seed(std::uint64_t seed, Tags... tags) {
  ((seed = mix_seed(seed, static_cast<std::uint64_t>(tags))), ...);
  return seed;
}

}  // namespace scan
