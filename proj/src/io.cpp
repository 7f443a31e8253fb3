#include "scan/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace scan {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

namespace {

class Writer {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void raw(const std::string& s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  void put(std::uint32_t v, int n) {
    for (int i = 0; i < n; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  std::uint8_t u8(const char* what) { return static_cast<std::uint8_t>(get(1, what)); }
  std::uint16_t u16(const char* what) { return static_cast<std::uint16_t>(get(2, what)); }
  std::uint32_t u32(const char* what) { return get(4, what); }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
  std::string raw(std::size_t n, const char* what) {
    need(n, what);
    std::string s(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n) {
      throw FormatError(FormatErrc::kTruncated, std::string("unexpected end of data reading ") + what, pos_);
    }
  }

 private:
  std::uint32_t get(int n, const char* what) {
    need(static_cast<std::size_t>(n), what);
    std::uint32_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

constexpr char kMagic[] = "SCANWT01";
constexpr std::size_t kMagicLen = 8;
constexpr std::uint8_t kMaxRank = 8;

}  // namespace

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatErrc::kIo, "cannot open " + path.string() + " for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatErrc::kIo, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(FormatErrc::kIo, "write failed for " + path.string());
}

PointCloud parse_point_bin(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() % 16 != 0) {
    throw FormatError(FormatErrc::kTruncated,
                      "point file length " + std::to_string(bytes.size()) + " is not a multiple of 16",
                      bytes.size() - bytes.size() % 16);
  }
  const std::size_t n = bytes.size() / 16;
  Reader r(bytes);
  Matrix m(n, 4);
  for (double& v : m.data()) v = static_cast<double>(r.f32("point"));
  return PointCloud(std::move(m));
}

std::vector<std::uint8_t> serialize_point_bin(const PointCloud& cloud) {
  Writer w;
  for (double v : cloud.data().data()) w.f32(static_cast<float>(v));
  return w.take();
}

PointCloud read_point_bin(const std::filesystem::path& path) { return parse_point_bin(read_file(path)); }
void write_point_bin(const std::filesystem::path& path, const PointCloud& cloud) {
  write_file(path, serialize_point_bin(cloud));
}

PointLabels parse_labels(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() % 4 != 0) {
    throw FormatError(FormatErrc::kBadLength,
                      "label file length " + std::to_string(bytes.size()) + " is not a multiple of 4",
                      bytes.size() - bytes.size() % 4);
  }
  Reader r(bytes);
  PointLabels l;
  const std::size_t n = bytes.size() / 4;
  l.semantic.resize(n);
  l.instance.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::tie(l.semantic[i], l.instance[i]) = decode_label(r.u32("label"));
  }
  return l;
}

std::vector<std::uint8_t> serialize_labels(const PointLabels& labels) {
  if (labels.semantic.size() != labels.instance.size()) throw ShapeError("labels: semantic/instance length mismatch");
  Writer w;
  for (std::size_t i = 0; i < labels.size(); ++i) w.u32(encode_label(labels.semantic[i], labels.instance[i]));
  return w.take();
}

PointLabels read_labels(const std::filesystem::path& path) { return parse_labels(read_file(path)); }

PointLabels read_labels(const std::filesystem::path& path, std::size_t expected_points) {
  const auto bytes = read_file(path);
  if (bytes.size() != 4 * expected_points) {
    throw FormatError(FormatErrc::kBadLength,
                      path.string() + " holds " + std::to_string(bytes.size()) + " bytes, expected " +
                          std::to_string(4 * expected_points),
                      std::min(bytes.size(), 4 * expected_points));
  }
  return parse_labels(bytes);
}

void write_labels(const std::filesystem::path& path, const PointLabels& labels) {
  write_file(path, serialize_labels(labels));
}

std::size_t NamedTensor::numel() const {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

void ModelWeights::add(std::string name, NamedTensor tensor) {
  if (tensor.values.size() != tensor.numel()) throw ShapeError("weight " + name + ": value count != product of dims");
  if (tensors_.count(name)) throw DuplicateKeyError("weight " + name + " already present");
  tensors_.emplace(std::move(name), std::move(tensor));
}

const NamedTensor& ModelWeights::at(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw ConsistencyError("missing weight tensor " + name);
  return it->second;
}

NamedTensor& ModelWeights::at(const std::string& name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw ConsistencyError("missing weight tensor " + name);
  return it->second;
}

std::vector<std::uint8_t> serialize_weights(const ModelWeights& weights) {
  Writer w;
  w.raw(std::string(kMagic, kMagicLen));
  w.u32(static_cast<std::uint32_t>(weights.size()));
  for (const auto& [name, t] : weights.tensors()) {
    if (name.size() > 0xFFFF) throw ShapeError("weight name too long: " + name);
    if (t.dims.size() > kMaxRank) throw ShapeError("weight rank too large: " + name);
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.raw(name);
    w.u8(static_cast<std::uint8_t>(t.dims.size()));
    for (auto d : t.dims) w.u32(d);
    for (float v : t.values) w.f32(v);
  }
  return w.take();
}

ModelWeights parse_weights(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (bytes.size() < kMagicLen || std::memcmp(bytes.data(), kMagic, kMagicLen) != 0) {
    throw FormatError(FormatErrc::kBadMagic, "not a weight file", 0);
  }
  r.raw(kMagicLen, "magic");
  const std::uint32_t count = r.u32("tensor count");
  ModelWeights out;
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::size_t at = r.pos();
    const std::uint16_t len = r.u16("name length");
    std::string name = r.raw(len, "name");
    const std::size_t rank_at = r.pos();
    const std::uint8_t rank = r.u8("rank");
    if (rank > kMaxRank) {
      throw FormatError(FormatErrc::kBadRank, "tensor " + name + " has rank " + std::to_string(rank), rank_at);
    }
    NamedTensor nt;
    for (std::uint8_t d = 0; d < rank; ++d) nt.dims.push_back(r.u32("dim"));
    const std::size_t n = nt.numel();
    if (n > r.remaining() / 4) r.need(n * 4, "tensor values");
    nt.values.resize(n);
    for (float& v : nt.values) v = r.f32("tensor values");
    if (out.contains(name)) {
      throw FormatError(FormatErrc::kDuplicateName, "tensor " + name + " appears twice", at);
    }
    out.add(std::move(name), std::move(nt));
  }
  if (r.remaining() != 0) {
    throw FormatError(FormatErrc::kBadLength, std::to_string(r.remaining()) + " trailing bytes", r.pos());
  }
  return out;
}

ModelWeights read_weights(const std::filesystem::path& path) { return parse_weights(read_file(path)); }
void write_weights(const std::filesystem::path& path, const ModelWeights& w) { write_file(path, serialize_weights(w)); }

}  // namespace scan
