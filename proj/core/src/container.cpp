// SPDX-License-Identifier: Apache-2.0
#include "hava/container.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace hava::io {

namespace {

constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { le(v, 2); }
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void bytes(std::string_view s) { out_.insert(out_.end(), s.begin(), s.end()); }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
  }
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}
  std::uint8_t u8(const char* what) { return static_cast<std::uint8_t>(le(1, what)); }
  std::uint16_t u16(const char* what) { return static_cast<std::uint16_t>(le(2, what)); }
  std::uint32_t u32(const char* what) { return static_cast<std::uint32_t>(le(4, what)); }
  std::uint64_t u64(const char* what) { return le(8, what); }
  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return b_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) {
    if (remaining() < n) {
      throw FormatError(FormatError::Kind::Truncated, std::string("HAVA container truncated while reading ") + what);
    }
  }
  std::uint64_t le(int n, const char* what) {
    need(static_cast<std::size_t>(n), what);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(b_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

}  // namespace

std::size_t TensorEntry::element_count() const {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

void TensorContainer::add(TensorEntry entry) {
  using K = FormatError::Kind;
  if (entry.name.size() > 0xffff) throw FormatError(K::BadEntry, "entry name too long: " + entry.name);
  if (entry.dims.empty() || entry.dims.size() > 0xff) {
    throw FormatError(K::BadEntry, "entry '" + entry.name + "' must have rank in [1, 255]");
  }
  for (auto d : entry.dims) {
    if (d < 1) throw FormatError(K::BadEntry, "entry '" + entry.name + "' has a zero dimension");
  }
  if (entry.element_count() != entry.values.size()) {
    throw FormatError(K::BadEntry, "entry '" + entry.name + "': dims describe " +
                                       std::to_string(entry.element_count()) + " values, payload has " +
                                       std::to_string(entry.values.size()));
  }
  if (find(entry.name) != nullptr) throw FormatError(K::DuplicateName, "duplicate entry name '" + entry.name + "'");
  entries_.push_back(std::move(entry));
}

void TensorContainer::add(std::string name, std::vector<std::uint32_t> dims, std::vector<double> values,
                          DType dtype) {
  add(TensorEntry{std::move(name), std::move(dims), dtype, std::move(values)});
}

const TensorEntry* TensorContainer::find(std::string_view name) const {
  for (const auto& e : entries_)
    if (e.name == name) return &e;
  return nullptr;
}

const TensorEntry& TensorContainer::at(std::string_view name) const {
  if (const auto* e = find(name)) return *e;
  throw std::out_of_range("container has no entry named '" + std::string(name) + "'");
}

std::vector<std::uint8_t> TensorContainer::serialize() const {
  Writer w;
  w.bytes("HAVA");
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(entries_.size()));
  for (const auto& e : entries_) {
    w.u16(static_cast<std::uint16_t>(e.name.size()));
    w.bytes(e.name);
    w.u8(static_cast<std::uint8_t>(e.dims.size()));
    for (auto d : e.dims) w.u32(d);
    w.u8(static_cast<std::uint8_t>(e.dtype));
    if (e.dtype == DType::F32) {
      for (double v : e.values) w.u32(std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    } else {
      for (double v : e.values) w.u64(std::bit_cast<std::uint64_t>(v));
    }
  }
  return w.take();
}

TensorContainer TensorContainer::deserialize(std::span<const std::uint8_t> bytes) {
  using K = FormatError::Kind;
  Reader r(bytes);
  if (r.str(4, "magic") != "HAVA") throw FormatError(K::BadMagic, "not a HAVA container (bad magic)");
  if (const auto v = r.u32("version"); v != kVersion) {
    throw FormatError(K::BadVersion, "unsupported HAVA container version " + std::to_string(v));
  }
  const auto count = r.u32("entry count");
  TensorContainer c;
  for (std::uint32_t i = 0; i < count; ++i) {
    TensorEntry e;
    e.name = r.str(r.u16("name length"), "entry name");
    const auto rank = r.u8("rank");
    if (rank == 0) throw FormatError(K::BadEntry, "entry '" + e.name + "' has rank 0");
    for (std::uint8_t k = 0; k < rank; ++k) e.dims.push_back(r.u32("dims"));
    const auto dtype = r.u8("dtype");
    if (dtype > 1) throw FormatError(K::BadEntry, "entry '" + e.name + "' has unknown dtype " + std::to_string(dtype));
    e.dtype = static_cast<DType>(dtype);
    const std::size_t n = e.element_count();
    const std::size_t width = e.dtype == DType::F32 ? 4 : 8;
    if (n > r.remaining() / width) {
      throw FormatError(K::Truncated, "HAVA container truncated in payload of '" + e.name + "'");
    }
    e.values.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      e.values[k] = e.dtype == DType::F32 ? static_cast<double>(std::bit_cast<float>(r.u32("payload")))
                                          : std::bit_cast<double>(r.u64("payload"));
    }
    c.add(std::move(e));
  }
  return c;
}

void write_container(const TensorContainer& container, const std::filesystem::path& path) {
  const auto bytes = container.serialize();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError(FormatError::Kind::Io, "cannot write container " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(FormatError::Kind::Io, "write failed for " + path.string());
}

TensorContainer read_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatError::Kind::Io, "cannot open container " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return TensorContainer::deserialize(bytes);
}

}  // namespace hava::io
