// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hava::io {

// Byte layout (all integers little-endian):
//   magic "HAVA" | version u32 = 1 | entry count u32
//   per entry: name length u16 | name bytes | rank u8 | dims u32 * rank |
//              dtype u8 | payload, row-major
// dtype 0 stores IEEE-754 binary32, dtype 1 stores binary64 (checkpoints).

enum class DType : std::uint8_t { F32 = 0, F64 = 1 };

struct TensorEntry {
  std::string name;
  std::vector<std::uint32_t> dims;
  DType dtype = DType::F32;
  /// Held in double precision in memory; narrowed to float when dtype is F32.
  std::vector<double> values;

  std::size_t element_count() const;
  friend bool operator==(const TensorEntry&, const TensorEntry&) = default;
};

class FormatError : public std::runtime_error {
 public:
  enum class Kind { BadMagic, BadVersion, DuplicateName, Truncated, BadEntry, Io };
  FormatError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

class TensorContainer {
 public:
  TensorContainer() = default;

  /// Appends an entry; throws FormatError(DuplicateName) or BadEntry when
  /// the entry violates the container invariants.
  void add(TensorEntry entry);
  void add(std::string name, std::vector<std::uint32_t> dims, std::vector<double> values,
           DType dtype = DType::F32);

  const std::vector<TensorEntry>& entries() const noexcept { return entries_; }
  const TensorEntry* find(std::string_view name) const;
  const TensorEntry& at(std::string_view name) const;
  bool contains(std::string_view name) const { return find(name) != nullptr; }

  std::vector<std::uint8_t> serialize() const;
  static TensorContainer deserialize(std::span<const std::uint8_t> bytes);

  friend bool operator==(const TensorContainer&, const TensorContainer&) = default;

 private:
  std::vector<TensorEntry> entries_;
};

void write_container(const TensorContainer& container, const std::filesystem::path& path);
TensorContainer read_container(const std::filesystem::path& path);

}  // namespace hava::io
