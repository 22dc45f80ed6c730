#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "adists/tensor.hpp"

namespace adists {

// Portable weight archive. Layout, all integers little-endian:
//
//   "TNSA"  u32 version  u32 entry_count
//   per entry: u32 name_length, name bytes (UTF-8), u32 rank, u64 dims[rank],
//              f32 payload[prod(dims)] (IEEE-754 binary32, little-endian)
//
// Names are unique within an archive and entry order is preserved.
class ArchiveError : public DataError {
 public:
  enum class Kind { Io, BadMagic, UnsupportedVersion, Truncated, DuplicateName, NonFinite };

  ArchiveError(Kind kind, const std::string& message)
      : DataError(message), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

inline constexpr std::uint32_t kArchiveVersion = 1;

class WeightArchive {
 public:
  struct Entry {
    std::string name;
    Tensor tensor;

    friend bool operator==(const Entry&, const Entry&) = default;
  };

  WeightArchive() = default;

  /// Appends an entry; throws ArchiveError(DuplicateName) if the name exists.
  void add(std::string name, Tensor tensor);
  /// Replaces an existing entry's tensor or appends a new one.
  void set(const std::string& name, Tensor tensor);

  bool contains(const std::string& name) const;
  const Tensor& at(const std::string& name) const;
  const Tensor* find(const std::string& name) const;

  const std::vector<Entry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }

  friend bool operator==(const WeightArchive&, const WeightArchive&) = default;

 private:
  std::vector<Entry> entries_;
};

std::vector<std::uint8_t> serialize_archive(const WeightArchive& archive);
WeightArchive parse_archive(std::span<const std::uint8_t> bytes);

void save_archive(const WeightArchive& archive, const std::filesystem::path& path);
WeightArchive load_archive(const std::filesystem::path& path);

}  // namespace adists
