#include "adists/archive.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace adists {
namespace {

constexpr char kMagic[4] = {'T', 'N', 'S', 'A'};

static_assert(std::endian::native == std::endian::little,
              "archive I/O assumes a little-endian host");

template <typename U>
void put(std::vector<std::uint8_t>& out, U value) {
  std::uint8_t bytes[sizeof(U)];
  std::memcpy(bytes, &value, sizeof(U));
  out.insert(out.end(), bytes, bytes + sizeof(U));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename U>
  U get(const char* what) {
    U value;
    std::memcpy(&value, take(sizeof(U), what).data(), sizeof(U));
    return value;
  }

  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw ArchiveError(ArchiveError::Kind::Truncated,
                         std::string("archive truncated while reading ") + what +
                             " at byte " + std::to_string(pos_));
    }
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void WeightArchive::add(std::string name, Tensor tensor) {
  if (contains(name)) {
    throw ArchiveError(ArchiveError::Kind::DuplicateName,
                       "archive: duplicate entry name '" + name + "'");
  }
  entries_.push_back({std::move(name), std::move(tensor)});
}

void WeightArchive::set(const std::string& name, Tensor tensor) {
  for (auto& e : entries_) {
    if (e.name == name) {
      e.tensor = std::move(tensor);
      return;
    }
  }
  entries_.push_back({name, std::move(tensor)});
}

bool WeightArchive::contains(const std::string& name) const { return find(name) != nullptr; }

const Tensor* WeightArchive::find(const std::string& name) const {
  auto it = std::find_if(entries_.begin(), entries_.end(),
                         [&](const Entry& e) { return e.name == name; });
  return it == entries_.end() ? nullptr : &it->tensor;
}

const Tensor& WeightArchive::at(const std::string& name) const {
  if (const Tensor* t = find(name)) return *t;
  throw DataError("archive: missing entry '" + name + "'");
}

std::vector<std::uint8_t> serialize_archive(const WeightArchive& archive) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put<std::uint32_t>(out, kArchiveVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(archive.size()));
  for (const auto& [name, tensor] : archive.entries()) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.rank()));
    for (std::size_t d : tensor.shape()) put<std::uint64_t>(out, d);
    const auto* raw = reinterpret_cast<const std::uint8_t*>(tensor.data());
    out.insert(out.end(), raw, raw + tensor.size() * sizeof(float));
  }
  return out;
}

WeightArchive parse_archive(std::span<const std::uint8_t> bytes) {
  Reader in(bytes);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw ArchiveError(ArchiveError::Kind::BadMagic,
                       "archive: bad magic (expected \"TNSA\")");
  }
  in.take(4, "magic");
  const auto version = in.get<std::uint32_t>("version");
  if (version != kArchiveVersion) {
    throw ArchiveError(ArchiveError::Kind::UnsupportedVersion,
                       "archive: unsupported version " + std::to_string(version));
  }
  const auto count = in.get<std::uint32_t>("entry count");
  WeightArchive archive;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = in.get<std::uint32_t>("name length");
    const auto name_bytes = in.take(name_len, "entry name");
    std::string name(name_bytes.begin(), name_bytes.end());
    const auto rank = in.get<std::uint32_t>("rank");
    Shape shape(rank);
    std::size_t numel = 1;
    for (auto& d : shape) {
      d = static_cast<std::size_t>(in.get<std::uint64_t>("dims"));
      numel *= d;
    }
    if (numel > in.remaining() / sizeof(float)) {
      throw ArchiveError(ArchiveError::Kind::Truncated,
                         "archive truncated in payload of '" + name + "'");
    }
    const auto payload = in.take(numel * sizeof(float), "payload");
    std::vector<float> values(numel);
    std::memcpy(values.data(), payload.data(), payload.size());
    Tensor tensor(std::move(shape), std::move(values));
    if (!tensor.all_finite()) {
      throw ArchiveError(ArchiveError::Kind::NonFinite,
                         "archive: entry '" + name + "' contains non-finite values");
    }
    if (archive.contains(name)) {
      throw ArchiveError(ArchiveError::Kind::DuplicateName,
                         "archive: duplicate entry name '" + name + "'");
    }
    archive.add(std::move(name), std::move(tensor));
  }
  return archive;
}

void save_archive(const WeightArchive& archive, const std::filesystem::path& path) {
  const auto bytes = serialize_archive(archive);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw ArchiveError(ArchiveError::Kind::Io, "archive: cannot open " + path.string() +
                                                   " for writing");
  }
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw ArchiveError(ArchiveError::Kind::Io, "archive: write failed for " + path.string());
  }
}

WeightArchive load_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ArchiveError(ArchiveError::Kind::Io, "archive: cannot open " + path.string());
  }
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return parse_archive(bytes);
}

}  // namespace adists
