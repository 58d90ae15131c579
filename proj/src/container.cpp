#include "kws/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "kws/audio.hpp"
#include "kws/random.hpp"

namespace kws {
namespace {

constexpr char kMagic[8] = {'K', 'W', 'S', 'C', 'K', 'P', 'T', '1'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <typename U>
  void le(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
  }
  std::vector<std::uint8_t>& out() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}
  template <typename U>
  U le() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(b_[pos_ + i]) << (8 * i));
    pos_ += sizeof(U);
    return v;
  }
  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto s = b_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > b_.size()) throw LoadError("container: truncated at byte " + std::to_string(pos_));
  }
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

std::uint64_t checksum(std::span<const std::uint8_t> bytes) {
  return fnv1a64(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

}  // namespace

const ContainerEntry* Container::find(const std::string& name) const {
  for (const auto& e : entries) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

std::vector<std::uint8_t> encode_container(const Container& c) {
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.le<std::uint32_t>(c.version);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(c.entries.size()));
  for (const auto& e : c.entries) {
    if (e.name.size() > 0xffff) throw ContractError("container: name too long: " + e.name.substr(0, 40));
    if (e.shape.empty() || e.shape.size() > 0xff) throw ContractError("container: bad rank for " + e.name);
    if (shape_numel(e.shape) != e.values.size()) throw ContractError("container: value count mismatch for " + e.name);
    w.le<std::uint16_t>(static_cast<std::uint16_t>(e.name.size()));
    w.bytes(e.name.data(), e.name.size());
    w.le<std::uint8_t>(static_cast<std::uint8_t>(e.shape.size()));
    for (std::size_t d : e.shape) w.le<std::uint32_t>(static_cast<std::uint32_t>(d));
    for (float v : e.values) w.le<std::uint32_t>(std::bit_cast<std::uint32_t>(v));
  }
  const std::uint64_t sum = checksum(w.out());
  w.le<std::uint64_t>(sum);
  return std::move(w.out());
}

Container decode_container(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < sizeof kMagic + 16 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw LoadError("container: bad magic (expected KWSCKPT1)");
  }
  const auto body = bytes.first(bytes.size() - 8);
  Reader tail(bytes.last(8));
  if (tail.le<std::uint64_t>() != checksum(body)) throw LoadError("container: checksum mismatch");

  Reader r(body);
  r.take(sizeof kMagic);
  Container c;
  c.version = r.le<std::uint32_t>();
  if (c.version != kContainerVersion) {
    throw LoadError("container: unsupported version " + std::to_string(c.version));
  }
  const auto count = r.le<std::uint32_t>();
  c.entries.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    ContainerEntry e;
    const auto len = r.le<std::uint16_t>();
    const auto name = r.take(len);
    e.name.assign(name.begin(), name.end());
    const auto rank = r.le<std::uint8_t>();
    if (rank == 0) throw LoadError("container: tensor " + e.name + " has rank 0");
    for (std::uint8_t d = 0; d < rank; ++d) e.shape.push_back(r.le<std::uint32_t>());
    e.values.resize(shape_numel(e.shape));
    for (auto& v : e.values) v = std::bit_cast<float>(r.le<std::uint32_t>());
    c.entries.push_back(std::move(e));
  }
  if (r.pos() != body.size()) throw LoadError("container: trailing bytes after last tensor");
  return c;
}

void write_container_file(const std::filesystem::path& path, const Container& c) {
  const auto bytes = encode_container(c);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("short write to " + path.string());
}

Container read_container_file(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return decode_container(bytes);
  } catch (const LoadError& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
}

}  // namespace kws
