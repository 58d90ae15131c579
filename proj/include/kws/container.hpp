#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "kws/tensor.hpp"

namespace kws {

// Binary tensor container shared by checkpoints and feature archives:
//
//   "KWSCKPT1"                         8 bytes
//   version                            u32 LE
//   tensor count                       u32 LE
//   per tensor:
//     name length                      u16 LE, then UTF-8 name bytes
//     rank                             u8
//     extents                          rank x u32 LE
//     values                           float32 LE, row-major
//   checksum                           u64 LE, FNV-1a of every preceding byte

inline constexpr std::uint32_t kContainerVersion = 1;

struct ContainerEntry {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

struct Container {
  std::uint32_t version = kContainerVersion;
  std::vector<ContainerEntry> entries;

  const ContainerEntry* find(const std::string& name) const;
};

std::vector<std::uint8_t> encode_container(const Container& c);
/// Throws LoadError on bad magic, truncation, trailing bytes or checksum mismatch.
Container decode_container(std::span<const std::uint8_t> bytes);

void write_container_file(const std::filesystem::path& path, const Container& c);
Container read_container_file(const std::filesystem::path& path);

}  // namespace kws
