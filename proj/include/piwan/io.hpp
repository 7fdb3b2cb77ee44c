#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "piwan/common.hpp"

namespace piwan {

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; big-endian hosts are unsupported");

// Thin length-checked wrappers around binary streams. All integers and
// doubles are stored little-endian; strings are u64-length-prefixed.
class BinaryWriter {
 public:
  explicit BinaryWriter(const std::filesystem::path& path);

  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void i64(std::int64_t v);
  void f64(double v);
  void bytes(const void* data, std::size_t size);
  void str(const std::string& s);
  void close();

 private:
  std::ofstream out_;
  std::filesystem::path path_;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::filesystem::path& path);

  std::uint32_t u32();
  std::uint64_t u64();
  std::int64_t i64();
  double f64();
  void bytes(void* data, std::size_t size);
  std::string str();
  bool at_end();

 private:
  std::ifstream in_;
  std::filesystem::path path_;
};

}  // namespace piwan
