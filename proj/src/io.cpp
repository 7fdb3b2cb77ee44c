#include "piwan/io.hpp"

#include <cstring>

namespace piwan {

BinaryWriter::BinaryWriter(const std::filesystem::path& path) : path_(path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  out_.open(path, std::ios::binary | std::ios::trunc);
  if (!out_) throw IoError("cannot open for writing: " + path.string());
}

void BinaryWriter::u32(std::uint32_t v) { bytes(&v, sizeof(v)); }
void BinaryWriter::u64(std::uint64_t v) { bytes(&v, sizeof(v)); }
void BinaryWriter::i64(std::int64_t v) { bytes(&v, sizeof(v)); }
void BinaryWriter::f64(double v) { bytes(&v, sizeof(v)); }

void BinaryWriter::bytes(const void* data, std::size_t size) {
  out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
  if (!out_) throw IoError("write failed: " + path_.string());
}

void BinaryWriter::str(const std::string& s) {
  u64(s.size());
  bytes(s.data(), s.size());
}

void BinaryWriter::close() {
  out_.close();
  if (!out_) throw IoError("close failed: " + path_.string());
}

BinaryReader::BinaryReader(const std::filesystem::path& path) : path_(path) {
  in_.open(path, std::ios::binary);
  if (!in_) throw IoError("cannot open for reading: " + path.string());
}

std::uint32_t BinaryReader::u32() {
  std::uint32_t v;
  bytes(&v, sizeof(v));
  return v;
}

std::uint64_t BinaryReader::u64() {
  std::uint64_t v;
  bytes(&v, sizeof(v));
  return v;
}

std::int64_t BinaryReader::i64() {
  std::int64_t v;
  bytes(&v, sizeof(v));
  return v;
}

double BinaryReader::f64() {
  double v;
  bytes(&v, sizeof(v));
  return v;
}

void BinaryReader::bytes(void* data, std::size_t size) {
  in_.read(static_cast<char*>(data), static_cast<std::streamsize>(size));
  if (in_.gcount() != static_cast<std::streamsize>(size)) {
    throw IoError("unexpected end of file: " + path_.string());
  }
}

std::string BinaryReader::str() {
  const std::uint64_t n = u64();
  if (n > (1ULL << 32)) throw IoError("corrupt string length in " + path_.string());
  std::string s(n, '\0');
  bytes(s.data(), n);
  return s;
}

bool BinaryReader::at_end() { return in_.peek() == std::ifstream::traits_type::eof(); }

}  // namespace piwan
