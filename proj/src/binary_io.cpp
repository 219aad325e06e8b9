#include "prefixrank/binary_io.hpp"

#include <bit>
#include <cstring>
#include <istream>
#include <ostream>

namespace prefixrank {
namespace {

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    std::memcpy(&v, b, sizeof(T));
  }
  return v;
}

template <typename T>
void put(std::ostream& out, T v) {
  v = to_little(v);
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

}  // namespace

void BinaryWriter::bytes(std::string_view raw) { out_.write(raw.data(), static_cast<std::streamsize>(raw.size())); }
void BinaryWriter::u32(std::uint32_t v) { put(out_, v); }
void BinaryWriter::u64(std::uint64_t v) { put(out_, v); }
void BinaryWriter::f32(float v) { put(out_, std::bit_cast<std::uint32_t>(v)); }
void BinaryWriter::f64(double v) { put(out_, std::bit_cast<std::uint64_t>(v)); }
void BinaryWriter::str(std::string_view s) {
  u32(static_cast<std::uint32_t>(s.size()));
  bytes(s);
}

void BinaryReader::read_exact(char* dst, std::size_t n) {
  in_.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in_.gcount()) != n) {
    throw CheckpointError(CheckpointError::Kind::truncated, "truncated checkpoint: unexpected end of file");
  }
}

std::string BinaryReader::bytes(std::size_t n) {
  std::string s(n, '\0');
  if (n > 0) read_exact(s.data(), n);
  return s;
}

std::uint32_t BinaryReader::u32() {
  std::uint32_t v;
  read_exact(reinterpret_cast<char*>(&v), sizeof v);
  return to_little(v);
}

std::uint64_t BinaryReader::u64() {
  std::uint64_t v;
  read_exact(reinterpret_cast<char*>(&v), sizeof v);
  return to_little(v);
}

float BinaryReader::f32() { return std::bit_cast<float>(u32()); }
double BinaryReader::f64() { return std::bit_cast<double>(u64()); }

std::string BinaryReader::str() {
  const std::uint32_t n = u32();
  if (n > (1u << 24)) throw CheckpointError(CheckpointError::Kind::corrupt, "corrupt checkpoint: string too long");
  return bytes(n);
}

void BinaryReader::expect_header(std::string_view magic, std::uint32_t expected_version, std::string_view what) {
  std::string got(magic.size(), '\0');
  in_.read(got.data(), static_cast<std::streamsize>(got.size()));
  if (static_cast<std::size_t>(in_.gcount()) != magic.size() || got != magic) {
    throw CheckpointError(CheckpointError::Kind::not_a_checkpoint,
                          "not a checkpoint: missing " + std::string(what) + " magic bytes");
  }
  const std::uint32_t version = u32();
  if (version != expected_version) {
    throw CheckpointError(CheckpointError::Kind::version_mismatch,
                          std::string(what) + " checkpoint version " + std::to_string(version) +
                              " is not supported (expected " + std::to_string(expected_version) + ")");
  }
}

}  // namespace prefixrank
