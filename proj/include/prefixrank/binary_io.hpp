#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>

#include "prefixrank/types.hpp"

namespace prefixrank {

/// Raised by checkpoint readers. `kind()` separates the failure classes
/// callers need to tell apart.
class CheckpointError : public Error {
 public:
  enum class Kind { not_a_checkpoint, version_mismatch, truncated, corrupt, io };

  CheckpointError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// Little-endian primitive writer.
class BinaryWriter {
 public:
  explicit BinaryWriter(std::ostream& out) : out_(out) {}

  void bytes(std::string_view raw);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f32(float v);
  void f64(double v);
  /// u32 length followed by the raw bytes.
  void str(std::string_view s);

 private:
  std::ostream& out_;
};

/// Little-endian primitive reader; running out of input raises
/// CheckpointError(truncated).
class BinaryReader {
 public:
  explicit BinaryReader(std::istream& in) : in_(in) {}

  std::string bytes(std::size_t n);
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  double f64();
  std::string str();

  /// Reads the magic string and version. Throws not_a_checkpoint for a wrong
  /// magic and version_mismatch for any version other than `expected_version`.
  void expect_header(std::string_view magic, std::uint32_t expected_version, std::string_view what);

 private:
  void read_exact(char* dst, std::size_t n);
  std::istream& in_;
};

}  // namespace prefixrank
