#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace oodrecon {

/// Writes bytes to a temporary file in the target directory, then renames it
/// over the destination. Readers never observe a torn file.
void atomic_write_file(const std::filesystem::path& path, std::string_view bytes);

std::string read_file_bytes(const std::filesystem::path& path);

// Little-endian scalar packing used by the binary container formats.
void append_u16le(std::string& out, std::uint16_t v);
void append_u32le(std::string& out, std::uint32_t v);
void append_f32le(std::string& out, float v);
void append_f32le_array(std::string& out, const float* data, std::size_t count);

class ByteReader {
public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::string_view take(std::size_t n);  // throws format error when short
  std::uint16_t u16le();
  std::uint32_t u32le();
  float f32le();
  void f32le_array(float* out, std::size_t count);

private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace oodrecon
