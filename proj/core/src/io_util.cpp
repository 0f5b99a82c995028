#include "oodrecon/io_util.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "oodrecon/error.hpp"

namespace oodrecon {

namespace fs = std::filesystem;

void atomic_write_file(const fs::path& path, std::string_view bytes) {
  const fs::path dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
  std::error_code ec;
  fs::create_directories(dir, ec);
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::io, "cannot open for writing: " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) fail(ErrorKind::io, "write failed: " + tmp.string());
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    fail(ErrorKind::io, "rename failed for " + path.string());
  }
}

std::string read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  if (in.bad()) fail(ErrorKind::io, "read failed: " + path.string());
  return bytes;
}

void append_u16le(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void append_u32le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void append_f32le(std::string& out, float v) {
  append_u32le(out, std::bit_cast<std::uint32_t>(v));
}

void append_f32le_array(std::string& out, const float* data, std::size_t count) {
  if constexpr (std::endian::native == std::endian::little) {
    const std::size_t old = out.size();
    out.resize(old + count * 4);
    std::memcpy(out.data() + old, data, count * 4);
  } else {
    for (std::size_t i = 0; i < count; ++i) append_f32le(out, data[i]);
  }
}

std::string_view ByteReader::take(std::size_t n) {
  if (remaining() < n) fail(ErrorKind::format, "truncated file");
  std::string_view v = bytes_.substr(pos_, n);
  pos_ += n;
  return v;
}

std::uint16_t ByteReader::u16le() {
  const auto b = take(2);
  return static_cast<std::uint16_t>(static_cast<unsigned char>(b[0]) |
                                    (static_cast<unsigned char>(b[1]) << 8));
}

std::uint32_t ByteReader::u32le() {
  const auto b = take(4);
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(b[i]);
  return v;
}

float ByteReader::f32le() { return std::bit_cast<float>(u32le()); }

void ByteReader::f32le_array(float* out, std::size_t count) {
  const auto b = take(count * 4);
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(out, b.data(), count * 4);
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      std::uint32_t v = 0;
      for (int j = 3; j >= 0; --j)
        v = (v << 8) | static_cast<unsigned char>(b[i * 4 + j]);
      out[i] = std::bit_cast<float>(v);
    }
  }
}

}  // namespace oodrecon
