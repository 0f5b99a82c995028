#include "oodrecon/raster_io.hpp"

#include <string>

#include "oodrecon/error.hpp"
#include "oodrecon/io_util.hpp"
#include "oodrecon/version.hpp"

namespace oodrecon::imaging {

namespace {
constexpr char kMagic[4] = {'R', 'I', 'M', 'G'};
}

void save_raster(int width, int height, const std::vector<float>& values,
                 const std::filesystem::path& path) {
  if (width < 1 || height < 1 ||
      values.size() != static_cast<std::size_t>(width) * height)
    fail(ErrorKind::invalid_input, "raster dimensions do not match payload");
  std::string bytes;
  bytes.reserve(14 + values.size() * 4);
  bytes.append(kMagic, 4);
  append_u16le(bytes, kRasterFormatVersion);
  append_u32le(bytes, static_cast<std::uint32_t>(width));
  append_u32le(bytes, static_cast<std::uint32_t>(height));
  append_f32le_array(bytes, values.data(), values.size());
  atomic_write_file(path, bytes);
}

Raster load_raster(const std::filesystem::path& path) {
  const std::string bytes = read_file_bytes(path);
  ByteReader reader(bytes);
  if (reader.take(4) != std::string_view(kMagic, 4))
    fail(ErrorKind::format, "bad raster magic: " + path.string());
  const std::uint16_t version = reader.u16le();
  if (version != kRasterFormatVersion)
    fail(ErrorKind::format,
         "unsupported raster version " + std::to_string(version) + ": " + path.string());
  const std::uint32_t w = reader.u32le();
  const std::uint32_t h = reader.u32le();
  if (w == 0 || h == 0) fail(ErrorKind::format, "zero raster dimension: " + path.string());
  const std::size_t count = static_cast<std::size_t>(w) * h;
  if (reader.remaining() != count * 4)
    fail(ErrorKind::format, "raster payload size mismatch: " + path.string());
  Raster r;
  r.width = static_cast<int>(w);
  r.height = static_cast<int>(h);
  r.values.resize(count);
  reader.f32le_array(r.values.data(), count);
  return r;
}

void save_hu_raster(const HUImage& image, const std::filesystem::path& path) {
  save_raster(image.width, image.height, image.values, path);
}

HUImage load_hu_raster(const std::filesystem::path& path) {
  Raster r = load_raster(path);
  HUImage img;
  img.width = r.width;
  img.height = r.height;
  img.values = std::move(r.values);
  return img;
}

void save_image_raster(const ImageGrid& image, const std::filesystem::path& path) {
  save_raster(image.width, image.height, image.values, path);
}

ImageGrid load_image_raster(const std::filesystem::path& path) {
  Raster r = load_raster(path);
  for (float v : r.values) {
    if (!(v >= 0.0f && v <= 255.0f))
      fail(ErrorKind::format, "intensity outside [0,255]: " + path.string());
  }
  ImageGrid img;
  img.width = r.width;
  img.height = r.height;
  img.values = std::move(r.values);
  return img;
}

}  // namespace oodrecon::imaging
