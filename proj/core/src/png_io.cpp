#include "oodrecon/png_io.hpp"

#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstring>
#include <string>
#include <vector>

#include "oodrecon/error.hpp"
#include "oodrecon/io_util.hpp"

namespace oodrecon::imaging {

namespace {

struct MemoryReader {
  const unsigned char* data;
  std::size_t size;
  std::size_t pos;
};

void read_from_memory(png_structp png, png_bytep out, png_size_t n) {
  auto* r = static_cast<MemoryReader*>(png_get_io_ptr(png));
  if (r->pos + n > r->size) png_error(png, "unexpected end of PNG stream");
  std::memcpy(out, r->data + r->pos, n);
  r->pos += n;
}

void write_to_string(png_structp png, png_bytep data, png_size_t n) {
  auto* out = static_cast<std::string*>(png_get_io_ptr(png));
  out->append(reinterpret_cast<const char*>(data), n);
}

void flush_noop(png_structp) {}

ImageGrid decode_gray8(const std::string& bytes, const std::string& origin) {
  if (bytes.size() < 8 || png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8))
    fail(ErrorKind::format, "not a PNG file: " + origin);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) fail(ErrorKind::io, "libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    fail(ErrorKind::io, "libpng init failed");
  }

  MemoryReader reader{reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(), 0};
  std::vector<png_bytep> row_ptrs;
  ImageGrid out;

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorKind::format, "corrupt PNG: " + origin);
  }

  png_set_read_fn(png, &reader, read_from_memory);
  png_read_info(png, info);

  const png_byte color_type = png_get_color_type(png, info);
  const png_byte bit_depth = png_get_bit_depth(png, info);
  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);

  if (color_type != PNG_COLOR_TYPE_GRAY || bit_depth != 8) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorKind::format,
         "expected 8-bit grayscale PNG, got color type " + std::to_string(color_type) +
             " / depth " + std::to_string(bit_depth) + ": " + origin);
  }

  std::vector<unsigned char> raster(static_cast<std::size_t>(w) * h);
  row_ptrs.resize(h);
  for (png_uint_32 y = 0; y < h; ++y)
    row_ptrs[y] = raster.data() + static_cast<std::size_t>(y) * w;
  png_read_image(png, row_ptrs.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  out = ImageGrid(static_cast<int>(w), static_cast<int>(h));
  for (std::size_t i = 0; i < raster.size(); ++i)
    out.values[i] = static_cast<float>(raster[i]);
  return out;
}

std::string encode_gray8(const std::vector<unsigned char>& raster, int w, int h) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) fail(ErrorKind::io, "libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    fail(ErrorKind::io, "libpng init failed");
  }

  std::string bytes;
  std::vector<png_bytep> row_ptrs(h);

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorKind::io, "PNG encode failed");
  }

  png_set_write_fn(png, &bytes, write_to_string, flush_noop);
  png_set_IHDR(png, info, w, h, 8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < h; ++y)
    row_ptrs[y] = const_cast<png_bytep>(raster.data() + static_cast<std::size_t>(y) * w);
  png_write_image(png, row_ptrs.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return bytes;
}

}  // namespace

ImageGrid load_png(const std::filesystem::path& path) {
  return decode_gray8(read_file_bytes(path), path.string());
}

void save_png(const ImageGrid& image, const std::filesystem::path& path) {
  if (image.width < 1 || image.height < 1)
    fail(ErrorKind::invalid_input, "empty image");
  std::vector<unsigned char> raster(image.pixel_count());
  for (std::size_t i = 0; i < image.values.size(); ++i) {
    const float v = image.values[i];
    if (!(v >= 0.0f && v <= 255.0f) || v != std::round(v))
      fail(ErrorKind::invalid_input,
           "pixel " + std::to_string(i) + " is not on the 8-bit lattice");
    raster[i] = static_cast<unsigned char>(v);
  }
  atomic_write_file(path, encode_gray8(raster, image.width, image.height));
}

void save_mask_png(const BodyMask& mask, const std::filesystem::path& path) {
  ImageGrid img(mask.width, mask.height);
  for (std::size_t i = 0; i < mask.flags.size(); ++i)
    img.values[i] = mask.flags[i] ? 255.0f : 0.0f;
  save_png(img, path);
}

BodyMask load_mask_png(const std::filesystem::path& path) {
  const ImageGrid img = load_png(path);
  BodyMask mask(img.width, img.height);
  for (std::size_t i = 0; i < img.values.size(); ++i)
    mask.flags[i] = img.values[i] != 0.0f ? 1 : 0;
  return mask;
}

}  // namespace oodrecon::imaging
