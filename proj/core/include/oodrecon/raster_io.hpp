#pragma once

#include <filesystem>
#include <vector>

#include "oodrecon/image.hpp"

namespace oodrecon::imaging {

// Binary float raster: magic "RIMG", u16 format version, u32 width,
// u32 height (little-endian), then width*height float32 LE values in
// row-major order. Used for HU phantoms (values in HU) and for real-valued
// reconstructions (values in [0, 255]).

struct Raster {
  int width = 0;
  int height = 0;
  std::vector<float> values;
};

void save_raster(int width, int height, const std::vector<float>& values,
                 const std::filesystem::path& path);
Raster load_raster(const std::filesystem::path& path);

void save_hu_raster(const HUImage& image, const std::filesystem::path& path);
HUImage load_hu_raster(const std::filesystem::path& path);

void save_image_raster(const ImageGrid& image, const std::filesystem::path& path);
ImageGrid load_image_raster(const std::filesystem::path& path);

}  // namespace oodrecon::imaging
