#pragma once

#include <filesystem>

#include "oodrecon/image.hpp"

namespace oodrecon::imaging {

/// Loads an 8-bit single-channel grayscale PNG. Any other color type or bit
/// depth is a format error.
ImageGrid load_png(const std::filesystem::path& path);

/// Saves an image that is already on the 8-bit lattice (every value an
/// integer in [0, 255]) as an 8-bit grayscale PNG. Written atomically.
void save_png(const ImageGrid& image, const std::filesystem::path& path);

/// Masks are stored as 8-bit grayscale PNGs with 0 = outside, 255 = inside.
void save_mask_png(const BodyMask& mask, const std::filesystem::path& path);
BodyMask load_mask_png(const std::filesystem::path& path);

}  // namespace oodrecon::imaging
