#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace oodrecon::imaging {

/// Raw CT-style intensities in Hounsfield units, before display windowing.
struct HUImage {
  int width = 0;
  int height = 0;
  std::vector<float> values;  // row-major, height*width

  HUImage() = default;
  HUImage(int w, int h, float fill = 0.f)
      : width(w), height(h), values(static_cast<std::size_t>(w) * h, fill) {}

  float& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
  float at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
  std::size_t pixel_count() const { return values.size(); }
};

/// Display-range intensities; every value is expected to lie in [0, 255].
/// Values stay real-valued internally; quantization to the 8-bit lattice
/// happens only at PNG boundaries.
struct ImageGrid {
  int width = 0;
  int height = 0;
  std::vector<float> values;

  ImageGrid() = default;
  ImageGrid(int w, int h, float fill = 0.f)
      : width(w), height(h), values(static_cast<std::size_t>(w) * h, fill) {}

  float& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
  float at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
  std::size_t pixel_count() const { return values.size(); }

  bool same_shape(const ImageGrid& o) const {
    return width == o.width && height == o.height;
  }
};

/// Boolean per-pixel mask; true marks in-body pixels.
struct BodyMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> flags;

  BodyMask() = default;
  BodyMask(int w, int h, bool fill = false)
      : width(w), height(h),
        flags(static_cast<std::size_t>(w) * h, fill ? 1 : 0) {}

  static BodyMask full(int w, int h) { return BodyMask(w, h, true); }

  bool at(int x, int y) const {
    return flags[static_cast<std::size_t>(y) * width + x] != 0;
  }
  void set(int x, int y, bool v) {
    flags[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0;
  }
  std::size_t count() const {
    std::size_t n = 0;
    for (auto f : flags) n += f != 0;
    return n;
  }
  bool matches(int w, int h) const { return width == w && height == h; }
};

/// Display window in Hounsfield units. The window spans
/// [level - width/2, level + width/2].
struct WindowSpec {
  double level = 50.0;
  double width = 350.0;
};

/// Affine map of the HU window onto [0, 255], clamping outside.
/// Throws invalid-input on a non-positive window width or non-finite HU.
ImageGrid window_ct(const HUImage& image, const WindowSpec& spec);

/// Rounds every value to the nearest integer, ties away from zero.
/// Input values must already lie in [0, 255].
ImageGrid quantize(const ImageGrid& image);

/// Largest 4-connected component of pixels brighter than `threshold`, with
/// interior holes filled. Throws empty-mask when nothing exceeds the
/// threshold.
BodyMask extract_body_mask(const ImageGrid& image, float threshold = 10.0f);

}  // namespace oodrecon::imaging
