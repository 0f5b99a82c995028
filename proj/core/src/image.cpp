#include "oodrecon/image.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "oodrecon/error.hpp"

namespace oodrecon::imaging {

ImageGrid window_ct(const HUImage& image, const WindowSpec& spec) {
  if (!(spec.width > 0.0))
    fail(ErrorKind::invalid_input, "window width must be strictly positive");
  if (image.width < 1 || image.height < 1)
    fail(ErrorKind::invalid_input, "empty image");
  const double lower = spec.level - spec.width / 2.0;
  ImageGrid out(image.width, image.height);
  for (std::size_t i = 0; i < image.values.size(); ++i) {
    const double hu = image.values[i];
    if (!std::isfinite(hu))
      fail(ErrorKind::invalid_input,
           "non-finite HU value at pixel " + std::to_string(i));
    const double u = std::clamp((hu - lower) / spec.width, 0.0, 1.0);
    out.values[i] = static_cast<float>(u * 255.0);
  }
  return out;
}

ImageGrid quantize(const ImageGrid& image) {
  ImageGrid out(image.width, image.height);
  for (std::size_t i = 0; i < image.values.size(); ++i) {
    const float v = image.values[i];
    if (!(v >= 0.0f && v <= 255.0f))
      fail(ErrorKind::invalid_input,
           "value out of [0,255] at pixel " + std::to_string(i));
    out.values[i] = std::round(v);  // ties away from zero
  }
  return out;
}

namespace {

// 4-neighbour flood fill over an arbitrary predicate, iterative.
template <class Pred>
void flood(int width, int height, std::vector<std::uint8_t>& visited,
           std::vector<std::size_t>& stack, std::size_t start, Pred inside) {
  stack.clear();
  stack.push_back(start);
  visited[start] = 1;
  while (!stack.empty()) {
    const std::size_t i = stack.back();
    stack.pop_back();
    const int x = static_cast<int>(i % width);
    const int y = static_cast<int>(i / width);
    const int nx[4] = {x - 1, x + 1, x, x};
    const int ny[4] = {y, y, y - 1, y + 1};
    for (int k = 0; k < 4; ++k) {
      if (nx[k] < 0 || nx[k] >= width || ny[k] < 0 || ny[k] >= height) continue;
      const std::size_t j = static_cast<std::size_t>(ny[k]) * width + nx[k];
      if (!visited[j] && inside(j)) {
        visited[j] = 1;
        stack.push_back(j);
      }
    }
  }
}

}  // namespace

BodyMask extract_body_mask(const ImageGrid& image, float threshold) {
  const int w = image.width, h = image.height;
  if (w < 1 || h < 1) fail(ErrorKind::invalid_input, "empty image");
  const std::size_t n = image.values.size();

  std::vector<std::uint8_t> fg(n, 0);
  bool any = false;
  for (std::size_t i = 0; i < n; ++i) {
    if (image.values[i] > threshold) {
      fg[i] = 1;
      any = true;
    }
  }
  if (!any)
    fail(ErrorKind::empty_mask, "no pixel exceeds the mask threshold");

  // Largest 4-connected foreground component; ties resolve to the first one
  // in scan order.
  std::vector<std::uint8_t> visited(n, 0);
  std::vector<std::size_t> stack;
  std::vector<std::uint8_t> best(n, 0), current(n, 0);
  std::size_t best_size = 0;
  for (std::size_t s = 0; s < n; ++s) {
    if (!fg[s] || visited[s]) continue;
    std::fill(current.begin(), current.end(), 0);
    std::size_t size = 0;
    stack.clear();
    stack.push_back(s);
    visited[s] = 1;
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      current[i] = 1;
      ++size;
      const int x = static_cast<int>(i % w);
      const int y = static_cast<int>(i / w);
      const int nx[4] = {x - 1, x + 1, x, x};
      const int ny[4] = {y, y, y - 1, y + 1};
      for (int k = 0; k < 4; ++k) {
        if (nx[k] < 0 || nx[k] >= w || ny[k] < 0 || ny[k] >= h) continue;
        const std::size_t j = static_cast<std::size_t>(ny[k]) * w + nx[k];
        if (fg[j] && !visited[j]) {
          visited[j] = 1;
          stack.push_back(j);
        }
      }
    }
    if (size > best_size) {
      best_size = size;
      best.swap(current);
    }
  }

  // Fill interior holes: everything not reachable from the border without
  // crossing the component belongs to the mask.
  std::vector<std::uint8_t> outside(n, 0);
  auto is_bg = [&](std::size_t j) { return best[j] == 0; };
  for (int x = 0; x < w; ++x) {
    const std::size_t top = static_cast<std::size_t>(x);
    const std::size_t bot = static_cast<std::size_t>(h - 1) * w + x;
    if (!outside[top] && is_bg(top)) flood(w, h, outside, stack, top, is_bg);
    if (!outside[bot] && is_bg(bot)) flood(w, h, outside, stack, bot, is_bg);
  }
  for (int y = 0; y < h; ++y) {
    const std::size_t left = static_cast<std::size_t>(y) * w;
    const std::size_t right = static_cast<std::size_t>(y) * w + (w - 1);
    if (!outside[left] && is_bg(left)) flood(w, h, outside, stack, left, is_bg);
    if (!outside[right] && is_bg(right)) flood(w, h, outside, stack, right, is_bg);
  }

  BodyMask mask(w, h);
  for (std::size_t i = 0; i < n; ++i)
    mask.flags[i] = best[i] ? 1 : (outside[i] ? 0 : 1);
  return mask;
}

}  // namespace oodrecon::imaging
