// Independent reference implementations used only by tests. These must stay
// decoupled from the production code paths they check.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

namespace test_oracles {

/// 1-Wasserstein distance via quantile-function integration: split [0, 1] at
/// every i/na and j/nb breakpoint and integrate |Qa - Qb| piecewise. A
/// different route from the CDF-gap integration used in production.
inline double wd_quantile_integral(std::span<const double> a,
                                   std::span<const double> b) {
  std::vector<double> sa(a.begin(), a.end()), sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  const std::size_t na = sa.size(), nb = sb.size();

  std::vector<double> breaks;
  breaks.reserve(na + nb + 1);
  breaks.push_back(0.0);
  for (std::size_t i = 1; i < na; ++i) breaks.push_back(static_cast<double>(i) / na);
  for (std::size_t j = 1; j < nb; ++j) breaks.push_back(static_cast<double>(j) / nb);
  breaks.push_back(1.0);
  std::sort(breaks.begin(), breaks.end());

  double acc = 0.0;
  for (std::size_t k = 0; k + 1 < breaks.size(); ++k) {
    const double lo = breaks[k], hi = breaks[k + 1];
    if (hi <= lo) continue;
    const double mid = (lo + hi) / 2.0;
    const auto qa = sa[std::min(na - 1, static_cast<std::size_t>(mid * na))];
    const auto qb = sb[std::min(nb - 1, static_cast<std::size_t>(mid * nb))];
    acc += std::abs(qa - qb) * (hi - lo);
  }
  return acc;
}

/// Quadratic-time AUROC: counts (ood > id) pairs plus half credit for ties.
inline double auroc_pair_counting(std::span<const double> ood,
                                  std::span<const double> id, bool higher_is_ood) {
  const double sign = higher_is_ood ? 1.0 : -1.0;
  double num = 0.0;
  for (double o : ood) {
    for (double i : id) {
      const double so = sign * o, si = sign * i;
      if (so > si)
        num += 1.0;
      else if (so == si)
        num += 0.5;
    }
  }
  return num / (static_cast<double>(ood.size()) * static_cast<double>(id.size()));
}

/// Bresenham rasterization of the segment between two pixel coordinates.
inline std::vector<std::pair<int, int>> bresenham(int x0, int y0, int x1, int y1) {
  std::vector<std::pair<int, int>> line;
  const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
  const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  int x = x0, y = y0;
  for (;;) {
    line.emplace_back(x, y);
    if (x == x1 && y == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y += sy;
    }
  }
  return line;
}

/// Scans an image for a straight bright run: some pair of bright pixels at
/// least min_len apart whose whole Bresenham line is bright and in-mask.
template <class GetHu, class GetMask>
bool has_straight_bright_run(int width, int height, GetHu hu, GetMask in_mask,
                             double min_hu, double min_len) {
  std::vector<std::pair<int, int>> bright;
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      if (in_mask(x, y) && hu(x, y) >= min_hu) bright.emplace_back(x, y);

  for (std::size_t i = 0; i < bright.size(); ++i) {
    for (std::size_t j = i + 1; j < bright.size(); ++j) {
      const double ddx = bright[i].first - bright[j].first;
      const double ddy = bright[i].second - bright[j].second;
      if (ddx * ddx + ddy * ddy < min_len * min_len) continue;
      bool all_bright = true;
      for (const auto& [x, y] : bresenham(bright[i].first, bright[i].second,
                                          bright[j].first, bright[j].second)) {
        if (!in_mask(x, y) || hu(x, y) < min_hu) {
          all_bright = false;
          break;
        }
      }
      if (all_bright) return true;
    }
  }
  return false;
}

/// Border flood fill over non-mask pixels (4-connectivity). Returns true when
/// every non-mask pixel is reachable from the border, i.e. the mask has no
/// interior holes.
inline bool mask_has_no_holes(int width, int height,
                              const std::vector<std::uint8_t>& flags) {
  std::vector<std::uint8_t> visited(flags.size(), 0);
  std::vector<std::size_t> stack;
  auto push = [&](int x, int y) {
    const std::size_t i = static_cast<std::size_t>(y) * width + x;
    if (!visited[i] && !flags[i]) {
      visited[i] = 1;
      stack.push_back(i);
    }
  };
  for (int x = 0; x < width; ++x) {
    push(x, 0);
    push(x, height - 1);
  }
  for (int y = 0; y < height; ++y) {
    push(0, y);
    push(width - 1, y);
  }
  while (!stack.empty()) {
    const std::size_t i = stack.back();
    stack.pop_back();
    const int x = static_cast<int>(i % width);
    const int y = static_cast<int>(i / width);
    if (x > 0) push(x - 1, y);
    if (x + 1 < width) push(x + 1, y);
    if (y > 0) push(x, y - 1);
    if (y + 1 < height) push(x, y + 1);
  }
  for (std::size_t i = 0; i < flags.size(); ++i)
    if (!flags[i] && !visited[i]) return false;
  return true;
}

/// Checks that the mask is a single 4-connected component.
inline bool mask_is_single_component(int width, int height,
                                     const std::vector<std::uint8_t>& flags) {
  std::size_t total = 0;
  std::size_t first = flags.size();
  for (std::size_t i = 0; i < flags.size(); ++i) {
    if (flags[i]) {
      ++total;
      if (first == flags.size()) first = i;
    }
  }
  if (total == 0) return false;
  std::vector<std::uint8_t> visited(flags.size(), 0);
  std::vector<std::size_t> stack{first};
  visited[first] = 1;
  std::size_t reached = 0;
  while (!stack.empty()) {
    const std::size_t i = stack.back();
    stack.pop_back();
    ++reached;
    const int x = static_cast<int>(i % width);
    const int y = static_cast<int>(i / width);
    auto push = [&](int nx, int ny) {
      if (nx < 0 || nx >= width || ny < 0 || ny >= height) return;
      const std::size_t j = static_cast<std::size_t>(ny) * width + nx;
      if (flags[j] && !visited[j]) {
        visited[j] = 1;
        stack.push_back(j);
      }
    };
    push(x - 1, y);
    push(x + 1, y);
    push(x, y - 1);
    push(x, y + 1);
  }
  return reached == total;
}

}  // namespace test_oracles
