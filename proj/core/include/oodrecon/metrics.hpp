#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "oodrecon/image.hpp"

namespace oodrecon::metrics {

using imaging::BodyMask;
using imaging::ImageGrid;

/// Exact 1-Wasserstein distance between the empirical distributions of two
/// sample multisets. Dispatches to the sorted-difference fast path when the
/// sizes match; both paths agree to within accumulated rounding.
double wasserstein_1d(std::span<const double> a, std::span<const double> b);

/// General path: integral of |F_a - F_b| over the merged support.
double wd_cdf_integral(std::span<const double> a, std::span<const double> b);

/// Equal-size fast path: mean absolute difference of the sorted samples.
double wd_mean_sorted_diff(std::span<const double> a, std::span<const double> b);

/// 1-Wasserstein distance between the in-mask intensity distributions of the
/// two images; the mask (taken from the original) is applied to both.
double masked_wd(const ImageGrid& original, const ImageGrid& reconstruction,
                 const BodyMask& mask);

/// Mean squared intensity difference over in-mask pixels.
double masked_mse(const ImageGrid& original, const ImageGrid& reconstruction,
                  const BodyMask& mask);

/// Mean local SSIM over all valid 11x11 windows, Gaussian-weighted
/// (sigma 1.5), C1 = (0.01*255)^2, C2 = (0.03*255)^2. Computed on the full
/// image; images must be at least 11x11.
double ssim(const ImageGrid& a, const ImageGrid& b);

inline constexpr double kSsimC1 = (0.01 * 255.0) * (0.01 * 255.0);
inline constexpr double kSsimC2 = (0.03 * 255.0) * (0.03 * 255.0);

/// One scored image: the three reconstruction metrics plus provenance.
struct ScoreRecord {
  std::string image_id;
  std::string dataset;
  double wd = 0.0;
  double mse = 0.0;
  double ssim = 0.0;
  std::int64_t mask_pixels = 0;
};

ScoreRecord score_pair(const std::string& image_id, const std::string& dataset,
                       const ImageGrid& original, const ImageGrid& reconstruction,
                       const BodyMask& mask);

// Score table CSV: image_id,dataset,wd,mse,ssim,mask_pixels with shortest
// round-trip decimal floats.
void write_scores_csv(const std::filesystem::path& path,
                      std::span<const ScoreRecord> records);
std::vector<ScoreRecord> read_scores_csv(const std::filesystem::path& path);

}  // namespace oodrecon::metrics
