#include "oodrecon/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "oodrecon/csv.hpp"
#include "oodrecon/error.hpp"

namespace oodrecon::metrics {

namespace {

// Neumaier compensated summation; keeps both WD paths well below the
// agreement tolerance even for long sums.
struct KahanSum {
  double sum = 0.0;
  double comp = 0.0;

  void add(double v) {
    const double t = sum + v;
    if (std::abs(sum) >= std::abs(v))
      comp += (sum - t) + v;
    else
      comp += (v - t) + sum;
    sum = t;
  }
  double value() const { return sum + comp; }
};

std::vector<double> sorted(std::span<const double> v) {
  std::vector<double> out(v.begin(), v.end());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

double wd_mean_sorted_diff(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty())
    fail(ErrorKind::invalid_input, "empty sample multiset");
  if (a.size() != b.size())
    fail(ErrorKind::invalid_input, "fast path requires equal sample counts");
  const auto sa = sorted(a);
  const auto sb = sorted(b);
  KahanSum acc;
  for (std::size_t i = 0; i < sa.size(); ++i) acc.add(std::abs(sa[i] - sb[i]));
  return acc.value() / static_cast<double>(sa.size());
}

double wd_cdf_integral(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty())
    fail(ErrorKind::invalid_input, "empty sample multiset");
  const auto sa = sorted(a);
  const auto sb = sorted(b);
  const double na = static_cast<double>(sa.size());
  const double nb = static_cast<double>(sb.size());

  KahanSum acc;
  std::size_t ia = 0, ib = 0;
  double prev = 0.0;
  bool have_prev = false;
  while (ia < sa.size() || ib < sb.size()) {
    const double next_a = ia < sa.size() ? sa[ia] : std::numeric_limits<double>::infinity();
    const double next_b = ib < sb.size() ? sb[ib] : std::numeric_limits<double>::infinity();
    const double x = std::min(next_a, next_b);
    if (have_prev) {
      const double fa = static_cast<double>(ia) / na;
      const double fb = static_cast<double>(ib) / nb;
      acc.add(std::abs(fa - fb) * (x - prev));
    }
    while (ia < sa.size() && sa[ia] == x) ++ia;
    while (ib < sb.size() && sb[ib] == x) ++ib;
    prev = x;
    have_prev = true;
  }
  return acc.value();
}

double wasserstein_1d(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty())
    fail(ErrorKind::invalid_input, "empty sample multiset");
  if (a.size() == b.size()) return wd_mean_sorted_diff(a, b);
  return wd_cdf_integral(a, b);
}

namespace {

void check_triple_shape(const ImageGrid& original, const ImageGrid& reconstruction,
                        const BodyMask& mask) {
  if (!original.same_shape(reconstruction) ||
      !mask.matches(original.width, original.height))
    fail(ErrorKind::shape_mismatch, "image/mask dimensions disagree");
  if (mask.count() == 0) fail(ErrorKind::invalid_input, "empty mask");
}

}  // namespace

double masked_wd(const ImageGrid& original, const ImageGrid& reconstruction,
                 const BodyMask& mask) {
  check_triple_shape(original, reconstruction, mask);
  std::vector<double> va, vb;
  va.reserve(mask.count());
  vb.reserve(mask.count());
  for (std::size_t i = 0; i < mask.flags.size(); ++i) {
    if (mask.flags[i]) {
      va.push_back(original.values[i]);
      vb.push_back(reconstruction.values[i]);
    }
  }
  return wasserstein_1d(va, vb);
}

double masked_mse(const ImageGrid& original, const ImageGrid& reconstruction,
                  const BodyMask& mask) {
  check_triple_shape(original, reconstruction, mask);
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < mask.flags.size(); ++i) {
    if (mask.flags[i]) {
      const double d = static_cast<double>(original.values[i]) -
                       static_cast<double>(reconstruction.values[i]);
      sum += d * d;
      ++n;
    }
  }
  return sum / static_cast<double>(n);
}

namespace {

constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;

std::array<double, kSsimWindow> ssim_kernel() {
  std::array<double, kSsimWindow> k{};
  const int half = kSsimWindow / 2;
  double sum = 0.0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double d = i - half;
    k[i] = std::exp(-(d * d) / (2.0 * kSsimSigma * kSsimSigma));
    sum += k[i];
  }
  for (auto& v : k) v /= sum;
  return k;
}

// Valid-mode separable filtering: horizontal pass then vertical pass.
std::vector<double> filter_valid(const std::vector<double>& img, int w, int h,
                                 const std::array<double, kSsimWindow>& k) {
  const int ow = w - kSsimWindow + 1;
  const int oh = h - kSsimWindow + 1;
  std::vector<double> tmp(static_cast<std::size_t>(ow) * h, 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < kSsimWindow; ++i)
        s += k[i] * img[static_cast<std::size_t>(y) * w + x + i];
      tmp[static_cast<std::size_t>(y) * ow + x] = s;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(ow) * oh, 0.0);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < kSsimWindow; ++i)
        s += k[i] * tmp[static_cast<std::size_t>(y + i) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = s;
    }
  }
  return out;
}

}  // namespace

double ssim(const ImageGrid& a, const ImageGrid& b) {
  if (!a.same_shape(b))
    fail(ErrorKind::shape_mismatch, "SSIM inputs must share dimensions");
  if (a.width < kSsimWindow || a.height < kSsimWindow)
    fail(ErrorKind::invalid_input, "image smaller than the SSIM window");

  const int w = a.width, h = a.height;
  const std::size_t n = a.pixel_count();
  std::vector<double> da(n), db(n), daa(n), dbb(n), dab(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = a.values[i];
    const double y = b.values[i];
    da[i] = x;
    db[i] = y;
    daa[i] = x * x;
    dbb[i] = y * y;
    dab[i] = x * y;
  }

  static const auto kernel = ssim_kernel();
  const auto mu_a = filter_valid(da, w, h, kernel);
  const auto mu_b = filter_valid(db, w, h, kernel);
  const auto m_aa = filter_valid(daa, w, h, kernel);
  const auto m_bb = filter_valid(dbb, w, h, kernel);
  const auto m_ab = filter_valid(dab, w, h, kernel);

  KahanSum acc;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i], mb = mu_b[i];
    const double va = m_aa[i] - ma * ma;
    const double vb = m_bb[i] - mb * mb;
    const double cov = m_ab[i] - ma * mb;
    const double num = (2.0 * ma * mb + kSsimC1) * (2.0 * cov + kSsimC2);
    const double den = (ma * ma + mb * mb + kSsimC1) * (va + vb + kSsimC2);
    acc.add(num / den);
  }
  return acc.value() / static_cast<double>(mu_a.size());
}

ScoreRecord score_pair(const std::string& image_id, const std::string& dataset,
                       const ImageGrid& original, const ImageGrid& reconstruction,
                       const BodyMask& mask) {
  ScoreRecord rec;
  rec.image_id = image_id;
  rec.dataset = dataset;
  rec.wd = masked_wd(original, reconstruction, mask);
  rec.mse = masked_mse(original, reconstruction, mask);
  rec.ssim = ssim(original, reconstruction);
  rec.mask_pixels = static_cast<std::int64_t>(mask.count());
  return rec;
}

void write_scores_csv(const std::filesystem::path& path,
                      std::span<const ScoreRecord> records) {
  std::vector<CsvRow> rows;
  rows.reserve(records.size() + 1);
  rows.push_back({"image_id", "dataset", "wd", "mse", "ssim", "mask_pixels"});
  for (const auto& r : records) {
    rows.push_back({r.image_id, r.dataset, format_double(r.wd), format_double(r.mse),
                    format_double(r.ssim), std::to_string(r.mask_pixels)});
  }
  write_csv(path, rows);
}

std::vector<ScoreRecord> read_scores_csv(const std::filesystem::path& path) {
  const auto rows = read_csv(path);
  if (rows.empty() || rows[0] != CsvRow{"image_id", "dataset", "wd", "mse", "ssim", "mask_pixels"})
    fail(ErrorKind::format, "bad score CSV header: " + path.string());
  std::vector<ScoreRecord> out;
  out.reserve(rows.size() - 1);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (row.size() != 6)
      fail(ErrorKind::format, "bad score CSV row " + std::to_string(i));
    ScoreRecord r;
    r.image_id = row[0];
    r.dataset = row[1];
    r.wd = parse_double(row[2]);
    r.mse = parse_double(row[3]);
    r.ssim = parse_double(row[4]);
    r.mask_pixels = parse_i64(row[5]);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace oodrecon::metrics
