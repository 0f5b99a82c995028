#include "oodrecon/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "oodrecon/csv.hpp"
#include "oodrecon/error.hpp"
#include "oodrecon/rng.hpp"

namespace oodrecon::imaging {

namespace {

constexpr double kAirHu = -1000.0;
constexpr double kNeedleHu = 2000.0;
constexpr double kTextureNoiseFactor = 5.0;

struct Ellipse {
  double cx, cy, ax, ay;  // pixels

  double norm2(double px, double py) const {
    const double dx = (px - cx) / ax;
    const double dy = (py - cy) / ay;
    return dx * dx + dy * dy;
  }
  bool contains(double px, double py) const { return norm2(px, py) <= 1.0; }
};

// Conservative containment check: every sampled boundary point of the inner
// ellipse must be strictly inside the outer one.
bool ellipse_inside(const Ellipse& inner, const Ellipse& outer) {
  constexpr int kSamples = 64;
  for (int i = 0; i < kSamples; ++i) {
    const double t = 2.0 * std::numbers::pi * i / kSamples;
    const double px = inner.cx + inner.ax * std::cos(t);
    const double py = inner.cy + inner.ay * std::sin(t);
    if (outer.norm2(px, py) >= 1.0) return false;
  }
  return true;
}

void validate(const PhantomSpec& spec) {
  auto bad = [](const std::string& msg) { fail(ErrorKind::invalid_spec, msg); };
  if (spec.resolution < 16) bad("resolution must be at least 16");
  if (!(spec.body_ax > 0.0) || !(spec.body_ay > 0.0)) bad("body axes must be positive");
  if (spec.body_cx - spec.body_ax < 0.0 || spec.body_cx + spec.body_ax > 1.0 ||
      spec.body_cy - spec.body_ay < 0.0 || spec.body_cy + spec.body_ay > 1.0)
    bad("body ellipse must fit inside the image");
  if (spec.organ_count < 0) bad("organ count must be non-negative");
  if (spec.organ_hu_min > spec.organ_hu_max) bad("organ HU range is inverted");
  if (spec.noise_hu < 0.0) bad("noise amplitude must be non-negative");
  if (!std::isfinite(spec.body_hu) || !std::isfinite(spec.organ_hu_min) ||
      !std::isfinite(spec.organ_hu_max) || !std::isfinite(spec.noise_hu))
    bad("non-finite phantom parameter");
}

void paint_ellipse(HUImage& img, const Ellipse& e, double hu) {
  const int x0 = std::max(0, static_cast<int>(std::floor(e.cx - e.ax - 1)));
  const int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(e.cx + e.ax + 1)));
  const int y0 = std::max(0, static_cast<int>(std::floor(e.cy - e.ay - 1)));
  const int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(e.cy + e.ay + 1)));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x)
      if (e.contains(x + 0.5, y + 0.5)) img.at(x, y) = static_cast<float>(hu);
}

void add_bright_line(HUImage& img, const Ellipse& body, Rng& rng) {
  const double scale = img.width / 64.0;
  const double half_width = std::max(1.2, 1.5 * scale);
  const double min_len = std::max(20.0, 24.0 * scale);
  const double max_len = 34.0 * scale;

  for (int attempt = 0; attempt < 64; ++attempt) {
    const double theta = rng.uniform(0.0, std::numbers::pi);
    const double cx = body.cx + (rng.uniform() * 2.0 - 1.0) * 0.35 * body.ax;
    const double cy = body.cy + (rng.uniform() * 2.0 - 1.0) * 0.35 * body.ay;
    const double len = rng.uniform(min_len, std::min(max_len, min_len + 10.0 * scale));
    const double dx = std::cos(theta), dy = std::sin(theta);
    const double x0 = cx - dx * len / 2, y0 = cy - dy * len / 2;
    const double x1 = cx + dx * len / 2, y1 = cy + dy * len / 2;

    // The whole segment (plus its width) must stay inside the body.
    bool inside = true;
    for (int s = 0; s <= 32 && inside; ++s) {
      const double t = s / 32.0;
      const double px = x0 + (x1 - x0) * t;
      const double py = y0 + (y1 - y0) * t;
      if (body.norm2(px, py) > 0.88 * 0.88) inside = false;
    }
    if (!inside) continue;

    const int bx0 = std::max(0, static_cast<int>(std::floor(std::min(x0, x1) - half_width - 1)));
    const int bx1 = std::min(img.width - 1, static_cast<int>(std::ceil(std::max(x0, x1) + half_width + 1)));
    const int by0 = std::max(0, static_cast<int>(std::floor(std::min(y0, y1) - half_width - 1)));
    const int by1 = std::min(img.height - 1, static_cast<int>(std::ceil(std::max(y0, y1) + half_width + 1)));
    for (int y = by0; y <= by1; ++y) {
      for (int x = bx0; x <= bx1; ++x) {
        const double px = x + 0.5, py = y + 0.5;
        // Distance from pixel center to the segment.
        const double vx = x1 - x0, vy = y1 - y0;
        const double wx = px - x0, wy = py - y0;
        const double t = std::clamp((wx * vx + wy * vy) / (vx * vx + vy * vy), 0.0, 1.0);
        const double ex = wx - t * vx, ey = wy - t * vy;
        if (ex * ex + ey * ey <= half_width * half_width && body.contains(px, py))
          img.at(x, y) = static_cast<float>(kNeedleHu);
      }
    }
    return;
  }
  fail(ErrorKind::invalid_spec, "bright-line anomaly does not fit inside the body");
}

void add_peripheral_fluid(HUImage& img, const Ellipse& body, Rng& rng) {
  const double inner = 0.78;
  const double phi0 = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double span = rng.uniform(0.6 * std::numbers::pi, 1.2 * std::numbers::pi);
  const double fluid_hu = rng.uniform(0.0, 15.0);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      const double n2 = body.norm2(px, py);
      if (n2 < inner * inner || n2 > 1.0) continue;
      double ang = std::atan2((py - body.cy) / body.ay, (px - body.cx) / body.ax) - phi0;
      ang = std::fmod(ang, 2.0 * std::numbers::pi);
      if (ang < 0) ang += 2.0 * std::numbers::pi;
      if (ang <= span) img.at(x, y) = static_cast<float>(fluid_hu);
    }
  }
}

}  // namespace

const char* to_string(AnomalyKind kind) {
  switch (kind) {
    case AnomalyKind::none: return "none";
    case AnomalyKind::bright_line: return "bright-line";
    case AnomalyKind::peripheral_fluid: return "peripheral-fluid";
    case AnomalyKind::texture_shift: return "texture-shift";
  }
  return "none";
}

AnomalyKind anomaly_from_string(const std::string& name) {
  if (name == "none") return AnomalyKind::none;
  if (name == "bright-line") return AnomalyKind::bright_line;
  if (name == "peripheral-fluid") return AnomalyKind::peripheral_fluid;
  if (name == "texture-shift") return AnomalyKind::texture_shift;
  fail(ErrorKind::invalid_input, "unknown anomaly kind: '" + name + "'");
}

PhantomSample gen_phantom(const PhantomSpec& spec) {
  validate(spec);
  const int res = spec.resolution;
  const Ellipse body{spec.body_cx * res, spec.body_cy * res,
                     spec.body_ax * res, spec.body_ay * res};

  PhantomSample sample;
  sample.kind = spec.anomaly;
  sample.label = spec.anomaly == AnomalyKind::none ? "in-distribution" : "ood";

  sample.hu = HUImage(res, res, static_cast<float>(kAirHu));
  paint_ellipse(sample.hu, body, spec.body_hu);

  sample.body = BodyMask(res, res);
  for (int y = 0; y < res; ++y)
    for (int x = 0; x < res; ++x)
      sample.body.set(x, y, body.contains(x + 0.5, y + 0.5));

  Rng geom(derive_seed(spec.seed, "phantom.geometry"));
  const double ax_min = 0.05 * res, ax_max = 0.15 * res;
  for (int i = 0; i < spec.organ_count; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
      Ellipse organ;
      organ.ax = geom.uniform(ax_min, ax_max);
      organ.ay = geom.uniform(ax_min, ax_max);
      organ.cx = body.cx + (geom.uniform() * 2.0 - 1.0) * (body.ax - organ.ax);
      organ.cy = body.cy + (geom.uniform() * 2.0 - 1.0) * (body.ay - organ.ay);
      if (!ellipse_inside(organ, body)) continue;
      const double hu = geom.uniform(spec.organ_hu_min, spec.organ_hu_max);
      paint_ellipse(sample.hu, organ, hu);
      placed = true;
    }
    if (!placed)
      fail(ErrorKind::invalid_spec, "organ ellipse does not fit inside the body");
  }

  Rng anomaly_rng(derive_seed(spec.seed, "phantom.anomaly"));
  switch (spec.anomaly) {
    case AnomalyKind::none:
    case AnomalyKind::texture_shift:
      break;
    case AnomalyKind::bright_line:
      add_bright_line(sample.hu, body, anomaly_rng);
      break;
    case AnomalyKind::peripheral_fluid:
      add_peripheral_fluid(sample.hu, body, anomaly_rng);
      break;
  }

  if (spec.noise_hu > 0.0) {
    Rng noise(derive_seed(spec.seed, "phantom.noise"));
    const bool texture = spec.anomaly == AnomalyKind::texture_shift;
    for (int y = 0; y < res; ++y) {
      for (int x = 0; x < res; ++x) {
        const double n = noise.normal();
        double sigma = spec.noise_hu;
        if (texture && sample.body.at(x, y)) sigma *= kTextureNoiseFactor;
        sample.hu.at(x, y) += static_cast<float>(n * sigma);
      }
    }
  }

  return sample;
}

namespace {
const CsvRow kCorpusHeader{"path", "label", "anomaly_kind", "seed"};
}

void write_corpus_manifest(const std::filesystem::path& path,
                           std::span<const CorpusManifestRow> rows) {
  std::vector<CsvRow> out;
  out.reserve(rows.size() + 1);
  out.push_back(kCorpusHeader);
  for (const auto& r : rows)
    out.push_back({r.path, r.label, r.anomaly_kind, std::to_string(r.seed)});
  write_csv(path, out);
}

std::vector<CorpusManifestRow> read_corpus_manifest(const std::filesystem::path& path) {
  const auto rows = read_csv(path);
  if (rows.empty() || rows[0] != kCorpusHeader)
    fail(ErrorKind::format, "bad corpus manifest header: " + path.string());
  std::vector<CorpusManifestRow> out;
  out.reserve(rows.size() - 1);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() != 4)
      fail(ErrorKind::format,
           "bad corpus manifest row " + std::to_string(i) + ": " + path.string());
    CorpusManifestRow r;
    r.path = rows[i][0];
    r.label = rows[i][1];
    r.anomaly_kind = rows[i][2];
    r.seed = parse_u64(rows[i][3]);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace oodrecon::imaging
