#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "oodrecon/image.hpp"

namespace oodrecon::imaging {

enum class AnomalyKind {
  none,
  bright_line,       // needle analogue: thin metal-bright segment
  peripheral_fluid,  // ascites analogue: fluid crescent at the body rim
  texture_shift,     // in-body noise texture amplified
};

const char* to_string(AnomalyKind kind);
AnomalyKind anomaly_from_string(const std::string& name);  // throws invalid-input

/// Synthetic abdominal-style phantom: an elliptical body of soft-tissue HU on
/// an air background, a few organ ellipses inside it, optional per-pixel HU
/// noise, and optionally one anomaly. Everything is a pure function of the
/// spec (seed included).
struct PhantomSpec {
  int resolution = 64;

  // Body ellipse, in fractions of the image size.
  double body_cx = 0.50;
  double body_cy = 0.52;
  double body_ax = 0.42;
  double body_ay = 0.34;
  double body_hu = 40.0;

  int organ_count = 5;
  double organ_hu_min = -60.0;
  double organ_hu_max = 160.0;

  double noise_hu = 8.0;  // Gaussian sigma, HU

  AnomalyKind anomaly = AnomalyKind::none;
  std::uint64_t seed = 0;
};

struct PhantomSample {
  HUImage hu;
  BodyMask body;      // ground-truth body ellipse rasterization
  std::string label;  // "in-distribution" or "ood"
  AnomalyKind kind = AnomalyKind::none;
};

PhantomSample gen_phantom(const PhantomSpec& spec);

/// Corpus manifest: one row per generated image. Paths are relative to the
/// manifest's directory; the seed column reproduces the exact image via
/// gen_phantom.
struct CorpusManifestRow {
  std::string path;
  std::string label;         // "in-distribution" or "ood"
  std::string anomaly_kind;  // AnomalyKind name
  std::uint64_t seed = 0;
};

void write_corpus_manifest(const std::filesystem::path& path,
                           std::span<const CorpusManifestRow> rows);
std::vector<CorpusManifestRow> read_corpus_manifest(const std::filesystem::path& path);

}  // namespace oodrecon::imaging
