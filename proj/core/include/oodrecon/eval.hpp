#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "oodrecon/metrics.hpp"
#include "oodrecon/rng.hpp"

namespace oodrecon::eval {

enum class Orientation { higher_is_ood, lower_is_ood };

const char* to_string(Orientation o);

/// Mann-Whitney AUROC: probability that a random OOD score ranks above a
/// random in-distribution score, ties counted 1/2. Exact (tie-aware average
/// ranks); agrees with brute-force pair counting bit for bit.
double auroc(std::span<const double> ood_scores, std::span<const double> id_scores,
             Orientation orientation);

/// Uniform sample of n_target indices out of n_available, without
/// replacement, deterministic per seed.
std::vector<std::size_t> undersample_indices(std::size_t n_available,
                                             std::size_t n_target,
                                             std::uint64_t seed);

template <class T>
std::vector<T> undersample(std::span<const T> items, std::size_t n_target,
                           std::uint64_t seed) {
  const auto idx = undersample_indices(items.size(), n_target, seed);
  std::vector<T> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(items[i]);
  return out;
}

/// One manifest entry: where an image lives and which test population it
/// belongs to.
struct ManifestEntry {
  std::string image_id;
  std::string path;  // relative to the manifest file unless absolute
  std::string dataset;
  bool is_ood = false;
};

/// Reads `image_id,path,dataset,class` CSV. Validates id uniqueness, label ->
/// class consistency, and (optionally) that every referenced path exists.
std::vector<ManifestEntry> read_eval_manifest(const std::filesystem::path& path,
                                              bool check_paths = true);
void write_eval_manifest(const std::filesystem::path& path,
                         std::span<const ManifestEntry> entries);

/// Resolves a manifest-relative path against the manifest's directory.
std::filesystem::path resolve_manifest_path(const std::filesystem::path& manifest,
                                            const std::string& entry_path);

struct RocResult {
  double auroc = 0.0;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
  std::uint64_t undersample_seed = 0;
  std::string metric;
  Orientation orientation = Orientation::higher_is_ood;
};

struct DatasetReport {
  std::string dataset;
  std::size_t n_ood = 0;
  std::uint64_t undersample_seed = 0;
  RocResult wd;
  RocResult mse;
  RocResult ssim_raw;    // raw SSIM scored higher-is-OOD (report-table column)
  RocResult ssim_lower;  // discriminative reading: lower SSIM means OOD
};

struct EvalOptions {
  Orientation wd = Orientation::higher_is_ood;
  Orientation mse = Orientation::higher_is_ood;
};

struct EvalReport {
  std::uint64_t master_seed = 0;
  std::size_t n_id_available = 0;
  EvalOptions options;
  std::vector<DatasetReport> rows;  // one per OOD dataset, manifest order
};

/// Per OOD dataset: undersamples the in-distribution scores to the dataset
/// size (one draw shared across the three metrics) and computes the AUROC
/// grid. Throws invalid-input listing the ids of any manifest entries that
/// lack a score.
EvalReport evaluate_experiment(std::span<const ManifestEntry> manifest,
                               std::span<const metrics::ScoreRecord> scores,
                               std::uint64_t seed, const EvalOptions& options = {});

void write_report_csv(const EvalReport& report, const std::filesystem::path& path);
void write_report_text(const EvalReport& report, const std::filesystem::path& path);
void write_report_json(const EvalReport& report, const std::filesystem::path& path);
std::string report_text(const EvalReport& report);

}  // namespace oodrecon::eval
