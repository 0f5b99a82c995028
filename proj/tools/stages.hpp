// Stage drivers shared by the individual subcommands and the pipeline
// orchestrator. Each driver validates its inputs, writes its outputs
// atomically, and is deterministic for fixed seeds regardless of --jobs.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "oodrecon/eval.hpp"
#include "oodrecon/generator.hpp"
#include "oodrecon/image.hpp"
#include "oodrecon/phantom.hpp"
#include "oodrecon/projection.hpp"
#include "oodrecon/train.hpp"

namespace oodrecon::cli {

namespace fs = std::filesystem;

struct PhantomGenArgs {
  fs::path out_dir;
  int count = 10;
  int resolution = 64;
  imaging::AnomalyKind anomaly = imaging::AnomalyKind::none;
  std::uint64_t seed = 0;
  std::string prefix = "phantom";
  double noise_hu = 8.0;
  int organ_count = 5;
  double organ_hu_min = -60.0;
  double organ_hu_max = 160.0;
  bool truth_masks = false;
  int jobs = 0;
};

std::vector<imaging::CorpusManifestRow> run_phantom_gen(const PhantomGenArgs& args);

struct PreprocessArgs {
  fs::path in_dir;
  fs::path out_dir;
  fs::path mask_dir;  // empty -> out_dir / "masks"
  imaging::WindowSpec window;
  float mask_threshold = 10.0f;
  int jobs = 0;
};

std::vector<eval::ManifestEntry> run_preprocess(const PreprocessArgs& args);

struct TrainArgs {
  fs::path in_dir;
  fs::path out_weights;
  generator::GeneratorConfig config;
  generator::TrainHyper hyper;
};

struct TrainSummary {
  int epochs = 0;
  int best_epoch = -1;
  double best_val_loss = 0.0;
  std::size_t corpus_size = 0;
  std::vector<double> train_loss_history;
  std::vector<double> val_loss_history;
};

TrainSummary run_train(const TrainArgs& args);

struct ProjectArgs {
  fs::path weights;
  fs::path in_dir;  // directory containing manifest.csv and the target PNGs
  fs::path mask_dir;
  fs::path out_dir;
  projection::ProjectionConfig config;  // config.seed is the master seed
  int jobs = 0;
  bool quiet = false;
};

void run_project(const ProjectArgs& args);

struct ScoreArgs {
  fs::path manifest;
  fs::path recon_dir;
  fs::path mask_dir;
  fs::path out_csv;
  int jobs = 0;
};

void run_score(const ScoreArgs& args);

struct EvaluateArgs {
  fs::path manifest;
  fs::path scores_csv;
  fs::path out_dir;
  std::uint64_t seed = 0;
  eval::EvalOptions options;
};

eval::EvalReport run_evaluate(const EvaluateArgs& args);

struct PipelineArgs {
  fs::path config_path;
  int jobs_override = -1;  // <0 -> take from config
};

void run_pipeline(const PipelineArgs& args);

/// `run_manifest.json` written next to every stage output: tool and format
/// versions, a config echo, the seeds involved, and wall-clock timestamps.
void write_run_manifest(const fs::path& dir, const std::string& subcommand,
                        const nlohmann::json& config_echo,
                        const nlohmann::json& seeds,
                        const std::string& started_utc);

std::string utc_timestamp();

}  // namespace oodrecon::cli
