#include "stages.hpp"

#include <algorithm>
#include <cstdio>
#include <ctime>
#include <mutex>
#include <string>

#include "oodrecon/csv.hpp"
#include "oodrecon/error.hpp"
#include "oodrecon/io_util.hpp"
#include "oodrecon/metrics.hpp"
#include "oodrecon/parallel.hpp"
#include "oodrecon/png_io.hpp"
#include "oodrecon/raster_io.hpp"
#include "oodrecon/rng.hpp"
#include "oodrecon/version.hpp"

namespace oodrecon::cli {

using nlohmann::json;

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_run_manifest(const fs::path& dir, const std::string& subcommand,
                        const json& config_echo, const json& seeds,
                        const std::string& started_utc) {
  json j;
  j["tool"] = "oodrecon";
  j["tool_version"] = std::string(kToolVersion);
  j["weight_format_version"] = kWeightFormatVersion;
  j["subcommand"] = subcommand;
  j["config"] = config_echo;
  j["seeds"] = seeds;
  j["started_utc"] = started_utc;
  j["finished_utc"] = utc_timestamp();
  atomic_write_file(dir / "run_manifest.json", j.dump(2) + "\n");
}

namespace {

std::string zero_pad(int value, int width) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%0*d", width, value);
  return buf;
}

std::mutex log_mutex;

void log_line(const std::string& line) {
  std::lock_guard<std::mutex> lock(log_mutex);
  std::fprintf(stderr, "%s\n", line.c_str());
}

}  // namespace

std::vector<imaging::CorpusManifestRow> run_phantom_gen(const PhantomGenArgs& args) {
  if (args.count < 1) fail(ErrorKind::config, "--count must be at least 1");
  fs::create_directories(args.out_dir);
  if (args.truth_masks) fs::create_directories(args.out_dir / "truth_masks");

  std::vector<imaging::CorpusManifestRow> rows(args.count);
  parallel_for(args.count, args.jobs, [&](std::size_t i) {
    imaging::PhantomSpec spec;
    spec.resolution = args.resolution;
    spec.anomaly = args.anomaly;
    spec.noise_hu = args.noise_hu;
    spec.organ_count = args.organ_count;
    spec.organ_hu_min = args.organ_hu_min;
    spec.organ_hu_max = args.organ_hu_max;
    spec.seed = derive_seed(args.seed, static_cast<std::uint64_t>(i));

    const auto sample = imaging::gen_phantom(spec);
    const std::string stem = args.prefix + "_" + zero_pad(static_cast<int>(i), 5);
    imaging::save_hu_raster(sample.hu, args.out_dir / (stem + ".rimg"));
    if (args.truth_masks)
      imaging::save_mask_png(sample.body, args.out_dir / "truth_masks" / (stem + ".png"));

    rows[i] = {stem + ".rimg", sample.label, imaging::to_string(sample.kind), spec.seed};
  });
  write_corpus_manifest(args.out_dir / "manifest.csv", rows);
  return rows;
}

std::vector<eval::ManifestEntry> run_preprocess(const PreprocessArgs& args) {
  const auto rows = imaging::read_corpus_manifest(args.in_dir / "manifest.csv");
  if (rows.empty()) fail(ErrorKind::invalid_input, "empty corpus manifest");
  const fs::path mask_dir = args.mask_dir.empty() ? args.out_dir / "masks" : args.mask_dir;
  fs::create_directories(args.out_dir);
  fs::create_directories(mask_dir);

  std::vector<eval::ManifestEntry> entries(rows.size());
  parallel_for(rows.size(), args.jobs, [&](std::size_t i) {
    const auto& row = rows[i];
    const auto hu = imaging::load_hu_raster(args.in_dir / row.path);
    const auto windowed = imaging::quantize(imaging::window_ct(hu, args.window));
    const auto mask = imaging::extract_body_mask(windowed, args.mask_threshold);

    const std::string stem = fs::path(row.path).stem().string();
    imaging::save_png(windowed, args.out_dir / (stem + ".png"));
    imaging::save_mask_png(mask, mask_dir / (stem + ".png"));

    eval::ManifestEntry e;
    e.image_id = stem;
    e.path = stem + ".png";
    e.dataset = row.anomaly_kind == "none" ? "in-distribution" : row.anomaly_kind;
    e.is_ood = row.label == "ood";
    entries[i] = std::move(e);
  });
  eval::write_eval_manifest(args.out_dir / "manifest.csv", entries);
  return entries;
}

TrainSummary run_train(const TrainArgs& args) {
  const auto manifest = eval::read_eval_manifest(args.in_dir / "manifest.csv");
  if (manifest.empty()) fail(ErrorKind::invalid_input, "empty training manifest");

  std::vector<imaging::ImageGrid> corpus(manifest.size());
  parallel_for(manifest.size(), args.hyper.jobs, [&](std::size_t i) {
    corpus[i] = imaging::load_png(
        eval::resolve_manifest_path(args.in_dir / "manifest.csv", manifest[i].path));
  });

  const auto state = generator::train_glo(corpus, args.config, args.hyper);

  generator::WeightMetadata meta;
  meta.seed = args.hyper.seed;
  meta.epochs = state.epoch;
  meta.best_val_loss = state.best_val_loss;
  meta.note = "glo best-validation checkpoint (epoch " +
              std::to_string(state.best_epoch) + ")";
  generator::save_weights(state.best_params, args.out_weights, meta);

  TrainSummary summary;
  summary.epochs = state.epoch;
  summary.best_epoch = state.best_epoch;
  summary.best_val_loss = state.best_val_loss;
  summary.corpus_size = corpus.size();
  summary.train_loss_history = state.train_loss_history;
  summary.val_loss_history = state.val_loss_history;
  return summary;
}

namespace {

json projection_config_echo(const projection::ProjectionConfig& cfg) {
  return json{
      {"num_steps", cfg.num_steps},
      {"initial_lr", cfg.initial_lr},
      {"lr_rampup_fraction", cfg.lr_rampup_fraction},
      {"lr_rampdown_fraction", cfg.lr_rampdown_fraction},
      {"init_noise_factor", cfg.init_noise_factor},
      {"noise_ramp_fraction", cfg.noise_ramp_fraction},
      {"latent_mean_samples", cfg.latent_mean_samples},
      {"pyramid_levels", cfg.pyramid_levels},
      {"pyramid_weight", cfg.pyramid_weight},
      {"mask_pixel_loss", cfg.mask_pixel_loss},
      {"seed", cfg.seed},
  };
}

}  // namespace

void run_project(const ProjectArgs& args) {
  const auto loaded = generator::load_weights(args.weights);
  const auto manifest_path = args.in_dir / "manifest.csv";
  const auto manifest = eval::read_eval_manifest(manifest_path);
  if (manifest.empty()) fail(ErrorKind::invalid_input, "empty projection manifest");
  fs::create_directories(args.out_dir);

  parallel_for(manifest.size(), args.jobs, [&](std::size_t i) {
    const auto& entry = manifest[i];
    const auto target =
        imaging::load_png(eval::resolve_manifest_path(manifest_path, entry.path));
    const auto mask = imaging::load_mask_png(args.mask_dir / (entry.image_id + ".png"));

    projection::ProjectionConfig cfg = args.config;
    cfg.seed = derive_seed(args.config.seed, entry.image_id);
    const auto result = projection::project(loaded.params, target, mask, cfg);

    imaging::save_image_raster(result.reconstruction,
                               args.out_dir / (entry.image_id + ".rimg"));
    imaging::save_png(imaging::quantize(result.reconstruction),
                      args.out_dir / (entry.image_id + ".png"));

    json sidecar;
    sidecar["image_id"] = entry.image_id;
    sidecar["final_loss"] = result.best_loss;
    sidecar["best_step"] = result.best_step;
    sidecar["steps"] = result.steps;
    sidecar["seed"] = result.seed;
    sidecar["config"] = projection_config_echo(args.config);
    atomic_write_file(args.out_dir / (entry.image_id + ".json"),
                      sidecar.dump(2) + "\n");

    if (!args.quiet)
      log_line("project " + entry.image_id + ": loss " +
               format_double(result.best_loss) + " (step " +
               std::to_string(result.best_step) + "/" + std::to_string(result.steps) +
               ")");
  });
}

void run_score(const ScoreArgs& args) {
  const auto manifest = eval::read_eval_manifest(args.manifest);
  if (manifest.empty()) fail(ErrorKind::invalid_input, "empty score manifest");

  std::vector<metrics::ScoreRecord> records(manifest.size());
  parallel_for(manifest.size(), args.jobs, [&](std::size_t i) {
    const auto& entry = manifest[i];
    const auto original =
        imaging::load_png(eval::resolve_manifest_path(args.manifest, entry.path));
    const auto recon =
        imaging::load_image_raster(args.recon_dir / (entry.image_id + ".rimg"));
    const auto mask = imaging::load_mask_png(args.mask_dir / (entry.image_id + ".png"));
    records[i] = metrics::score_pair(entry.image_id, entry.dataset, original, recon, mask);
  });
  metrics::write_scores_csv(args.out_csv, records);
}

eval::EvalReport run_evaluate(const EvaluateArgs& args) {
  const auto manifest = eval::read_eval_manifest(args.manifest);
  const auto scores = metrics::read_scores_csv(args.scores_csv);
  const auto report = eval::evaluate_experiment(manifest, scores, args.seed, args.options);
  fs::create_directories(args.out_dir);
  eval::write_report_csv(report, args.out_dir / "report.csv");
  eval::write_report_text(report, args.out_dir / "report.txt");
  eval::write_report_json(report, args.out_dir / "report.json");
  return report;
}

// ---- pipeline ----

namespace {

// Seeds are refused a default on purpose: a pipeline run must pin all of them.
std::uint64_t require_seed(const json& j, const std::string& context,
                           const std::string& key) {
  if (!j.contains(key))
    fail(ErrorKind::config, "pipeline config is missing required seed '" + context +
                                "." + key + "'");
  return j.at(key).get<std::uint64_t>();
}

const json& require_section(const json& j, const std::string& key) {
  if (!j.contains(key))
    fail(ErrorKind::config, "pipeline config is missing section '" + key + "'");
  return j.at(key);
}

}  // namespace

void run_pipeline(const PipelineArgs& args) {
  const std::string started = utc_timestamp();
  json cfg;
  try {
    cfg = json::parse(read_file_bytes(args.config_path));
  } catch (const json::exception& e) {
    fail(ErrorKind::config, "bad pipeline config: " + std::string(e.what()));
  }

  json echo = cfg;
  try {
    const fs::path out_dir = require_section(cfg, "out_dir").get<std::string>();
    const int jobs = args.jobs_override >= 0 ? args.jobs_override
                                             : cfg.value("jobs", 0);
    const int resolution = cfg.value("resolution", 64);

    imaging::WindowSpec window;
    if (cfg.contains("window")) {
      window.level = cfg["window"].value("level", 50.0);
      window.width = cfg["window"].value("width", 350.0);
    }
    const float mask_threshold = cfg.value("mask_threshold", 10.0f);

    PhantomGenArgs phantom_base;
    phantom_base.resolution = resolution;
    phantom_base.jobs = jobs;
    if (cfg.contains("phantom")) {
      const auto& p = cfg["phantom"];
      phantom_base.noise_hu = p.value("noise_hu", phantom_base.noise_hu);
      phantom_base.organ_count = p.value("organ_count", phantom_base.organ_count);
      phantom_base.organ_hu_min = p.value("organ_hu_min", phantom_base.organ_hu_min);
      phantom_base.organ_hu_max = p.value("organ_hu_max", phantom_base.organ_hu_max);
    }

    const auto& corpus_cfg = require_section(cfg, "corpus");
    const int train_count = corpus_cfg.value("train_count", 500);
    const int id_test_count = corpus_cfg.value("id_test_count", 100);
    const int ood_count = corpus_cfg.value("ood_count", 100);
    const std::uint64_t train_seed = require_seed(corpus_cfg, "corpus", "train_seed");
    const std::uint64_t id_test_seed = require_seed(corpus_cfg, "corpus", "id_test_seed");
    const std::uint64_t ood_seed = require_seed(corpus_cfg, "corpus", "ood_seed");
    std::vector<std::string> kinds =
        corpus_cfg.value("anomalies", std::vector<std::string>{
                                          "bright-line", "peripheral-fluid",
                                          "texture-shift"});
    if (kinds.empty()) fail(ErrorKind::config, "pipeline needs at least one anomaly kind");

    generator::GeneratorConfig gen_cfg;
    gen_cfg.output_resolution = resolution;
    if (cfg.contains("generator")) {
      const auto& g = cfg["generator"];
      gen_cfg.latent_dim = g.value("latent_dim", gen_cfg.latent_dim);
      gen_cfg.base_resolution = g.value("base_resolution", gen_cfg.base_resolution);
      gen_cfg.channels = g.value("channels", gen_cfg.channels);
      gen_cfg.activation_slope = g.value("activation_slope", gen_cfg.activation_slope);
    }
    gen_cfg.validate();

    const auto& train_cfg = require_section(cfg, "train");
    generator::TrainHyper hyper;
    hyper.epochs = train_cfg.value("epochs", hyper.epochs);
    hyper.lr_params = train_cfg.value("lr_params", hyper.lr_params);
    hyper.lr_latents = train_cfg.value("lr_latents", hyper.lr_latents);
    hyper.batch_size = train_cfg.value("batch_size", hyper.batch_size);
    hyper.val_fraction = train_cfg.value("val_fraction", hyper.val_fraction);
    hyper.pyramid_levels = train_cfg.value("pyramid_levels", hyper.pyramid_levels);
    hyper.pyramid_weight = train_cfg.value("pyramid_weight", hyper.pyramid_weight);
    hyper.mirror_augment = train_cfg.value("mirror_augment", hyper.mirror_augment);
    hyper.seed = require_seed(train_cfg, "train", "seed");
    hyper.jobs = jobs;

    const auto& proj_cfg_json = require_section(cfg, "projection");
    projection::ProjectionConfig proj_cfg;
    proj_cfg.num_steps = proj_cfg_json.value("num_steps", proj_cfg.num_steps);
    proj_cfg.initial_lr = proj_cfg_json.value("initial_lr", proj_cfg.initial_lr);
    proj_cfg.lr_rampup_fraction =
        proj_cfg_json.value("lr_rampup_fraction", proj_cfg.lr_rampup_fraction);
    proj_cfg.lr_rampdown_fraction =
        proj_cfg_json.value("lr_rampdown_fraction", proj_cfg.lr_rampdown_fraction);
    proj_cfg.init_noise_factor =
        proj_cfg_json.value("init_noise_factor", proj_cfg.init_noise_factor);
    proj_cfg.noise_ramp_fraction =
        proj_cfg_json.value("noise_ramp_fraction", proj_cfg.noise_ramp_fraction);
    proj_cfg.latent_mean_samples =
        proj_cfg_json.value("latent_mean_samples", proj_cfg.latent_mean_samples);
    proj_cfg.pyramid_levels =
        proj_cfg_json.value("pyramid_levels", proj_cfg.pyramid_levels);
    proj_cfg.pyramid_weight =
        proj_cfg_json.value("pyramid_weight", proj_cfg.pyramid_weight);
    proj_cfg.mask_pixel_loss =
        proj_cfg_json.value("mask_pixel_loss", proj_cfg.mask_pixel_loss);
    proj_cfg.seed = require_seed(proj_cfg_json, "projection", "seed");

    const auto& eval_cfg = require_section(cfg, "evaluate");
    const std::uint64_t eval_seed = require_seed(eval_cfg, "evaluate", "seed");
    eval::EvalOptions eval_options;
    auto orientation_of = [](const std::string& s) {
      if (s == "higher-is-ood") return eval::Orientation::higher_is_ood;
      if (s == "lower-is-ood") return eval::Orientation::lower_is_ood;
      fail(ErrorKind::config, "unknown orientation '" + s + "'");
    };
    eval_options.wd = orientation_of(eval_cfg.value("wd_orientation", "higher-is-ood"));
    eval_options.mse =
        orientation_of(eval_cfg.value("mse_orientation", "higher-is-ood"));

    // 1. synthetic corpora
    log_line("pipeline: generating corpora");
    auto gen_stage = [&](const std::string& name, int count,
                         imaging::AnomalyKind kind, std::uint64_t seed,
                         const std::string& prefix) {
      PhantomGenArgs a = phantom_base;
      a.out_dir = out_dir / "corpus" / name;
      a.count = count;
      a.anomaly = kind;
      a.seed = seed;
      a.prefix = prefix;
      run_phantom_gen(a);
      return a.out_dir;
    };
    const auto train_corpus =
        gen_stage("train", train_count, imaging::AnomalyKind::none, train_seed, "train");
    const auto id_corpus = gen_stage("test_id", id_test_count,
                                     imaging::AnomalyKind::none, id_test_seed, "idtest");
    std::vector<fs::path> ood_corpora;
    for (const auto& kind : kinds)
      ood_corpora.push_back(gen_stage(kind, ood_count,
                                      imaging::anomaly_from_string(kind),
                                      derive_seed(ood_seed, kind), kind));

    // 2. preprocessing; all test-set masks share one directory
    log_line("pipeline: preprocessing");
    const fs::path masks = out_dir / "masks";
    auto prep_stage = [&](const fs::path& corpus, const std::string& name,
                          const fs::path& mask_out) {
      PreprocessArgs a;
      a.in_dir = corpus;
      a.out_dir = out_dir / "prep" / name;
      a.mask_dir = mask_out;
      a.window = window;
      a.mask_threshold = mask_threshold;
      a.jobs = jobs;
      return std::make_pair(a.out_dir, run_preprocess(a));
    };
    const auto [train_prep, train_entries] =
        prep_stage(train_corpus, "train", out_dir / "prep" / "train" / "masks");
    std::vector<std::pair<fs::path, std::vector<eval::ManifestEntry>>> test_preps;
    test_preps.push_back(prep_stage(id_corpus, "test_id", masks));
    for (std::size_t k = 0; k < kinds.size(); ++k)
      test_preps.push_back(prep_stage(ood_corpora[k], kinds[k], masks));

    // 3. decoder training
    log_line("pipeline: training decoder (" + std::to_string(train_count) +
             " images, " + std::to_string(hyper.epochs) + " epochs)");
    TrainArgs train_args;
    train_args.in_dir = train_prep;
    train_args.out_weights = out_dir / "weights.rgen";
    train_args.config = gen_cfg;
    train_args.hyper = hyper;
    const auto train_summary = run_train(train_args);
    log_line("pipeline: best validation loss " +
             format_double(train_summary.best_val_loss) + " at epoch " +
             std::to_string(train_summary.best_epoch));

    // 4. merged evaluation set
    const fs::path eval_dir = out_dir / "eval_set";
    fs::create_directories(eval_dir);
    std::vector<eval::ManifestEntry> merged;
    for (const auto& [prep_dir, entries] : test_preps) {
      for (auto e : entries) {
        e.path = fs::relative(prep_dir / e.path, eval_dir).string();
        merged.push_back(std::move(e));
      }
    }
    eval::write_eval_manifest(eval_dir / "manifest.csv", merged);

    // 5. projection
    log_line("pipeline: projecting " + std::to_string(merged.size()) + " images");
    ProjectArgs project_args;
    project_args.weights = train_args.out_weights;
    project_args.in_dir = eval_dir;
    project_args.mask_dir = masks;
    project_args.out_dir = out_dir / "recon";
    project_args.config = proj_cfg;
    project_args.jobs = jobs;
    project_args.quiet = true;
    run_project(project_args);

    // 6. scoring
    log_line("pipeline: scoring");
    ScoreArgs score_args;
    score_args.manifest = eval_dir / "manifest.csv";
    score_args.recon_dir = project_args.out_dir;
    score_args.mask_dir = masks;
    score_args.out_csv = out_dir / "scores.csv";
    score_args.jobs = jobs;
    run_score(score_args);

    // 7. evaluation report
    log_line("pipeline: evaluating");
    EvaluateArgs eval_args;
    eval_args.manifest = eval_dir / "manifest.csv";
    eval_args.scores_csv = score_args.out_csv;
    eval_args.out_dir = out_dir;
    eval_args.seed = eval_seed;
    eval_args.options = eval_options;
    const auto report = run_evaluate(eval_args);
    std::fputs(eval::report_text(report).c_str(), stdout);

    json seeds;
    seeds["corpus.train_seed"] = train_seed;
    seeds["corpus.id_test_seed"] = id_test_seed;
    seeds["corpus.ood_seed"] = ood_seed;
    seeds["train.seed"] = hyper.seed;
    seeds["projection.seed"] = proj_cfg.seed;
    seeds["evaluate.seed"] = eval_seed;
    write_run_manifest(out_dir, "pipeline", echo, seeds, started);
  } catch (const json::exception& e) {
    fail(ErrorKind::config, "bad pipeline config: " + std::string(e.what()));
  }
}

}  // namespace oodrecon::cli
