#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "oodrecon/error.hpp"
#include "oodrecon/eval.hpp"
#include "oodrecon/version.hpp"
#include "stages.hpp"

namespace {

using namespace oodrecon;
using namespace oodrecon::cli;
using nlohmann::json;

int exit_code_for(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::io:
    case ErrorKind::divergence:
      return 1;
    default:
      return 2;  // argument, config, or input-contract problems
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reconstruction-based out-of-distribution screening for grayscale images"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string("oodrecon ") + std::string(kToolVersion) +
                                        " (weight format " +
                                        std::to_string(kWeightFormatVersion) + ")");

  // phantom-gen
  PhantomGenArgs pg;
  std::string pg_anomaly = "none";
  std::string pg_out;
  auto* pg_cmd = app.add_subcommand("phantom-gen", "Generate a synthetic phantom corpus");
  pg_cmd->add_option("--count", pg.count, "Number of images")->required();
  pg_cmd->add_option("--resolution", pg.resolution, "Image resolution (pixels)");
  pg_cmd->add_option("--anomaly", pg_anomaly,
                     "none|bright-line|peripheral-fluid|texture-shift");
  pg_cmd->add_option("--seed", pg.seed, "Corpus seed")->required();
  pg_cmd->add_option("--out", pg_out, "Output directory")->required();
  pg_cmd->add_option("--prefix", pg.prefix, "Filename prefix");
  pg_cmd->add_option("--noise-hu", pg.noise_hu, "Gaussian noise sigma in HU");
  pg_cmd->add_option("--organ-count", pg.organ_count, "Organ ellipses per phantom");
  pg_cmd->add_option("--organ-hu-min", pg.organ_hu_min, "Organ HU lower bound");
  pg_cmd->add_option("--organ-hu-max", pg.organ_hu_max, "Organ HU upper bound");
  pg_cmd->add_flag("--truth-masks", pg.truth_masks, "Also write ground-truth body masks");
  pg_cmd->add_option("--jobs", pg.jobs, "Worker threads (0 = auto)");

  // preprocess
  PreprocessArgs pp;
  std::string pp_in, pp_out, pp_masks;
  auto* pp_cmd = app.add_subcommand("preprocess",
                                    "Window HU rasters to [0,255] PNGs and extract body masks");
  pp_cmd->add_option("--level", pp.window.level, "Window level (HU)");
  pp_cmd->add_option("--width", pp.window.width, "Window width (HU)");
  pp_cmd->add_option("--in", pp_in, "Corpus directory (with manifest.csv)")->required();
  pp_cmd->add_option("--out", pp_out, "Output directory")->required();
  pp_cmd->add_option("--mask-out", pp_masks, "Mask directory (default OUT/masks)");
  pp_cmd->add_option("--mask-threshold", pp.mask_threshold, "Body-mask threshold");
  pp_cmd->add_option("--jobs", pp.jobs, "Worker threads (0 = auto)");

  // train
  TrainArgs tr;
  std::string tr_in, tr_out, tr_channels;
  int tr_resolution = 64;
  auto* tr_cmd = app.add_subcommand("train", "Train the decoder by generative latent optimization");
  tr_cmd->add_option("--in", tr_in, "Preprocessed corpus directory")->required();
  tr_cmd->add_option("--out", tr_out, "Output weight file")->required();
  tr_cmd->add_option("--epochs", tr.hyper.epochs, "Training epochs");
  tr_cmd->add_option("--seed", tr.hyper.seed, "Training seed")->required();
  tr_cmd->add_option("--resolution", tr_resolution, "Corpus resolution");
  tr_cmd->add_option("--latent-dim", tr.config.latent_dim, "Latent dimension");
  tr_cmd->add_option("--base-resolution", tr.config.base_resolution, "Base grid size");
  tr_cmd->add_option("--channels", tr_channels, "Comma-separated stage channel counts");
  tr_cmd->add_option("--lr-params", tr.hyper.lr_params, "Weight learning rate");
  tr_cmd->add_option("--lr-latents", tr.hyper.lr_latents, "Latent learning rate");
  tr_cmd->add_option("--batch-size", tr.hyper.batch_size, "Minibatch size");
  tr_cmd->add_option("--val-fraction", tr.hyper.val_fraction, "Held-out fraction");
  tr_cmd->add_option("--pyramid-levels", tr.hyper.pyramid_levels, "Loss pyramid levels");
  tr_cmd->add_option("--pyramid-weight", tr.hyper.pyramid_weight, "Loss pyramid weight");
  tr_cmd->add_flag("--mirror", tr.hyper.mirror_augment, "Horizontal-flip augmentation");
  tr_cmd->add_option("--jobs", tr.hyper.jobs, "Worker threads (0 = auto)");

  // project
  ProjectArgs pj;
  std::string pj_weights, pj_in, pj_masks, pj_out;
  auto* pj_cmd = app.add_subcommand("project",
                                    "Reconstruct images by optimizing latent codes");
  pj_cmd->add_option("--weights", pj_weights, "Weight file")->required();
  pj_cmd->add_option("--in", pj_in, "Directory with manifest.csv and PNGs")->required();
  pj_cmd->add_option("--mask-dir", pj_masks, "Body-mask directory")->required();
  pj_cmd->add_option("--out", pj_out, "Output directory")->required();
  pj_cmd->add_option("--steps", pj.config.num_steps, "Optimization steps");
  pj_cmd->add_option("--seed", pj.config.seed, "Projection seed")->required();
  pj_cmd->add_option("--initial-lr", pj.config.initial_lr, "Peak learning rate");
  pj_cmd->add_option("--init-noise-factor", pj.config.init_noise_factor,
                     "Initial latent noise scale");
  pj_cmd->add_option("--latent-mean-samples", pj.config.latent_mean_samples,
                     "Samples for the mean-latent start");
  pj_cmd->add_option("--pyramid-levels", pj.config.pyramid_levels, "Loss pyramid levels");
  pj_cmd->add_option("--pyramid-weight", pj.config.pyramid_weight, "Loss pyramid weight");
  bool pj_unmasked = false;
  pj_cmd->add_flag("--unmasked-loss", pj_unmasked,
                   "Compute the pixel loss over the full image instead of the body mask");
  pj_cmd->add_option("--jobs", pj.jobs, "Worker threads (0 = auto)");

  // score
  ScoreArgs sc;
  std::string sc_manifest, sc_recon, sc_masks, sc_out;
  auto* sc_cmd = app.add_subcommand("score",
                                    "Compute WD/MSE/SSIM per reconstructed image");
  sc_cmd->add_option("--manifest", sc_manifest, "Evaluation manifest CSV")->required();
  sc_cmd->add_option("--recon-dir", sc_recon, "Reconstruction directory")->required();
  sc_cmd->add_option("--mask-dir", sc_masks, "Body-mask directory")->required();
  sc_cmd->add_option("--out", sc_out, "Output score CSV")->required();
  sc_cmd->add_option("--jobs", sc.jobs, "Worker threads (0 = auto)");

  // evaluate
  EvaluateArgs ev;
  std::string ev_manifest, ev_scores, ev_out;
  std::string ev_wd = "higher-is-ood", ev_mse = "higher-is-ood";
  auto* ev_cmd = app.add_subcommand("evaluate",
                                    "Undersample, compute AUROCs, emit the report grid");
  ev_cmd->add_option("--manifest", ev_manifest, "Evaluation manifest CSV")->required();
  ev_cmd->add_option("--scores", ev_scores, "Score CSV")->required();
  ev_cmd->add_option("--seed", ev.seed, "Undersampling master seed")->required();
  ev_cmd->add_option("--out-dir", ev_out, "Report output directory")->required();
  ev_cmd->add_option("--wd-orientation", ev_wd, "higher-is-ood|lower-is-ood");
  ev_cmd->add_option("--mse-orientation", ev_mse, "higher-is-ood|lower-is-ood");

  // pipeline
  PipelineArgs pl;
  std::string pl_config;
  auto* pl_cmd = app.add_subcommand("pipeline",
                                    "Run every stage from a single JSON config");
  pl_cmd->add_option("--config", pl_config, "Pipeline config JSON")->required();
  pl_cmd->add_option("--jobs", pl.jobs_override, "Override the config's worker count");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  auto parse_orientation = [](const std::string& s) {
    if (s == "higher-is-ood") return eval::Orientation::higher_is_ood;
    if (s == "lower-is-ood") return eval::Orientation::lower_is_ood;
    fail(ErrorKind::config, "unknown orientation '" + s + "'");
  };

  try {
    const std::string started = utc_timestamp();
    if (pg_cmd->parsed()) {
      pg.anomaly = imaging::anomaly_from_string(pg_anomaly);
      pg.out_dir = pg_out;
      run_phantom_gen(pg);
      write_run_manifest(pg.out_dir, "phantom-gen",
                         json{{"count", pg.count},
                              {"resolution", pg.resolution},
                              {"anomaly", pg_anomaly},
                              {"prefix", pg.prefix},
                              {"noise_hu", pg.noise_hu},
                              {"organ_count", pg.organ_count},
                              {"organ_hu_min", pg.organ_hu_min},
                              {"organ_hu_max", pg.organ_hu_max}},
                         json{{"seed", pg.seed}}, started);
    } else if (pp_cmd->parsed()) {
      pp.in_dir = pp_in;
      pp.out_dir = pp_out;
      pp.mask_dir = pp_masks;
      run_preprocess(pp);
      write_run_manifest(pp.out_dir, "preprocess",
                         json{{"level", pp.window.level},
                              {"width", pp.window.width},
                              {"mask_threshold", pp.mask_threshold},
                              {"in", pp_in}},
                         json::object(), started);
    } else if (tr_cmd->parsed()) {
      tr.in_dir = tr_in;
      tr.out_weights = tr_out;
      tr.config.output_resolution = tr_resolution;
      if (!tr_channels.empty()) {
        std::vector<int> channels;
        std::string token;
        for (char c : tr_channels + ",") {
          if (c == ',') {
            if (!token.empty()) channels.push_back(std::stoi(token));
            token.clear();
          } else {
            token.push_back(c);
          }
        }
        tr.config.channels = channels;
      }
      const auto summary = run_train(tr);
      std::fprintf(stderr,
                   "train: %zu images, %d epochs, best validation loss %g (epoch %d)\n",
                   summary.corpus_size, summary.epochs, summary.best_val_loss,
                   summary.best_epoch);
      write_run_manifest(tr.out_weights.parent_path(), "train",
                         json{{"in", tr_in},
                              {"epochs", tr.hyper.epochs},
                              {"latent_dim", tr.config.latent_dim},
                              {"channels", tr.config.channels},
                              {"lr_params", tr.hyper.lr_params},
                              {"lr_latents", tr.hyper.lr_latents},
                              {"batch_size", tr.hyper.batch_size},
                              {"val_fraction", tr.hyper.val_fraction},
                              {"best_val_loss", summary.best_val_loss},
                              {"best_epoch", summary.best_epoch}},
                         json{{"seed", tr.hyper.seed}}, started);
    } else if (pj_cmd->parsed()) {
      pj.weights = pj_weights;
      pj.in_dir = pj_in;
      pj.mask_dir = pj_masks;
      pj.out_dir = pj_out;
      pj.config.mask_pixel_loss = !pj_unmasked;
      run_project(pj);
      write_run_manifest(pj.out_dir, "project",
                         json{{"weights", pj_weights},
                              {"in", pj_in},
                              {"steps", pj.config.num_steps},
                              {"mask_pixel_loss", pj.config.mask_pixel_loss}},
                         json{{"seed", pj.config.seed}}, started);
    } else if (sc_cmd->parsed()) {
      sc.manifest = sc_manifest;
      sc.recon_dir = sc_recon;
      sc.mask_dir = sc_masks;
      sc.out_csv = sc_out;
      run_score(sc);
      write_run_manifest(sc.out_csv.parent_path(), "score",
                         json{{"manifest", sc_manifest},
                              {"recon_dir", sc_recon},
                              {"mask_dir", sc_masks}},
                         json::object(), started);
    } else if (ev_cmd->parsed()) {
      ev.manifest = ev_manifest;
      ev.scores_csv = ev_scores;
      ev.out_dir = ev_out;
      ev.options.wd = parse_orientation(ev_wd);
      ev.options.mse = parse_orientation(ev_mse);
      const auto report = run_evaluate(ev);
      std::fputs(eval::report_text(report).c_str(), stdout);
      write_run_manifest(ev.out_dir, "evaluate",
                         json{{"manifest", ev_manifest},
                              {"scores", ev_scores},
                              {"wd_orientation", ev_wd},
                              {"mse_orientation", ev_mse}},
                         json{{"seed", ev.seed}}, started);
    } else if (pl_cmd->parsed()) {
      pl.config_path = pl_config;
      run_pipeline(pl);
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "oodrecon: %s error: %s\n", to_string(e.kind()), e.what());
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "oodrecon: %s\n", e.what());
    return 1;
  }
  return 0;
}
