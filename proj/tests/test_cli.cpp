#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "oodrecon/csv.hpp"
#include "oodrecon/eval.hpp"
#include "oodrecon/io_util.hpp"
#include "oodrecon/metrics.hpp"
#include "oodrecon/phantom.hpp"
#include "oodrecon/png_io.hpp"
#include "oodrecon/raster_io.hpp"
#include "support/subprocess.hpp"
#include "support/tmpdir.hpp"

using namespace oodrecon;
using test_support::run_cli;
using test_support::TmpDir;

namespace fs = std::filesystem;

TEST_CASE("cli: --version reports tool and weight-format versions") {
  TmpDir tmp;
  const auto r = run_cli({"--version"}, tmp.path());
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("oodrecon 0.1.0") != std::string::npos);
  CHECK(r.out.find("weight format 1") != std::string::npos);
}

TEST_CASE("cli: unknown flags and missing subcommands exit 2") {
  TmpDir tmp;
  CHECK(run_cli({"phantom-gen", "--nope"}, tmp.path()).exit_code == 2);
  CHECK(run_cli({}, tmp.path()).exit_code == 2);
  CHECK(run_cli({"frobnicate"}, tmp.path()).exit_code == 2);
}

TEST_CASE("cli: phantom-gen writes exactly N rasters plus the manifest") {
  TmpDir tmp;
  const auto out = (tmp / "corpus").string();
  const auto r = run_cli({"phantom-gen", "--count", "10", "--seed", "7", "--out", out,
                          "--resolution", "32"},
                         tmp.path());
  REQUIRE(r.exit_code == 0);

  int rasters = 0;
  for (const auto& e : fs::directory_iterator(out))
    if (e.path().extension() == ".rimg") ++rasters;
  CHECK(rasters == 10);

  const auto manifest = imaging::read_corpus_manifest(fs::path(out) / "manifest.csv");
  REQUIRE(manifest.size() == 10);
  for (const auto& row : manifest) {
    CHECK(row.label == "in-distribution");
    CHECK(row.anomaly_kind == "none");
    CHECK(fs::exists(fs::path(out) / row.path));
  }
  CHECK(fs::exists(fs::path(out) / "run_manifest.json"));

  SUBCASE("rerunning with the same seed reproduces the rasters byte for byte") {
    const auto out2 = (tmp / "corpus2").string();
    REQUIRE(run_cli({"phantom-gen", "--count", "10", "--seed", "7", "--out", out2,
                     "--resolution", "32"},
                    tmp.path())
                .exit_code == 0);
    for (const auto& row : manifest) {
      CHECK(read_file_bytes(fs::path(out) / row.path) ==
            read_file_bytes(fs::path(out2) / row.path));
    }
  }
}

TEST_CASE("cli: preprocess windows the corpus and emits masks") {
  TmpDir tmp;
  const auto corpus = (tmp / "corpus").string();
  const auto prep = (tmp / "prep").string();
  REQUIRE(run_cli({"phantom-gen", "--count", "4", "--seed", "3", "--out", corpus,
                   "--resolution", "32", "--anomaly", "texture-shift"},
                  tmp.path())
              .exit_code == 0);
  const auto r = run_cli({"preprocess", "--level", "50", "--width", "350", "--in",
                          corpus, "--out", prep},
                         tmp.path());
  REQUIRE(r.exit_code == 0);

  const auto entries = eval::read_eval_manifest(fs::path(prep) / "manifest.csv");
  REQUIRE(entries.size() == 4);
  for (const auto& e : entries) {
    CHECK(e.dataset == "texture-shift");
    CHECK(e.is_ood);
    const auto img = imaging::load_png(fs::path(prep) / e.path);
    CHECK(img.width == 32);
    const auto mask = imaging::load_mask_png(fs::path(prep) / "masks" / (e.image_id + ".png"));
    CHECK(mask.count() > 0);
  }
}

TEST_CASE("cli: evaluate reports missing scores by id with exit 2") {
  TmpDir tmp;
  std::vector<eval::ManifestEntry> entries;
  std::vector<metrics::ScoreRecord> scores;
  for (int i = 0; i < 4; ++i) {
    eval::ManifestEntry e;
    e.image_id = "img" + std::to_string(i);
    e.path = e.image_id + ".bin";
    e.dataset = i < 2 ? "in-distribution" : "kind";
    e.is_ood = i >= 2;
    entries.push_back(e);
    atomic_write_file(tmp / e.path, "x");
    if (e.image_id != "img3") {
      metrics::ScoreRecord s;
      s.image_id = e.image_id;
      s.dataset = e.dataset;
      s.wd = 1.0 + i;
      s.mse = 10.0 + i;
      s.ssim = 0.5;
      s.mask_pixels = 10;
      scores.push_back(s);
    }
  }
  eval::write_eval_manifest(tmp / "manifest.csv", entries);
  metrics::write_scores_csv(tmp / "scores.csv", scores);

  const auto r = run_cli({"evaluate", "--manifest", (tmp / "manifest.csv").string(),
                          "--scores", (tmp / "scores.csv").string(), "--seed", "1",
                          "--out-dir", (tmp / "report").string()},
                         tmp.path());
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("img3") != std::string::npos);
}

TEST_CASE("cli: bad pipeline config (missing seed) exits 2") {
  TmpDir tmp;
  nlohmann::json cfg;
  cfg["out_dir"] = (tmp / "run").string();
  cfg["corpus"] = {{"train_count", 4}, {"id_test_count", 2}, {"ood_count", 2}};
  // corpus seeds deliberately absent
  cfg["train"] = {{"epochs", 1}, {"seed", 1}};
  cfg["projection"] = {{"num_steps", 2}, {"seed", 2}};
  cfg["evaluate"] = {{"seed", 3}};
  atomic_write_file(tmp / "cfg.json", cfg.dump(2));
  const auto r =
      run_cli({"pipeline", "--config", (tmp / "cfg.json").string()}, tmp.path());
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("train_seed") != std::string::npos);
}

namespace {

nlohmann::json tiny_pipeline_config(const fs::path& out_dir) {
  nlohmann::json cfg;
  cfg["out_dir"] = out_dir.string();
  cfg["jobs"] = 2;
  cfg["resolution"] = 32;
  cfg["window"] = {{"level", 50.0}, {"width", 350.0}};
  cfg["phantom"] = {{"noise_hu", 8.0}, {"organ_count", 4}};
  cfg["corpus"] = {{"train_count", 12}, {"train_seed", 101},
                   {"id_test_count", 6},  {"id_test_seed", 202},
                   {"ood_count", 6},      {"ood_seed", 303},
                   {"anomalies", {"bright-line", "texture-shift"}}};
  cfg["generator"] = {{"latent_dim", 24},
                      {"base_resolution", 4},
                      {"channels", {24, 16, 8, 4}}};
  cfg["train"] = {{"epochs", 4},      {"lr_params", 0.01}, {"lr_latents", 0.1},
                  {"batch_size", 8},  {"val_fraction", 0.1}, {"seed", 404}};
  cfg["projection"] = {{"num_steps", 20}, {"latent_mean_samples", 32}, {"seed", 505}};
  cfg["evaluate"] = {{"seed", 606}};
  return cfg;
}

}  // namespace

TEST_CASE("cli: pipeline end-to-end, reruns byte-identical") {
  TmpDir tmp;
  auto cfg = tiny_pipeline_config(tmp / "run1");
  atomic_write_file(tmp / "cfg1.json", cfg.dump(2));
  const auto r1 =
      run_cli({"pipeline", "--config", (tmp / "cfg1.json").string()}, tmp.path());
  REQUIRE(r1.exit_code == 0);

  // stage outputs all exist
  CHECK(fs::exists(tmp / "run1" / "weights.rgen"));
  CHECK(fs::exists(tmp / "run1" / "scores.csv"));
  CHECK(fs::exists(tmp / "run1" / "report.csv"));
  CHECK(fs::exists(tmp / "run1" / "report.txt"));
  CHECK(fs::exists(tmp / "run1" / "report.json"));
  CHECK(fs::exists(tmp / "run1" / "run_manifest.json"));

  // the report grid covers both anomaly kinds
  const auto scores = metrics::read_scores_csv(tmp / "run1" / "scores.csv");
  CHECK(scores.size() == 6 + 6 + 6);
  const auto report_rows = read_csv(tmp / "run1" / "report.csv");
  REQUIRE(report_rows.size() == 3);

  // projection sidecars carry finite losses
  const auto sidecar = nlohmann::json::parse(
      read_file_bytes(tmp / "run1" / "recon" / "idtest_00000.json"));
  CHECK(sidecar["final_loss"].is_number());
  CHECK(sidecar["steps"] == 20);

  cfg = tiny_pipeline_config(tmp / "run2");
  atomic_write_file(tmp / "cfg2.json", cfg.dump(2));
  const auto r2 =
      run_cli({"pipeline", "--config", (tmp / "cfg2.json").string()}, tmp.path());
  REQUIRE(r2.exit_code == 0);

  for (const char* f : {"scores.csv", "report.csv", "report.txt", "report.json"}) {
    CHECK(read_file_bytes(tmp / "run1" / f) == read_file_bytes(tmp / "run2" / f));
  }
}

TEST_CASE("cli: project emits raster, preview png, and sidecar per image") {
  TmpDir tmp;
  // minimal train + project chain at 16x16
  const auto corpus = (tmp / "corpus").string();
  const auto prep = (tmp / "prep").string();
  REQUIRE(run_cli({"phantom-gen", "--count", "6", "--seed", "2", "--out", corpus,
                   "--resolution", "16", "--organ-count", "2"},
                  tmp.path())
              .exit_code == 0);
  REQUIRE(run_cli({"preprocess", "--in", corpus, "--out", prep}, tmp.path())
              .exit_code == 0);
  REQUIRE(run_cli({"train", "--in", prep, "--out", (tmp / "w.rgen").string(),
                   "--epochs", "2", "--seed", "3", "--resolution", "16",
                   "--latent-dim", "8", "--channels", "8,6,4"},
                  tmp.path())
              .exit_code == 0);
  const auto r = run_cli({"project", "--weights", (tmp / "w.rgen").string(), "--in",
                          prep, "--mask-dir", (fs::path(prep) / "masks").string(),
                          "--out", (tmp / "recon").string(), "--steps", "5", "--seed",
                          "4"},
                         tmp.path());
  REQUIRE(r.exit_code == 0);
  for (int i = 0; i < 6; ++i) {
    const std::string stem = "phantom_0000" + std::to_string(i);
    CHECK(fs::exists(tmp / "recon" / (stem + ".rimg")));
    CHECK(fs::exists(tmp / "recon" / (stem + ".png")));
    CHECK(fs::exists(tmp / "recon" / (stem + ".json")));
  }

  SUBCASE("score consumes the projection outputs") {
    const auto rs = run_cli({"score", "--manifest",
                             (fs::path(prep) / "manifest.csv").string(), "--recon-dir",
                             (tmp / "recon").string(), "--mask-dir",
                             (fs::path(prep) / "masks").string(), "--out",
                             (tmp / "scores.csv").string()},
                            tmp.path());
    REQUIRE(rs.exit_code == 0);
    const auto scores = metrics::read_scores_csv(tmp / "scores.csv");
    CHECK(scores.size() == 6);
    for (const auto& s : scores) {
      CHECK(s.wd >= 0.0);
      CHECK(s.mse >= 0.0);
      CHECK(s.ssim >= -1.0);
      CHECK(s.ssim <= 1.0);
      CHECK(s.mask_pixels > 0);
    }
  }
}

TEST_CASE("cli: train rejects a resolution mismatch with exit 2") {
  TmpDir tmp;
  const auto corpus = (tmp / "corpus").string();
  const auto prep = (tmp / "prep").string();
  REQUIRE(run_cli({"phantom-gen", "--count", "3", "--seed", "2", "--out", corpus,
                   "--resolution", "32"},
                  tmp.path())
              .exit_code == 0);
  REQUIRE(run_cli({"preprocess", "--in", corpus, "--out", prep}, tmp.path())
              .exit_code == 0);
  const auto r = run_cli({"train", "--in", prep, "--out", (tmp / "w.rgen").string(),
                          "--epochs", "1", "--seed", "3", "--resolution", "16",
                          "--latent-dim", "8", "--channels", "8,6,4"},
                         tmp.path());
  CHECK(r.exit_code == 2);
}
