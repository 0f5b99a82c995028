// Acceptance suite: one criterion per entry, one pass/fail line each.
// Budgets and thresholds are pinned in code; the binary exits non-zero if
// any criterion fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "oodrecon/csv.hpp"
#include "oodrecon/error.hpp"
#include "oodrecon/eval.hpp"
#include "oodrecon/generator.hpp"
#include "oodrecon/image.hpp"
#include "oodrecon/io_util.hpp"
#include "oodrecon/metrics.hpp"
#include "oodrecon/phantom.hpp"
#include "oodrecon/projection.hpp"
#include "oodrecon/rng.hpp"
#include "oodrecon/train.hpp"
#include "support/oracles.hpp"
#include "support/subprocess.hpp"
#include "support/tmpdir.hpp"

using namespace oodrecon;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Failure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require(bool ok, const std::string& msg) {
  if (!ok) throw Failure(msg);
}

void require_runtime(double elapsed, double budget, const std::string& what) {
  require(elapsed < budget, what + " took " + format_double(elapsed) +
                                " s, budget " + format_double(budget) + " s");
}

// ---- criterion 1: Wasserstein oracles ----

void criterion_wd_oracles() {
  const auto start = Clock::now();
  Rng rng(90001);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t na = 1 + rng.bounded(500);
    const std::size_t nb = 1 + rng.bounded(500);
    std::vector<double> a(na), b(nb);
    for (auto& x : a) x = rng.uniform(0.0, 255.0);
    for (auto& x : b) x = rng.uniform(0.0, 255.0);

    const double got = metrics::wasserstein_1d(a, b);
    const double oracle = test_oracles::wd_quantile_integral(a, b);
    require(std::abs(got - oracle) <= 1e-9 * std::max(1.0, oracle),
            "wasserstein_1d deviates from the quantile oracle by " +
                format_double(std::abs(got - oracle)));

    if (na == nb) continue;
    b.resize(na);
    for (auto& x : b) x = rng.uniform(0.0, 255.0);
    const double fast = metrics::wd_mean_sorted_diff(a, b);
    const double general = metrics::wd_cdf_integral(a, b);
    require(std::abs(fast - general) <= 1e-12 * std::max(1.0, general),
            "equal-size fast path deviates from the CDF path by " +
                format_double(std::abs(fast - general)));
  }
  require_runtime(seconds_since(start), 10.0, "criterion 1");
}

// ---- criterion 2: SSIM closed form ----

void criterion_ssim_closed_form() {
  const imaging::ImageGrid black(32, 32, 0.0f);
  const imaging::ImageGrid white(32, 32, 255.0f);
  const double expected = metrics::kSsimC1 / (255.0 * 255.0 + metrics::kSsimC1);
  const double got = metrics::ssim(black, white);
  require(std::abs(got - expected) <= 1e-6,
          "ssim(0,255) = " + format_double(got) + ", expected " +
              format_double(expected));

  Rng rng(90002);
  for (int trial = 0; trial < 50; ++trial) {
    const int w = 11 + static_cast<int>(rng.bounded(40));
    const int h = 11 + static_cast<int>(rng.bounded(40));
    imaging::ImageGrid img(w, h);
    for (auto& v : img.values) v = static_cast<float>(rng.uniform(0.0, 255.0));
    const double self = metrics::ssim(img, img);
    require(std::abs(self - 1.0) <= 1e-12,
            "ssim(a,a) = " + format_double(self) + " for a random image");
  }
}

// ---- criterion 3: AUROC exactness ----

void criterion_auroc_exact() {
  {
    const std::vector<double> ood{2.5, 4.0};
    const std::vector<double> id{1.0, 2.0, 3.0};
    require(eval::auroc(ood, id, eval::Orientation::higher_is_ood) == 5.0 / 6.0,
            "worked AUROC example does not equal 5/6");
  }
  Rng rng(90003);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t np = 1 + rng.bounded(200);
    const std::size_t nn = 1 + rng.bounded(200);
    const bool heavy_ties = trial % 2 == 0;
    auto draw = [&](std::size_t n) {
      std::vector<double> v(n);
      for (auto& x : v)
        x = heavy_ties ? static_cast<double>(rng.bounded(8)) : rng.uniform(0.0, 1.0);
      return v;
    };
    const auto ood = draw(np);
    const auto id = draw(nn);
    const double got = eval::auroc(ood, id, eval::Orientation::higher_is_ood);
    const double oracle = test_oracles::auroc_pair_counting(ood, id, true);
    require(got == oracle, "auroc " + format_double(got) +
                               " != pair-counting oracle " + format_double(oracle));
  }
}

// ---- criterion 4: generator gradient checks ----

double max_rel_error(std::span<const double> analytic, std::span<const double> fd) {
  double scale = 1.0;
  for (std::size_t i = 0; i < analytic.size(); ++i)
    scale = std::max({scale, std::abs(analytic[i]), std::abs(fd[i])});
  const double floor = 1e-6 * scale;
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double denom = std::max({std::abs(analytic[i]), std::abs(fd[i]), floor});
    worst = std::max(worst, std::abs(analytic[i] - fd[i]) / denom);
  }
  return worst;
}

void criterion_gradients() {
  const auto start = Clock::now();
  Rng rng(90004);
  const double h = 1e-4;
  for (int trial = 0; trial < 20; ++trial) {
    generator::GeneratorConfig cfg;
    cfg.latent_dim = 4 + static_cast<int>(rng.bounded(8));
    cfg.base_resolution = 2 + 2 * static_cast<int>(rng.bounded(2));  // 2 or 4
    const int stages = 1 + static_cast<int>(rng.bounded(2));         // 1 or 2
    cfg.output_resolution = cfg.base_resolution << stages;           // <= 16
    cfg.channels.clear();
    for (int s = 0; s <= stages; ++s)
      cfg.channels.push_back(1 + static_cast<int>(rng.bounded(6)));

    const auto params =
        generator::to_double(generator::init_params(cfg, derive_seed(90005, trial)));
    std::vector<double> z(cfg.latent_dim);
    for (auto& v : z) v = rng.normal();
    const std::size_t n_px = static_cast<std::size_t>(cfg.output_resolution) *
                             cfg.output_resolution;
    std::vector<double> upstream(n_px);
    for (auto& v : upstream) v = rng.normal() * 0.1;

    auto objective = [&](const generator::GeneratorParamsD& p,
                         std::span<const double> zz) {
      const auto out = generator::forward_double(p, zz);
      double s = 0.0;
      for (std::size_t i = 0; i < out.size(); ++i) s += upstream[i] * out[i];
      return s;
    };

    const auto analytic = generator::backward_double(params, z, upstream, true);

    std::vector<double> fd_z(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
      auto zp = z;
      zp[i] += h;
      auto zm = z;
      zm[i] -= h;
      fd_z[i] = (objective(params, zp) - objective(params, zm)) / (2.0 * h);
    }
    const double err_z = max_rel_error(analytic.z, fd_z);
    require(err_z <= 1e-5, "config " + std::to_string(trial) +
                               ": grad_z relative error " + format_double(err_z));

    std::vector<double> fd_p(params.data.size());
    for (std::size_t i = 0; i < params.data.size(); ++i) {
      auto pp = params;
      pp.data[i] += h;
      auto pm = params;
      pm.data[i] -= h;
      fd_p[i] = (objective(pp, z) - objective(pm, z)) / (2.0 * h);
    }
    const double err_p = max_rel_error(analytic.params, fd_p);
    require(err_p <= 1e-5, "config " + std::to_string(trial) +
                               ": grad_params relative error " + format_double(err_p));
  }
  require_runtime(seconds_since(start), 120.0, "criterion 4");
}

// ---- criterion 5: projection self-recovery ----

void criterion_self_recovery() {
  const auto start = Clock::now();

  // A trained toy decoder at 32x32. The corpus must be dense enough that the
  // latent space stays smooth between training latents; sparse corpora leave
  // basins a single-start projection cannot escape.
  generator::GeneratorConfig cfg;
  cfg.latent_dim = 32;
  cfg.base_resolution = 4;
  cfg.output_resolution = 32;
  cfg.channels = {32, 24, 16, 8};

  std::vector<imaging::ImageGrid> corpus;
  for (int i = 0; i < 400; ++i) {
    imaging::PhantomSpec spec;
    spec.resolution = 32;
    spec.seed = derive_seed(90006, static_cast<std::uint64_t>(i));
    const auto sample = imaging::gen_phantom(spec);
    corpus.push_back(
        imaging::quantize(imaging::window_ct(sample.hu, imaging::WindowSpec{})));
  }

  generator::TrainHyper hyper;
  hyper.epochs = 60;
  hyper.lr_params = 1e-2;
  hyper.lr_latents = 1e-1;
  hyper.batch_size = 16;
  hyper.seed = 90007;
  const auto state = generator::train_glo(corpus, cfg, hyper);
  const auto& params = state.best_params;

  const auto mask = imaging::BodyMask::full(32, 32);
  for (int i = 0; i < 10; ++i) {
    const auto z0 = projection::sample_prior_latent(
        cfg.latent_dim, derive_seed(90008, static_cast<std::uint64_t>(i)));
    const auto target = generator::forward(params, z0);

    projection::ProjectionConfig pc;  // defaults: 500 steps
    pc.seed = derive_seed(90009, static_cast<std::uint64_t>(i));
    const auto result = projection::project(params, target, mask, pc);

    const double mse = metrics::masked_mse(target, result.reconstruction, mask);
    require(mse <= 1.0, "target " + std::to_string(i) + ": masked MSE " +
                            format_double(mse) + " after " +
                            std::to_string(result.steps) + " steps");

    double running = result.loss_trace.front();
    double prev_best = running;
    for (double l : result.loss_trace) {
      running = std::min(running, l);
      require(running <= prev_best, "best-so-far loss increased along the trace");
      prev_best = running;
    }
    require(result.best_loss == running, "best loss is not the trace minimum");
  }
  require_runtime(seconds_since(start), 600.0, "criterion 5");
}

// ---- criterion 6: windowing contract ----

void criterion_windowing() {
  const imaging::WindowSpec spec{50.0, 350.0};
  const std::map<double, double> cases{
      {-125.0, 0.0}, {50.0, 127.5}, {225.0, 255.0}, {1000.0, 255.0}};
  for (const auto& [hu, expected] : cases) {
    imaging::HUImage img(1, 1);
    img.values[0] = static_cast<float>(hu);
    const double got = imaging::window_ct(img, spec).values[0];
    require(got == expected, "window_ct(" + format_double(hu) + ") = " +
                                 format_double(got) + ", expected " +
                                 format_double(expected));
  }
}

// ---- criterion 7: synthetic analogue experiment ----

void criterion_analogue_experiment() {
  const auto start = Clock::now();
  test_support::TmpDir tmp("oodrecon-acc");

  nlohmann::json cfg;
  cfg["out_dir"] = (tmp / "run").string();
  cfg["jobs"] = 0;  // all available cores
  cfg["resolution"] = 64;
  cfg["window"] = {{"level", 50.0}, {"width", 350.0}};
  cfg["mask_threshold"] = 10.0;
  cfg["phantom"] = {{"noise_hu", 8.0},
                    {"organ_count", 5},
                    {"organ_hu_min", -60.0},
                    {"organ_hu_max", 160.0}};
  cfg["corpus"] = {{"train_count", 500}, {"train_seed", 1001},
                   {"id_test_count", 100}, {"id_test_seed", 2002},
                   {"ood_count", 100},     {"ood_seed", 3003},
                   {"anomalies", {"bright-line", "peripheral-fluid", "texture-shift"}}};
  cfg["generator"] = {{"latent_dim", 64},
                      {"base_resolution", 4},
                      {"channels", {48, 32, 16, 8, 4}}};
  cfg["train"] = {{"epochs", 100},   {"lr_params", 0.01}, {"lr_latents", 0.1},
                  {"batch_size", 16}, {"val_fraction", 0.1}, {"seed", 4004}};
  cfg["projection"] = {{"num_steps", 500}, {"latent_mean_samples", 1024}, {"seed", 5005}};
  cfg["evaluate"] = {{"seed", 6006}};
  atomic_write_file(tmp / "config.json", cfg.dump(2));

  const auto run = test_support::run_cli(
      {"pipeline", "--config", (tmp / "config.json").string()}, tmp.path());
  require(run.exit_code == 0,
          "pipeline exited with " + std::to_string(run.exit_code) + ": " + run.err);

  const auto rows = read_csv(tmp / "run" / "report.csv");
  require(rows.size() == 4, "report should hold 3 dataset rows, found " +
                                std::to_string(rows.size() - 1));
  std::map<std::string, std::map<std::string, double>> grid;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    grid[rows[i][0]]["wd"] = parse_double(rows[i][4]);
    grid[rows[i][0]]["mse"] = parse_double(rows[i][5]);
    grid[rows[i][0]]["ssim_raw"] = parse_double(rows[i][6]);
    require(rows[i][1] == "100" && rows[i][2] == "100",
            "dataset " + rows[i][0] + " is not balanced 100 vs 100");
  }
  for (const char* kind : {"bright-line", "peripheral-fluid", "texture-shift"}) {
    require(grid.count(kind), std::string("report lacks dataset ") + kind);
    for (const char* metric : {"wd", "mse", "ssim_raw"}) {
      const double v = grid[kind][metric];
      require(v >= 0.0 && v <= 1.0, std::string(kind) + "/" + metric +
                                        " AUROC out of range: " + format_double(v));
    }
  }
  for (const char* kind : {"texture-shift", "bright-line"}) {
    const double wd_auroc = grid[kind]["wd"];
    require(wd_auroc >= 0.85, std::string(kind) + ": WD AUROC " +
                                  format_double(wd_auroc) + " below 0.85");
  }

  std::ostringstream summary;
  summary << "      WD AUROCs:";
  for (const auto& [kind, metrics_map] : grid)
    summary << " " << kind << "=" << metrics_map.at("wd");
  std::puts(summary.str().c_str());

  require_runtime(seconds_since(start), 2700.0, "criterion 7");
}

// ---- criterion 8: end-to-end determinism ----

void criterion_determinism() {
  test_support::TmpDir tmp("oodrecon-det");
  auto make_cfg = [&](const std::string& out) {
    nlohmann::json cfg;
    cfg["out_dir"] = (tmp / out).string();
    cfg["jobs"] = 0;
    cfg["resolution"] = 32;
    cfg["corpus"] = {{"train_count", 12}, {"train_seed", 11},
                     {"id_test_count", 6},  {"id_test_seed", 22},
                     {"ood_count", 6},      {"ood_seed", 33},
                     {"anomalies", {"bright-line"}}};
    cfg["generator"] = {{"latent_dim", 16},
                        {"base_resolution", 4},
                        {"channels", {16, 12, 8, 4}}};
    cfg["train"] = {{"epochs", 3}, {"lr_params", 0.01}, {"lr_latents", 0.1},
                    {"batch_size", 8}, {"seed", 44}};
    cfg["projection"] = {{"num_steps", 15}, {"latent_mean_samples", 32}, {"seed", 55}};
    cfg["evaluate"] = {{"seed", 66}};
    return cfg;
  };

  for (const char* name : {"a", "b"}) {
    atomic_write_file(tmp / (std::string("cfg_") + name + ".json"),
                      make_cfg(name).dump(2));
    const auto run = test_support::run_cli(
        {"pipeline", "--config", (tmp / (std::string("cfg_") + name + ".json")).string()},
        tmp.path());
    require(run.exit_code == 0, "pipeline run failed: " + run.err);
  }

  for (const char* f : {"scores.csv", "report.csv", "report.txt", "report.json"}) {
    require(read_file_bytes(tmp / "a" / f) == read_file_bytes(tmp / "b" / f),
            std::string(f) + " differs between identical runs");
  }
}

struct Criterion {
  int number;
  const char* name;
  std::function<void()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "wasserstein_1d agrees with the independent oracle", criterion_wd_oracles},
      {2, "SSIM closed form and self-similarity", criterion_ssim_closed_form},
      {3, "AUROC equals brute-force pair counting", criterion_auroc_exact},
      {6, "CT windowing contract", criterion_windowing},
      {4, "analytic gradients match finite differences", criterion_gradients},
      {5, "projection self-recovery", criterion_self_recovery},
      {8, "end-to-end pipeline determinism", criterion_determinism},
      {7, "synthetic analogue experiment (WD AUROC >= 0.85)",
       criterion_analogue_experiment},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = Clock::now();
    std::string error;
    try {
      c.run();
    } catch (const std::exception& e) {
      error = e.what();
    }
    const double elapsed = seconds_since(start);
    if (error.empty()) {
      std::printf("[PASS] criterion %d: %s (%.1f s)\n", c.number, c.name, elapsed);
    } else {
      std::printf("[FAIL] criterion %d: %s (%.1f s)\n       %s\n", c.number, c.name,
                  elapsed, error.c_str());
      ++failures;
    }
    std::fflush(stdout);
  }
  if (failures) {
    std::printf("%d criterion(s) failed\n", failures);
    return 1;
  }
  std::puts("all acceptance criteria passed");
  return 0;
}
