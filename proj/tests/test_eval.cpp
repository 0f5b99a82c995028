#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "oodrecon/csv.hpp"
#include "oodrecon/error.hpp"
#include "oodrecon/eval.hpp"
#include "oodrecon/io_util.hpp"
#include "oodrecon/rng.hpp"
#include "support/oracles.hpp"
#include "support/tmpdir.hpp"

using namespace oodrecon;
using namespace oodrecon::eval;
using metrics::ScoreRecord;

namespace {

std::vector<double> random_scores(Rng& rng, std::size_t n, bool quantized) {
  std::vector<double> v(n);
  for (auto& x : v)
    x = quantized ? static_cast<double>(rng.bounded(12)) : rng.uniform(0.0, 10.0);
  return v;
}

}  // namespace

TEST_CASE("auroc: perfect separation") {
  const std::vector<double> ood{3, 4};
  const std::vector<double> id{1, 2};
  CHECK(auroc(ood, id, Orientation::higher_is_ood) == 1.0);
  CHECK(auroc(ood, id, Orientation::lower_is_ood) == 0.0);
}

TEST_CASE("auroc: identical score multisets are indistinguishable") {
  const std::vector<double> s{1, 2, 2, 7};
  CHECK(auroc(s, s, Orientation::higher_is_ood) == 0.5);
}

TEST_CASE("auroc: worked pair-counting example") {
  // pairs won: (2.5>1), (2.5>2), (4>1), (4>2), (4>3) -> 5 of 6
  const std::vector<double> ood{2.5, 4};
  const std::vector<double> id{1, 2, 3};
  CHECK(auroc(ood, id, Orientation::higher_is_ood) == 5.0 / 6.0);
}

TEST_CASE("auroc: equals brute-force pair counting exactly") {
  Rng rng(42);
  for (int trial = 0; trial < 400; ++trial) {
    const std::size_t np = 1 + rng.bounded(200);
    const std::size_t nn = 1 + rng.bounded(200);
    const bool quantized = trial % 2 == 0;  // force plenty of ties
    const auto ood = random_scores(rng, np, quantized);
    const auto id = random_scores(rng, nn, quantized);
    const double got = auroc(ood, id, Orientation::higher_is_ood);
    const double expect = test_oracles::auroc_pair_counting(ood, id, true);
    CHECK(got == expect);
  }
}

TEST_CASE("auroc: complement identity holds exactly, ties included") {
  Rng rng(43);
  for (int trial = 0; trial < 100; ++trial) {
    const auto a = random_scores(rng, 1 + rng.bounded(50), true);
    const auto b = random_scores(rng, 1 + rng.bounded(50), true);
    const double ab = auroc(a, b, Orientation::higher_is_ood);
    const double ba = auroc(b, a, Orientation::higher_is_ood);
    CHECK(ab + ba == 1.0);
  }
}

TEST_CASE("auroc: invariant under strictly increasing transforms") {
  Rng rng(44);
  for (int trial = 0; trial < 50; ++trial) {
    const auto a = random_scores(rng, 1 + rng.bounded(40), true);
    const auto b = random_scores(rng, 1 + rng.bounded(40), true);
    auto ta = a, tb = b;
    auto transform = [](double x) { return x * x * x + 2.0 * x; };
    std::transform(ta.begin(), ta.end(), ta.begin(), transform);
    std::transform(tb.begin(), tb.end(), tb.begin(), transform);
    CHECK(auroc(a, b, Orientation::higher_is_ood) ==
          auroc(ta, tb, Orientation::higher_is_ood));
  }
}

TEST_CASE("auroc: input validation") {
  const std::vector<double> ok{1.0};
  const std::vector<double> empty;
  const std::vector<double> bad{std::nan("")};
  CHECK_THROWS_AS(auroc(empty, ok, Orientation::higher_is_ood), Error);
  CHECK_THROWS_AS(auroc(ok, empty, Orientation::higher_is_ood), Error);
  CHECK_THROWS_AS(auroc(bad, ok, Orientation::higher_is_ood), Error);
}

TEST_CASE("undersample: full draw returns the same multiset") {
  const std::vector<int> items{5, 6, 7, 8, 9};
  auto out = undersample<int>(items, items.size(), 99);
  auto sorted_out = out;
  std::sort(sorted_out.begin(), sorted_out.end());
  CHECK(sorted_out == items);
}

TEST_CASE("undersample: deterministic per seed") {
  const std::vector<int> items{1, 2, 3, 4, 5, 6, 7, 8};
  CHECK(undersample<int>(items, 3, 7) == undersample<int>(items, 3, 7));
  // a different seed should (for this instance) change the draw
  CHECK(undersample<int>(items, 3, 7) != undersample<int>(items, 3, 8));
}

TEST_CASE("undersample: draws are uniform") {
  const std::vector<int> items{0, 1, 2, 3};
  std::map<int, int> counts;
  for (std::uint64_t s = 0; s < 10000; ++s)
    counts[undersample<int>(items, 1, derive_seed(1234, s))[0]]++;
  for (const auto& [item, count] : counts) {
    CHECK(count / 10000.0 == doctest::Approx(0.25).epsilon(0.08));
    CHECK(std::abs(count / 10000.0 - 0.25) <= 0.02);
  }
}

TEST_CASE("undersample: oversized target is an error") {
  const std::vector<int> items{1, 2};
  CHECK_THROWS_AS(undersample<int>(items, 3, 0), Error);
}

namespace {

struct Fixture {
  std::vector<ManifestEntry> manifest;
  std::vector<ScoreRecord> scores;

  void add(const std::string& id, const std::string& dataset, bool ood, double wd,
           double mse, double ssim) {
    ManifestEntry e;
    e.image_id = id;
    e.path = id + ".png";
    e.dataset = dataset;
    e.is_ood = ood;
    manifest.push_back(e);
    ScoreRecord r;
    r.image_id = id;
    r.dataset = dataset;
    r.wd = wd;
    r.mse = mse;
    r.ssim = ssim;
    r.mask_pixels = 100;
    scores.push_back(r);
  }
};

}  // namespace

TEST_CASE("evaluate_experiment: separable dataset yields AUROC 1") {
  Fixture f;
  Rng rng(3);
  for (int i = 0; i < 20; ++i)
    f.add("id_" + std::to_string(i), "in-distribution", false, rng.uniform(0.0, 1.0),
          rng.uniform(0.0, 10.0), rng.uniform(0.9, 1.0));
  for (int i = 0; i < 8; ++i)
    f.add("ood_" + std::to_string(i), "needle-like", true, rng.uniform(5.0, 9.0),
          rng.uniform(100.0, 400.0), rng.uniform(0.0, 0.5));

  const auto report = evaluate_experiment(f.manifest, f.scores, 11);
  REQUIRE(report.rows.size() == 1);
  const auto& row = report.rows[0];
  CHECK(row.dataset == "needle-like");
  CHECK(row.n_ood == 8);
  CHECK(row.wd.n_neg == 8);  // undersampled to the OOD count
  CHECK(row.wd.auroc == 1.0);
  CHECK(row.mse.auroc == 1.0);
  CHECK(row.ssim_raw.auroc == 0.0);   // raw orientation mirrors low OOD SSIM
  CHECK(row.ssim_lower.auroc == 1.0); // discriminative reading
}

TEST_CASE("evaluate_experiment: deterministic and shape-complete") {
  Fixture f;
  Rng rng(4);
  for (int i = 0; i < 40; ++i)
    f.add("id_" + std::to_string(i), "in-distribution", false, rng.uniform(0.0, 5.0),
          rng.uniform(0.0, 100.0), rng.uniform(0.5, 1.0));
  const char* kinds[] = {"alpha", "bravo", "charlie", "delta", "echo", "foxtrot"};
  for (const char* kind : kinds)
    for (int i = 0; i < 5; ++i)
      f.add(std::string(kind) + "_" + std::to_string(i), kind, true,
            rng.uniform(0.0, 8.0), rng.uniform(0.0, 200.0), rng.uniform(0.0, 1.0));

  const auto r1 = evaluate_experiment(f.manifest, f.scores, 5);
  const auto r2 = evaluate_experiment(f.manifest, f.scores, 5);

  // one row per OOD dataset in manifest order, three metric columns each
  REQUIRE(r1.rows.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(r1.rows[i].dataset == kinds[i]);
    CHECK(r1.rows[i].n_ood == 5);
    CHECK(r1.rows[i].wd.n_pos == 5);
    CHECK(r1.rows[i].wd.n_neg == 5);
    CHECK(std::isfinite(r1.rows[i].wd.auroc));
    CHECK(std::isfinite(r1.rows[i].mse.auroc));
    CHECK(std::isfinite(r1.rows[i].ssim_raw.auroc));
    // identical runs agree bit for bit
    CHECK(r1.rows[i].wd.auroc == r2.rows[i].wd.auroc);
    CHECK(r1.rows[i].mse.auroc == r2.rows[i].mse.auroc);
    CHECK(r1.rows[i].ssim_raw.auroc == r2.rows[i].ssim_raw.auroc);
    CHECK(r1.rows[i].undersample_seed == r2.rows[i].undersample_seed);
    // the same undersampled subset backs all metric columns
    CHECK(r1.rows[i].wd.undersample_seed == r1.rows[i].mse.undersample_seed);
    CHECK(r1.rows[i].wd.undersample_seed == r1.rows[i].ssim_raw.undersample_seed);
  }
}

TEST_CASE("evaluate_experiment: missing scores are reported by id") {
  Fixture f;
  f.add("id_0", "in-distribution", false, 1, 1, 1);
  f.add("ood_0", "kind", true, 2, 2, 0.5);
  f.scores.pop_back();  // drop ood_0's score
  try {
    evaluate_experiment(f.manifest, f.scores, 0);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::invalid_input);
    CHECK(std::string(e.what()).find("ood_0") != std::string::npos);
  }
}

TEST_CASE("report writers produce the Table-1-shaped grid") {
  Fixture f;
  Rng rng(6);
  for (int i = 0; i < 10; ++i)
    f.add("id_" + std::to_string(i), "in-distribution", false, rng.uniform(0.0, 1.0),
          rng.uniform(0.0, 10.0), rng.uniform(0.8, 1.0));
  for (const char* kind : {"bright-line", "texture-shift"})
    for (int i = 0; i < 4; ++i)
      f.add(std::string(kind) + std::to_string(i), kind, true, rng.uniform(2.0, 9.0),
            rng.uniform(20.0, 90.0), rng.uniform(0.2, 0.9));

  const auto report = evaluate_experiment(f.manifest, f.scores, 17);
  test_support::TmpDir tmp;
  write_report_csv(report, tmp / "report.csv");
  write_report_text(report, tmp / "report.txt");
  write_report_json(report, tmp / "report.json");

  const std::string text = report_text(report);
  CHECK(text.find("WD-based AUROC") != std::string::npos);
  CHECK(text.find("MSE-based AUROC") != std::string::npos);
  CHECK(text.find("SSIM-based AUROC") != std::string::npos);
  CHECK(text.find("bright-line") != std::string::npos);
  CHECK(text.find("texture-shift") != std::string::npos);

  const auto rows = read_csv(tmp / "report.csv");
  REQUIRE(rows.size() == 3);  // header + 2 datasets
  CHECK(rows[0][0] == "dataset");
  CHECK(rows[0][4] == "wd_auroc");
}

TEST_CASE("eval manifest io validates ids, classes, and paths") {
  test_support::TmpDir tmp;
  std::vector<ManifestEntry> entries;
  for (int i = 0; i < 3; ++i) {
    ManifestEntry e;
    e.image_id = "img" + std::to_string(i);
    e.path = "img" + std::to_string(i) + ".bin";
    e.dataset = i < 2 ? "in-distribution" : "kind";
    e.is_ood = i >= 2;
    entries.push_back(e);
    atomic_write_file(tmp / e.path, "x");
  }
  const auto manifest_path = tmp / "manifest.csv";
  write_eval_manifest(manifest_path, entries);
  const auto loaded = read_eval_manifest(manifest_path);
  REQUIRE(loaded.size() == 3);
  CHECK(loaded[2].is_ood);
  CHECK(resolve_manifest_path(manifest_path, loaded[0].path) == tmp / "img0.bin");

  SUBCASE("missing file fails path validation") {
    std::filesystem::remove(tmp / "img1.bin");
    CHECK_THROWS_AS(read_eval_manifest(manifest_path), Error);
    CHECK_NOTHROW(read_eval_manifest(manifest_path, /*check_paths=*/false));
  }
  SUBCASE("duplicate ids are rejected") {
    auto dup = entries;
    dup.push_back(entries[0]);
    write_eval_manifest(manifest_path, dup);
    CHECK_THROWS_AS(read_eval_manifest(manifest_path), Error);
  }
  SUBCASE("a dataset cannot span both classes") {
    auto bad = entries;
    ManifestEntry e = entries[2];
    e.image_id = "imgX";
    e.is_ood = false;
    bad.push_back(e);
    write_eval_manifest(manifest_path, bad);
    CHECK_THROWS_AS(read_eval_manifest(manifest_path, false), Error);
  }
}
