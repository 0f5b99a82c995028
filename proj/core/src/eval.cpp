#include "oodrecon/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "oodrecon/csv.hpp"
#include "oodrecon/error.hpp"
#include "oodrecon/io_util.hpp"

namespace oodrecon::eval {

const char* to_string(Orientation o) {
  return o == Orientation::higher_is_ood ? "higher-is-ood" : "lower-is-ood";
}

double auroc(std::span<const double> ood_scores, std::span<const double> id_scores,
             Orientation orientation) {
  if (ood_scores.empty() || id_scores.empty())
    fail(ErrorKind::invalid_input, "AUROC requires non-empty score lists");

  const double sign = orientation == Orientation::higher_is_ood ? 1.0 : -1.0;
  struct Item {
    double value;
    bool positive;
  };
  std::vector<Item> items;
  items.reserve(ood_scores.size() + id_scores.size());
  for (double s : ood_scores) {
    if (!std::isfinite(s)) fail(ErrorKind::invalid_input, "non-finite OOD score");
    items.push_back({sign * s, true});
  }
  for (double s : id_scores) {
    if (!std::isfinite(s)) fail(ErrorKind::invalid_input, "non-finite ID score");
    items.push_back({sign * s, false});
  }
  std::sort(items.begin(), items.end(),
            [](const Item& a, const Item& b) { return a.value < b.value; });

  // Average ranks within tie groups give the 1/2 tie credit exactly: every
  // rank average is a multiple of 0.5, so the sums below stay exact doubles.
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < items.size()) {
    std::size_t j = i;
    std::size_t positives = 0;
    while (j < items.size() && items[j].value == items[i].value) {
      positives += items[j].positive;
      ++j;
    }
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    rank_sum_pos += avg_rank * static_cast<double>(positives);
    i = j;
  }
  const double np = static_cast<double>(ood_scores.size());
  const double nn = static_cast<double>(id_scores.size());
  const double u = rank_sum_pos - np * (np + 1.0) / 2.0;
  return u / (np * nn);
}

std::vector<std::size_t> undersample_indices(std::size_t n_available,
                                             std::size_t n_target,
                                             std::uint64_t seed) {
  if (n_target > n_available)
    fail(ErrorKind::invalid_input,
         "undersample target " + std::to_string(n_target) + " exceeds available " +
             std::to_string(n_available));
  std::vector<std::size_t> idx(n_available);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = 0; i < n_target; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.bounded(n_available - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(n_target);
  return idx;
}

namespace {

constexpr const char* kManifestHeader[] = {"image_id", "path", "dataset", "class"};

bool parse_class(const std::string& s, const std::string& context) {
  if (s == "ood" || s == "OOD") return true;
  if (s == "in-distribution" || s == "id") return false;
  fail(ErrorKind::format, "unknown class '" + s + "' " + context);
}

}  // namespace

std::vector<ManifestEntry> read_eval_manifest(const std::filesystem::path& path,
                                              bool check_paths) {
  const auto rows = read_csv(path);
  if (rows.empty() ||
      rows[0] != CsvRow{kManifestHeader[0], kManifestHeader[1], kManifestHeader[2],
                        kManifestHeader[3]})
    fail(ErrorKind::format, "bad manifest header: " + path.string());

  std::vector<ManifestEntry> entries;
  std::map<std::string, bool> dataset_class;
  std::map<std::string, bool> seen_ids;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (row.size() != 4)
      fail(ErrorKind::format,
           "bad manifest row " + std::to_string(i) + " in " + path.string());
    ManifestEntry e;
    e.image_id = row[0];
    e.path = row[1];
    e.dataset = row[2];
    e.is_ood = parse_class(row[3], "in " + path.string());
    if (!seen_ids.emplace(e.image_id, true).second)
      fail(ErrorKind::invalid_input, "duplicate image id '" + e.image_id + "'");
    auto [it, inserted] = dataset_class.emplace(e.dataset, e.is_ood);
    if (!inserted && it->second != e.is_ood)
      fail(ErrorKind::invalid_input,
           "dataset '" + e.dataset + "' maps to both classes");
    if (check_paths) {
      const auto resolved = resolve_manifest_path(path, e.path);
      if (!std::filesystem::exists(resolved))
        fail(ErrorKind::invalid_input, "manifest path missing: " + resolved.string());
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

void write_eval_manifest(const std::filesystem::path& path,
                         std::span<const ManifestEntry> entries) {
  std::vector<CsvRow> rows;
  rows.reserve(entries.size() + 1);
  rows.push_back({kManifestHeader[0], kManifestHeader[1], kManifestHeader[2],
                  kManifestHeader[3]});
  for (const auto& e : entries)
    rows.push_back({e.image_id, e.path, e.dataset, e.is_ood ? "ood" : "in-distribution"});
  write_csv(path, rows);
}

std::filesystem::path resolve_manifest_path(const std::filesystem::path& manifest,
                                            const std::string& entry_path) {
  std::filesystem::path p(entry_path);
  if (p.is_absolute()) return p;
  return manifest.parent_path() / p;
}

EvalReport evaluate_experiment(std::span<const ManifestEntry> manifest,
                               std::span<const metrics::ScoreRecord> scores,
                               std::uint64_t seed, const EvalOptions& options) {
  std::map<std::string, const metrics::ScoreRecord*> by_id;
  for (const auto& s : scores) {
    if (!by_id.emplace(s.image_id, &s).second)
      fail(ErrorKind::invalid_input, "duplicate score for id '" + s.image_id + "'");
  }

  std::vector<std::string> missing;
  for (const auto& e : manifest)
    if (!by_id.count(e.image_id)) missing.push_back(e.image_id);
  if (!missing.empty()) {
    std::string msg = "missing scores for " + std::to_string(missing.size()) + " image(s):";
    const std::size_t show = std::min<std::size_t>(missing.size(), 10);
    for (std::size_t i = 0; i < show; ++i) msg += " " + missing[i];
    if (missing.size() > show) msg += " ...";
    fail(ErrorKind::invalid_input, msg);
  }

  std::vector<const metrics::ScoreRecord*> id_pool;
  std::vector<std::string> dataset_order;
  std::map<std::string, std::vector<const metrics::ScoreRecord*>> ood_sets;
  for (const auto& e : manifest) {
    const auto* rec = by_id.at(e.image_id);
    if (e.is_ood) {
      auto& set = ood_sets[e.dataset];
      if (set.empty()) dataset_order.push_back(e.dataset);
      set.push_back(rec);
    } else {
      id_pool.push_back(rec);
    }
  }
  if (id_pool.empty())
    fail(ErrorKind::invalid_input, "manifest has no in-distribution entries");

  EvalReport report;
  report.master_seed = seed;
  report.n_id_available = id_pool.size();
  report.options = options;

  auto metric_scores = [](const std::vector<const metrics::ScoreRecord*>& recs,
                          auto getter) {
    std::vector<double> out;
    out.reserve(recs.size());
    for (const auto* r : recs) out.push_back(getter(*r));
    return out;
  };

  for (const auto& name : dataset_order) {
    const auto& ood = ood_sets.at(name);
    const std::size_t n = ood.size();
    const std::uint64_t sub_seed = derive_seed(seed, "undersample." + name);
    const auto subset = undersample<const metrics::ScoreRecord*>(
        std::span<const metrics::ScoreRecord* const>(id_pool.data(), id_pool.size()), n,
        sub_seed);

    DatasetReport row;
    row.dataset = name;
    row.n_ood = n;
    row.undersample_seed = sub_seed;

    auto make = [&](const char* metric, Orientation orient, auto getter) {
      RocResult r;
      r.metric = metric;
      r.orientation = orient;
      r.n_pos = n;
      r.n_neg = subset.size();
      r.undersample_seed = sub_seed;
      r.auroc = auroc(metric_scores(ood, getter), metric_scores(subset, getter), orient);
      return r;
    };
    row.wd = make("wd", options.wd, [](const metrics::ScoreRecord& r) { return r.wd; });
    row.mse = make("mse", options.mse, [](const metrics::ScoreRecord& r) { return r.mse; });
    row.ssim_raw = make("ssim_raw", Orientation::higher_is_ood,
                        [](const metrics::ScoreRecord& r) { return r.ssim; });
    row.ssim_lower = make("ssim", Orientation::lower_is_ood,
                          [](const metrics::ScoreRecord& r) { return r.ssim; });
    report.rows.push_back(std::move(row));
  }
  return report;
}

void write_report_csv(const EvalReport& report, const std::filesystem::path& path) {
  std::vector<CsvRow> rows;
  rows.push_back({"dataset", "n_ood", "n_id", "undersample_seed", "wd_auroc",
                  "mse_auroc", "ssim_auroc_raw", "ssim_auroc_lower_is_ood"});
  for (const auto& r : report.rows) {
    rows.push_back({r.dataset, std::to_string(r.n_ood), std::to_string(r.wd.n_neg),
                    std::to_string(r.undersample_seed), format_double(r.wd.auroc),
                    format_double(r.mse.auroc), format_double(r.ssim_raw.auroc),
                    format_double(r.ssim_lower.auroc)});
  }
  write_csv(path, rows);
}

std::string report_text(const EvalReport& report) {
  std::ostringstream out;
  out << "AUROC per OOD dataset and reconstruction metric (SSIM column uses the raw\n"
         "orientation; the lower-is-OOD variant is in the CSV/JSON outputs)\n\n";
  std::size_t name_w = std::string("Dataset").size();
  for (const auto& r : report.rows) name_w = std::max(name_w, r.dataset.size());

  auto pad = [](const std::string& s, std::size_t w) {
    return s + std::string(w > s.size() ? w - s.size() : 0, ' ');
  };
  auto num = [](double v) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return std::string(buf);
  };
  out << pad("Dataset", name_w) << "  " << "WD-based AUROC" << "  "
      << "MSE-based AUROC" << "  " << "SSIM-based AUROC" << "\n";
  for (const auto& r : report.rows) {
    out << pad(r.dataset, name_w) << "  " << pad(num(r.wd.auroc), 14) << "  "
        << pad(num(r.mse.auroc), 15) << "  " << num(r.ssim_raw.auroc) << "\n";
  }
  return out.str();
}

void write_report_text(const EvalReport& report, const std::filesystem::path& path) {
  atomic_write_file(path, report_text(report));
}

void write_report_json(const EvalReport& report, const std::filesystem::path& path) {
  nlohmann::json j;
  j["master_seed"] = report.master_seed;
  j["n_id_available"] = report.n_id_available;
  j["orientations"] = {
      {"wd", to_string(report.options.wd)},
      {"mse", to_string(report.options.mse)},
      {"ssim_raw", to_string(Orientation::higher_is_ood)},
      {"ssim_lower_is_ood", to_string(Orientation::lower_is_ood)},
  };
  auto& rows = j["datasets"] = nlohmann::json::array();
  for (const auto& r : report.rows) {
    rows.push_back({
        {"dataset", r.dataset},
        {"n_ood", r.n_ood},
        {"n_id", r.wd.n_neg},
        {"undersample_seed", r.undersample_seed},
        {"auroc",
         {{"wd", r.wd.auroc},
          {"mse", r.mse.auroc},
          {"ssim_raw", r.ssim_raw.auroc},
          {"ssim_lower_is_ood", r.ssim_lower.auroc}}},
    });
  }
  atomic_write_file(path, j.dump(2) + "\n");
}

}  // namespace oodrecon::eval
