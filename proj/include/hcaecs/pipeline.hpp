#pragma once

// End-to-end orchestration: load -> merge -> z-normalize -> (learn AECS) ->
// average-linkage clustering per measure -> Hubert selection -> report.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"

#include "hcaecs/autoencoder.hpp"
#include "hcaecs/dataset.hpp"
#include "hcaecs/distance.hpp"
#include "hcaecs/error.hpp"
#include "hcaecs/hier_cluster.hpp"
#include "hcaecs/model_selection.hpp"

namespace hcaecs {

namespace fs = std::filesystem;
using nlohmann::json;

enum class RunMode { hc_aecs, hc_raw };

inline std::string to_string(RunMode mode) { return mode == RunMode::hc_aecs ? "hc_aecs" : "hc_raw"; }

inline constexpr const char* kDataRootEnv = "HCAECS_DATA_ROOT";

inline std::optional<fs::path> data_root() {
  if (const char* root = std::getenv(kDataRootEnv); root && *root) return fs::path(root);
  return std::nullopt;
}

// Relative paths that do not exist from the working directory are looked up
// under $HCAECS_DATA_ROOT.
inline fs::path resolve_data_path(const fs::path& path) {
  if (path.is_absolute() || fs::exists(path)) return path;
  if (auto root = data_root(); root && fs::exists(*root / path)) return *root / path;
  return path;
}

// UCR archive layout: <root>/<Name>/<Name>_TRAIN.tsv and <Name>_TEST.tsv.
struct UcrSplitPaths {
  fs::path train;
  fs::path test;
};

inline std::optional<UcrSplitPaths> find_ucr_dataset(const fs::path& root, const std::string& name) {
  UcrSplitPaths p{root / name / (name + "_TRAIN.tsv"), root / name / (name + "_TEST.tsv")};
  if (fs::exists(p.train) && fs::exists(p.test)) return p;
  return std::nullopt;
}

struct RunConfig {
  fs::path train_path;
  std::optional<fs::path> test_path;
  DatasetFormat format = DatasetFormat::ucr_tsv;
  std::size_t hidden1 = 16;
  std::size_t hidden2 = 12;
  TrainConfig train;
  std::optional<std::size_t> k;
  RunMode mode = RunMode::hc_aecs;
  std::vector<MeasureKind> measures{kAllMeasures[0], kAllMeasures[1], kAllMeasures[2]};
  fs::path output_dir;  // empty: nothing written
  double ridge = kDefaultRidge;
  bool use_cache = true;

  void validate() const {
    if (hidden2 >= hidden1) throw ConfigError("h2 must be smaller than h1");
    if (measures.empty()) throw ConfigError("at least one distance measure is required");
    if (k && *k < 1) throw ConfigError("K must be >= 1");
    if (ridge < 0.0) throw ConfigError("ridge must be non-negative");
    train.validate();
  }
};

struct Timings {
  double aecs = 0.0;        // learning or loading the latent representation
  double clustering = 0.0;  // distance matrices, dendrograms, cuts
  double validation = 0.0;  // Hubert statistic and selection
  double total = 0.0;
};

struct RunReport {
  RunMode mode = RunMode::hc_aecs;
  std::string dataset_name;
  std::string dataset_fingerprint;
  std::size_t series_count = 0;
  std::size_t max_length = 0;
  std::size_t dims = 0;
  std::optional<std::size_t> class_count;
  std::size_t k = 0;
  std::size_t representation_width = 0;
  std::optional<std::string> model_fingerprint;
  bool cached_representation = false;
  double ridge = 0.0;
  bool pseudo_inverse = false;
  SelectionReport selection;
  std::optional<TrainTrace> train_trace;
  Timings timings;
  RunConfig config;
};

// ---------------------------------------------------------------------------
// Stages

inline TimeSeriesDataset load_inputs(const RunConfig& cfg) {
  auto train = load_dataset(resolve_data_path(cfg.train_path), cfg.format);
  if (!cfg.test_path) return z_normalize(train);
  auto test = load_dataset(resolve_data_path(*cfg.test_path), cfg.format);
  return z_normalize(merge(train, test));
}

inline std::size_t resolve_k(const std::optional<std::size_t>& k, const TimeSeriesDataset& ds) {
  if (k) {
    if (*k > ds.size()) throw ConfigError("K=" + std::to_string(*k) + " exceeds the number of series");
    return *k;
  }
  if (!ds.has_labels()) throw ConfigError("K is required when the data carries no labels");
  return ds.labels()->class_count();
}

struct ClusterStage {
  CovarianceModel covariance;
  std::map<MeasureKind, Dendrogram> dendrograms;
  std::map<MeasureKind, FlatClustering> clusterings;
};

// One pooled covariance (fitted on `rows`) serves both the ML kernel and the
// Hubert statistic.
inline ClusterStage cluster_rows(const Matrix& rows, const std::vector<MeasureKind>& measures, std::size_t k,
                                 const CovarianceModel& cov) {
  ClusterStage stage{cov, {}, {}};
  for (auto kind : measures) {
    if (stage.dendrograms.count(kind)) continue;
    const DistanceMeasure measure =
        kind == MeasureKind::mahalanobis ? DistanceMeasure::mahalanobis(cov) : DistanceMeasure{kind, std::nullopt};
    auto dg = agglomerate(distance_matrix(rows, measure));
    stage.clusterings.emplace(kind, cut(dg, k, kind));
    stage.dendrograms.emplace(kind, std::move(dg));
  }
  return stage;
}

inline SelectionReport select_best(const Matrix& rows, const std::map<MeasureKind, FlatClustering>& clusterings,
                                   const CovarianceModel& cov, const std::optional<Labels>& truth) {
  std::map<MeasureKind, MeasureOutcome> outcomes;
  for (const auto& [kind, fc] : clusterings) outcomes.emplace(kind, MeasureOutcome{fc, hubert_statistic(rows, fc, cov), {}});
  auto report = best_cluster(std::move(outcomes));
  report.covariance_fingerprint = cov.fingerprint();
  if (truth) attach_external_scores(report, truth->ids);
  return report;
}

struct AecsStage {
  LatentMatrix latent;
  std::optional<TrainTrace> trace;
  bool cached = false;
};

inline std::string cache_key(const TimeSeriesDataset& ds, const RunConfig& cfg) {
  detail::Fnv1a h;
  h.update_string(ds.fingerprint());
  h.update_value(cfg.hidden1);
  h.update_value(cfg.hidden2);
  h.update_value(cfg.train.epochs);
  h.update_value(cfg.train.batch_size);
  h.update_value(cfg.train.learning_rate);
  h.update_value(cfg.train.momentum);
  h.update_value(cfg.train.seed);
  h.update_value(cfg.train.clip_norm.value_or(0.0));
  return h.hex();
}

inline json trace_to_json(const TrainTrace& trace) { return {{"loss", trace.loss}, {"seconds", trace.seconds}}; }

inline AecsStage learn_aecs(const TimeSeriesDataset& ds, const RunConfig& cfg) {
  std::optional<fs::path> cache_dir;
  if (cfg.use_cache && !cfg.output_dir.empty()) cache_dir = cfg.output_dir / "cache" / cache_key(ds, cfg);
  if (cache_dir && fs::exists(*cache_dir / "aecs.csv") && fs::exists(*cache_dir / "model.ckpt")) {
    std::ifstream latent_in(*cache_dir / "aecs.csv");
    AecsStage stage;
    stage.latent.values = read_latent_csv(latent_in);
    stage.latent.source_model_fingerprint = load_checkpoint(*cache_dir / "model.ckpt").fingerprint();
    if (static_cast<std::size_t>(stage.latent.values.rows()) != ds.size())
      throw ShapeError("cached latent matrix does not match the dataset");
    if (std::ifstream trace_in(*cache_dir / "trace.json"); trace_in) {
      const auto j = json::parse(trace_in);
      stage.trace = TrainTrace{j.at("loss").get<std::vector<double>>(), j.at("seconds").get<std::vector<double>>()};
    }
    stage.cached = true;
    return stage;
  }

  auto model = init_model(ModelDims{ds.dims(), cfg.hidden1, cfg.hidden2, ds.max_length()}, cfg.train.seed);
  auto trained = train(std::move(model), ds, cfg.train);
  AecsStage stage{extract_aecs(trained.model, ds), std::move(trained.trace), false};
  if (cache_dir) {
    fs::create_directories(*cache_dir);
    save_checkpoint(trained.model, *cache_dir / "model.ckpt");
    std::ofstream latent_out(*cache_dir / "aecs.csv");
    write_latent_csv(stage.latent.values, latent_out);
    std::ofstream trace_out(*cache_dir / "trace.json");
    trace_out << trace_to_json(*stage.trace).dump(2) << '\n';
  }
  return stage;
}

// ---------------------------------------------------------------------------
// Reports

inline double round_ms(double seconds) { return std::round(seconds * 1000.0) / 1000.0; }

inline json config_to_json(const RunConfig& cfg) {
  json measures = json::array();
  for (auto m : cfg.measures) measures.push_back(to_string(m));
  return {{"train", cfg.train_path.string()},
          {"test", cfg.test_path ? json(cfg.test_path->string()) : json(nullptr)},
          {"format", cfg.format == DatasetFormat::ucr_tsv ? "ucr_tsv" : "csv_long"},
          {"h1", cfg.hidden1},
          {"h2", cfg.hidden2},
          {"epochs", cfg.train.epochs},
          {"batch", cfg.train.batch_size},
          {"lr", cfg.train.learning_rate},
          {"momentum", cfg.train.momentum},
          {"seed", cfg.train.seed},
          {"clip_norm", cfg.train.clip_norm ? json(*cfg.train.clip_norm) : json(nullptr)},
          {"k", cfg.k ? json(*cfg.k) : json(nullptr)},
          {"mode", to_string(cfg.mode)},
          {"measures", measures},
          {"ridge", cfg.ridge}};
}

inline json selection_to_json(const SelectionReport& sel) {
  json measures = json::array();
  for (const auto& [kind, outcome] : sel.per_measure) {
    std::vector<std::size_t> sizes(outcome.clustering.k, 0);
    for (int c : outcome.clustering.assignments) ++sizes[static_cast<std::size_t>(c)];
    measures.push_back({{"measure", to_string(kind)},
                        {"T", outcome.score.t},
                        {"rand_index", outcome.external ? json(outcome.external->rand_index) : json(nullptr)},
                        {"nmi", outcome.external ? json(outcome.external->nmi) : json(nullptr)},
                        {"cluster_sizes", sizes}});
  }
  json best = json::array();
  for (auto m : sel.best) best.push_back(to_string(m));
  return {{"measures", measures}, {"best", best}, {"covariance_fingerprint", sel.covariance_fingerprint}};
}

inline json report_to_json(const RunReport& r) {
  json out;
  out["schema_version"] = 1;
  out["mode"] = to_string(r.mode);
  out["dataset"] = {{"name", r.dataset_name},
                    {"fingerprint", r.dataset_fingerprint},
                    {"series", r.series_count},
                    {"max_length", r.max_length},
                    {"dims", r.dims},
                    {"classes", r.class_count ? json(*r.class_count) : json(nullptr)}};
  out["config"] = config_to_json(r.config);
  out["k"] = r.k;
  out["representation"] = {{"width", r.representation_width},
                           {"model_fingerprint", r.model_fingerprint ? json(*r.model_fingerprint) : json(nullptr)},
                           {"cached", r.cached_representation}};
  out["covariance"] = {{"fingerprint", r.selection.covariance_fingerprint},
                       {"ridge", r.ridge},
                       {"pseudo_inverse", r.pseudo_inverse}};
  const json sel = selection_to_json(r.selection);
  out["measures"] = sel["measures"];
  out["best"] = sel["best"];
  out["train_trace"] = r.train_trace ? trace_to_json(*r.train_trace) : json(nullptr);
  out["timings"] = {{"t_aecs", round_ms(r.timings.aecs)},
                    {"t_c", round_ms(r.timings.clustering)},
                    {"t_v", round_ms(r.timings.validation)},
                    {"t_total", round_ms(r.timings.total)}};
  out["environment"] = {{"compiler", __VERSION__},
                        {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                                      "." + std::to_string(EIGEN_MINOR_VERSION)},
                        {"cplusplus", __cplusplus},
                        {"threads", 1}};
  return out;
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw ShapeError("cannot write " + path.string());
  out << text;
}

inline void write_stage_outputs(const fs::path& dir, const ClusterStage& stage) {
  fs::create_directories(dir);
  for (const auto& [kind, dg] : stage.dendrograms) {
    std::ostringstream d, c;
    write_dendrogram(dg, d);
    write_flat_clustering(stage.clusterings.at(kind), c);
    write_text(dir / ("dendrogram_" + to_string(kind) + ".txt"), d.str());
    write_text(dir / ("clusters_" + to_string(kind) + ".csv"), c.str());
  }
}

// ---------------------------------------------------------------------------
// Runs

// Runs on an already merged and normalized dataset.
inline RunReport run_on_dataset(const TimeSeriesDataset& ds, const RunConfig& cfg) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  RunReport report;
  report.mode = cfg.mode;
  report.config = cfg;
  report.dataset_name = ds.name();
  report.dataset_fingerprint = ds.fingerprint();
  report.series_count = ds.size();
  report.max_length = ds.max_length();
  report.dims = ds.dims();
  if (ds.has_labels()) report.class_count = ds.labels()->class_count();
  report.k = resolve_k(cfg.k, ds);
  report.ridge = cfg.ridge;

  Matrix rows;
  std::optional<Matrix> latent_for_export;
  if (cfg.mode == RunMode::hc_aecs) {
    auto stage = learn_aecs(ds, cfg);
    rows = std::move(stage.latent.values);
    report.model_fingerprint = stage.latent.source_model_fingerprint;
    report.train_trace = std::move(stage.trace);
    report.cached_representation = stage.cached;
    latent_for_export = rows;
  } else {
    rows = flatten(ds);
  }
  const auto t1 = std::chrono::steady_clock::now();
  report.representation_width = static_cast<std::size_t>(rows.cols());

  const auto cov = fit_covariance(rows, cfg.ridge);
  report.pseudo_inverse = cov.used_pseudo_inverse();
  auto stage = cluster_rows(rows, cfg.measures, report.k, cov);
  const auto t2 = std::chrono::steady_clock::now();

  report.selection = select_best(rows, stage.clusterings, cov, ds.labels());
  const auto t3 = std::chrono::steady_clock::now();

  auto secs = [](auto a, auto b) { return std::chrono::duration<double>(b - a).count(); };
  report.timings = {secs(t0, t1), secs(t1, t2), secs(t2, t3), secs(t0, t3)};

  if (!cfg.output_dir.empty()) {
    write_stage_outputs(cfg.output_dir, stage);
    if (latent_for_export) {
      std::ostringstream s;
      write_latent_csv(*latent_for_export, s);
      write_text(cfg.output_dir / "latent.csv", s.str());
    }
    write_text(cfg.output_dir / "report.json", report_to_json(report).dump(2) + "\n");
  }
  return report;
}

inline RunReport run_hc_aecs(RunConfig cfg) {
  cfg.mode = RunMode::hc_aecs;
  return run_on_dataset(load_inputs(cfg), cfg);
}

inline RunReport run_hc_raw(RunConfig cfg) {
  cfg.mode = RunMode::hc_raw;
  return run_on_dataset(load_inputs(cfg), cfg);
}

// ---------------------------------------------------------------------------
// Benchmark harness

struct ManifestEntry {
  std::string name;
  fs::path train;
  std::optional<fs::path> test;
  DatasetFormat format = DatasetFormat::ucr_tsv;
  std::optional<std::size_t> k;
};

// CSV with header `name,train,test,format,k`; test, format and k may be empty.
// Relative paths resolve against the manifest's directory, then the data root.
inline std::vector<ManifestEntry> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ShapeError("cannot open manifest " + path.string());
  std::vector<ManifestEntry> out;
  std::string line;
  std::size_t line_no = 0;
  const auto base = path.parent_path();
  auto resolve = [&](std::string_view p) {
    fs::path candidate(p);
    if (candidate.is_relative() && fs::exists(base / candidate)) return base / candidate;
    return resolve_data_path(candidate);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty() || detail::trim(line).front() == '#') continue;
    auto cells = detail::split(line, ',');
    if (line_no == 1 && cells[0] == "name") continue;
    if (cells.size() < 2 || cells.size() > 5) throw ParseError("expected name,train[,test[,format[,k]]]", line_no);
    ManifestEntry e;
    e.name = std::string(cells[0]);
    e.train = resolve(cells[1]);
    if (cells.size() > 2 && !cells[2].empty()) e.test = resolve(cells[2]);
    if (cells.size() > 3 && !cells[3].empty()) e.format = parse_dataset_format(cells[3]);
    if (cells.size() > 4 && !cells[4].empty()) {
      auto k = detail::parse_int(cells[4]);
      if (!k || *k < 1) throw ParseError("K must be a positive integer", line_no);
      e.k = static_cast<std::size_t>(*k);
    }
    out.push_back(std::move(e));
  }
  return out;
}

struct BenchRow {
  std::string name;
  std::optional<RunReport> report;
  std::string error;
};

// Each dataset runs independently; a failure is recorded and the run goes on.
inline std::vector<BenchRow> benchmark(const std::vector<ManifestEntry>& manifest, const RunConfig& base) {
  std::vector<BenchRow> rows;
  for (const auto& entry : manifest) {
    BenchRow row{entry.name, std::nullopt, {}};
    try {
      RunConfig cfg = base;
      cfg.train_path = entry.train;
      cfg.test_path = entry.test;
      cfg.format = entry.format;
      if (entry.k) cfg.k = entry.k;
      if (!cfg.output_dir.empty()) cfg.output_dir = base.output_dir / entry.name;
      auto ds = load_inputs(cfg);
      row.report = run_on_dataset(ds, cfg);
      row.report->dataset_name = entry.name;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline void write_benchmark_csv(const std::vector<BenchRow>& rows, std::ostream& out) {
  out << "dataset,mode,M,n,d,K";
  for (auto m : kAllMeasures) out << ",RI_" << to_string(m) << ",NMI_" << to_string(m) << ",T_" << to_string(m);
  out << ",best,t_aecs,t_c,t_v,t_total,per_instance_ms,status\n";
  for (const auto& row : rows) {
    out << row.name;
    if (!row.report) {
      out << ",,,,,";
      for (std::size_t i = 0; i < 3 * std::size(kAllMeasures); ++i) out << ',';
      std::string msg = row.error;
      for (auto& ch : msg)
        if (ch == ',' || ch == '\n') ch = ' ';
      out << ",,,,,,,error: " << msg << '\n';
      continue;
    }
    const auto& r = *row.report;
    out << ',' << to_string(r.mode) << ',' << r.series_count << ',' << r.max_length << ',' << r.dims << ',' << r.k;
    for (auto m : kAllMeasures) {
      auto it = r.selection.per_measure.find(m);
      if (it == r.selection.per_measure.end()) {
        out << ",,,";
        continue;
      }
      const auto& o = it->second;
      out << ',' << (o.external ? detail::format_double(o.external->rand_index) : "") << ','
          << (o.external ? detail::format_double(o.external->nmi) : "") << ',' << detail::format_double(o.score.t);
    }
    std::string best;
    for (auto m : r.selection.best) best += (best.empty() ? "" : "|") + to_string(m);
    const double per_instance_ms = 1000.0 * r.timings.total / static_cast<double>(r.series_count);
    out << ',' << best << ',' << round_ms(r.timings.aecs) << ',' << round_ms(r.timings.clustering) << ','
        << round_ms(r.timings.validation) << ',' << round_ms(r.timings.total) << ',' << round_ms(per_instance_ms)
        << ",ok\n";
  }
}

}  // namespace hcaecs
