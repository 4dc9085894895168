#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hcaecs/hcaecs.hpp"

namespace {

using namespace hcaecs;

struct DataArgs {
  std::string dataset;
  std::string train;
  std::string test;
  std::string format = "ucr_tsv";
};

struct ModelArgs {
  std::size_t h1 = 16;
  std::size_t h2 = 12;
  std::size_t epochs = 30;
  std::size_t batch = 32;
  double lr = 0.004;
  double momentum = 0.0;
  std::uint64_t seed = 0;
  double clip = 0.0;
};

struct SelectArgs {
  std::size_t k = 0;
  std::vector<std::string> measures{"CH", "MA", "ML"};
  double ridge = kDefaultRidge;
};

void add_data_options(CLI::App& app, DataArgs& a) {
  app.add_option("--dataset", a.dataset, "UCR archive name looked up under $HCAECS_DATA_ROOT");
  app.add_option("--train", a.train, "training split (or the only file)");
  app.add_option("--test", a.test, "test split, merged after the training split");
  app.add_option("--format", a.format, "ucr_tsv or csv_long")->capture_default_str();
}

void add_model_options(CLI::App& app, ModelArgs& a) {
  app.add_option("--h1", a.h1, "first encoder layer width")->capture_default_str();
  app.add_option("--h2", a.h2, "latent width")->capture_default_str();
  app.add_option("--epochs", a.epochs)->capture_default_str();
  app.add_option("--batch", a.batch)->capture_default_str();
  app.add_option("--lr", a.lr)->capture_default_str();
  app.add_option("--momentum", a.momentum)->capture_default_str();
  app.add_option("--seed", a.seed)->capture_default_str();
  app.add_option("--clip", a.clip, "gradient norm clip, 0 disables")->capture_default_str();
}

void add_select_options(CLI::App& app, SelectArgs& a) {
  app.add_option("--k", a.k, "number of clusters (default: number of classes)");
  app.add_option("--measures", a.measures, "subset of CH MA ML")->delimiter(',')->capture_default_str();
  app.add_option("--ridge", a.ridge, "covariance ridge relative to the mean variance")->capture_default_str();
}

RunConfig make_config(const DataArgs& d, const ModelArgs& m, const SelectArgs& s, const std::string& out) {
  RunConfig cfg;
  if (!d.dataset.empty()) {
    auto root = data_root();
    if (!root) throw ConfigError(std::string("--dataset needs $") + kDataRootEnv);
    auto paths = find_ucr_dataset(*root, d.dataset);
    if (!paths) throw ShapeError("dataset " + d.dataset + " not found under " + root->string());
    cfg.train_path = paths->train;
    cfg.test_path = paths->test;
  } else {
    if (d.train.empty()) throw ConfigError("either --dataset or --train is required");
    cfg.train_path = d.train;
    if (!d.test.empty()) cfg.test_path = d.test;
  }
  cfg.format = parse_dataset_format(d.format);
  cfg.hidden1 = m.h1;
  cfg.hidden2 = m.h2;
  cfg.train.epochs = m.epochs;
  cfg.train.batch_size = m.batch;
  cfg.train.learning_rate = m.lr;
  cfg.train.momentum = m.momentum;
  cfg.train.seed = m.seed;
  if (m.clip > 0.0) cfg.train.clip_norm = m.clip;
  if (s.k > 0) cfg.k = s.k;
  cfg.measures.clear();
  for (const auto& name : s.measures) cfg.measures.push_back(parse_measure(name));
  cfg.ridge = s.ridge;
  cfg.output_dir = out;
  cfg.validate();
  return cfg;
}

Matrix read_rows(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ShapeError("cannot open " + path);
  return read_latent_csv(in);
}

void print_summary(const RunReport& r) {
  std::cout << r.dataset_name << " (" << to_string(r.mode) << ", M=" << r.series_count << ", K=" << r.k
            << ", width=" << r.representation_width << ")\n";
  for (const auto& [kind, o] : r.selection.per_measure) {
    std::cout << "  " << to_string(kind) << "  T=" << detail::format_double(o.score.t);
    if (o.external)
      std::cout << "  RI=" << detail::format_double(o.external->rand_index)
                << "  NMI=" << detail::format_double(o.external->nmi);
    std::cout << '\n';
  }
  std::cout << "  best:";
  for (auto m : r.selection.best) std::cout << ' ' << to_string(m);
  std::cout << "\n  t_aecs=" << round_ms(r.timings.aecs) << "s t_c=" << round_ms(r.timings.clustering)
            << "s t_v=" << round_ms(r.timings.validation) << "s\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical clustering of time series on auto-encoded compact sequences"};
  app.require_subcommand(1);

  DataArgs data;
  ModelArgs model;
  SelectArgs select;
  std::string out;
  std::string rows_path;
  std::string clusters_dir;
  std::string manifest;
  std::string mode = "hc_aecs";

  auto* train_cmd = app.add_subcommand("train-aecs", "train the auto-encoder and write latent.csv, model.ckpt");
  add_data_options(*train_cmd, data);
  add_model_options(*train_cmd, model);
  train_cmd->add_option("--out", out, "output directory")->required();

  auto* cluster_cmd = app.add_subcommand("cluster", "average-linkage clustering of a row matrix");
  cluster_cmd->add_option("--rows", rows_path, "CSV with header series_id,z0,... (e.g. latent.csv)");
  add_data_options(*cluster_cmd, data);
  add_select_options(*cluster_cmd, select);
  cluster_cmd->add_option("--out", out, "output directory")->required();

  auto* select_cmd = app.add_subcommand("select", "score clusterings with Hubert's statistic");
  select_cmd->add_option("--rows", rows_path, "row matrix the clusterings were built from");
  add_data_options(*select_cmd, data);
  select_cmd->add_option("--clusters", clusters_dir, "directory holding clusters_<M>.csv")->required();
  select_cmd->add_option("--measures", select.measures)->delimiter(',')->capture_default_str();
  select_cmd->add_option("--ridge", select.ridge)->capture_default_str();

  auto* run_cmd = app.add_subcommand("run", "end-to-end HC-AECS");
  add_data_options(*run_cmd, data);
  add_model_options(*run_cmd, model);
  add_select_options(*run_cmd, select);
  run_cmd->add_option("--out", out, "output directory for report.json and artifacts");

  auto* raw_cmd = app.add_subcommand("run-raw", "hierarchical clustering on the raw series");
  add_data_options(*raw_cmd, data);
  add_select_options(*raw_cmd, select);
  raw_cmd->add_option("--out", out, "output directory for report.json and artifacts");

  auto* bench_cmd = app.add_subcommand("bench", "run every dataset in a manifest and print a CSV table");
  bench_cmd->add_option("--manifest", manifest, "CSV: name,train,test,format,k")->required();
  bench_cmd->add_option("--mode", mode, "hc_aecs or hc_raw")->capture_default_str();
  add_model_options(*bench_cmd, model);
  add_select_options(*bench_cmd, select);
  bench_cmd->add_option("--out", out, "per-dataset outputs go to <out>/<name>");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed()) {
      auto cfg = make_config(data, model, select, out);
      auto ds = load_inputs(cfg);
      auto init = init_model(ModelDims{ds.dims(), cfg.hidden1, cfg.hidden2, ds.max_length()}, cfg.train.seed);
      auto result = train(std::move(init), ds, cfg.train);
      auto latent = extract_aecs(result.model, ds);
      fs::create_directories(out);
      save_checkpoint(result.model, fs::path(out) / "model.ckpt");
      std::ostringstream s;
      write_latent_csv(latent.values, s);
      write_text(fs::path(out) / "latent.csv", s.str());
      write_text(fs::path(out) / "trace.json", trace_to_json(result.trace).dump(2) + "\n");
      std::cout << "final loss " << detail::format_double(result.trace.loss.back()) << ", model "
                << result.model.fingerprint() << '\n';
    } else if (cluster_cmd->parsed() || select_cmd->parsed()) {
      Matrix rows;
      std::optional<TimeSeriesDataset> ds;
      if (!data.train.empty() || !data.dataset.empty()) ds = load_inputs(make_config(data, model, select, ""));
      if (!rows_path.empty())
        rows = read_rows(rows_path);
      else if (ds)
        rows = flatten(*ds);
      else
        throw ConfigError("either --rows or a dataset is required");
      std::vector<MeasureKind> measures;
      for (const auto& name : select.measures) measures.push_back(parse_measure(name));
      const auto cov = fit_covariance(rows, select.ridge);

      if (cluster_cmd->parsed()) {
        std::size_t k = select.k;
        if (k == 0) {
          if (!ds) throw ConfigError("--k is required without labelled data");
          k = resolve_k(std::nullopt, *ds);
        }
        write_stage_outputs(out, cluster_rows(rows, measures, k, cov));
        std::cout << "wrote " << measures.size() << " clusterings with K=" << k << " to " << out << '\n';
      } else {
        std::map<MeasureKind, FlatClustering> clusterings;
        for (auto m : measures) {
          const auto path = fs::path(clusters_dir) / ("clusters_" + to_string(m) + ".csv");
          std::ifstream in(path);
          if (!in) throw ShapeError("cannot open " + path.string());
          clusterings.emplace(m, read_flat_clustering(in, m));
        }
        std::optional<Labels> labels;
        if (ds) labels = ds->labels();
        const auto sel = select_best(rows, clusterings, cov, labels);
        std::cout << selection_to_json(sel).dump(2) << '\n';
      }
    } else if (run_cmd->parsed() || raw_cmd->parsed()) {
      auto cfg = make_config(data, model, select, out);
      auto report = run_cmd->parsed() ? run_hc_aecs(cfg) : run_hc_raw(cfg);
      print_summary(report);
    } else if (bench_cmd->parsed()) {
      DataArgs none;
      none.train = "-";
      auto cfg = make_config(none, model, select, out);
      if (mode == "hc_aecs")
        cfg.mode = RunMode::hc_aecs;
      else if (mode == "hc_raw")
        cfg.mode = RunMode::hc_raw;
      else
        throw ConfigError("unknown mode " + mode);
      auto rows = benchmark(read_manifest(manifest), cfg);
      write_benchmark_csv(rows, std::cout);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.category());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
