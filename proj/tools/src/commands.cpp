#include "hml/cli/commands.hpp"

#include <cstdio>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "hml/error.hpp"
#include "hml/eval.hpp"
#include "hml/hierarchy.hpp"
#include "hml/io.hpp"

namespace hml::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void prepare_output(const RunConfig& cfg) {
  std::error_code ec;
  fs::create_directories(cfg.output_dir, ec);
  if (ec) throw FileError("cannot create output directory " + cfg.output_dir.string() + ": " +
                          ec.message());
  write_file_atomic(cfg.output_dir / "config.json", config_to_json(cfg));
}

LabeledDataset load_configured(const RunConfig& cfg) {
  if (cfg.dataset.empty()) throw ArgumentError("config does not name a dataset (dataset.path)");
  return load_dataset(cfg.dataset, cfg.format);
}

const char* extension(DatasetFormat f) { return f == DatasetFormat::csv ? ".csv" : ".bin"; }

std::string scaler_to_json(const Scaler& s) {
  json j;
  j["mean"] = std::vector<double>(s.mean.data(), s.mean.data() + s.mean.size());
  j["stddev"] = std::vector<double>(s.stddev.data(), s.stddev.data() + s.stddev.size());
  return j.dump(2) + "\n";
}

Scaler scaler_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    const auto mean = j.at("mean").get<std::vector<double>>();
    const auto sd = j.at("stddev").get<std::vector<double>>();
    if (mean.size() != sd.size()) throw ArgumentError("scaler: mean and stddev lengths differ");
    Scaler s;
    s.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), static_cast<Index>(mean.size()));
    s.stddev = Eigen::Map<const Eigen::VectorXd>(sd.data(), static_cast<Index>(sd.size()));
    return s;
  } catch (const json::exception& e) {
    throw ArgumentError(std::string("scaler file: ") + e.what());
  }
}

struct LoadedModel {
  HierarchicalModel model;
  std::optional<Scaler> scaler;
};

LoadedModel load_for_inference(const PredictOptions& opts) {
  LoadedModel lm{load_model(opts.model), std::nullopt};
  if (opts.scaler) {
    lm.scaler = scaler_from_json(read_file_text(*opts.scaler));
    if (lm.scaler->mean.size() != lm.model.dim())
      throw ShapeError("scaler has d=" + std::to_string(lm.scaler->mean.size()) +
                       " but the model expects d=" + std::to_string(lm.model.dim()));
  }
  return lm;
}

void check_dim(const HierarchicalModel& model, Index actual) {
  if (actual != model.dim())
    throw ShapeError("dimension mismatch: model expects d=" + std::to_string(model.dim()) +
                     ", input has d=" + std::to_string(actual));
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

}  // namespace

RunConfig effective_config(const CommonOptions& opts) {
  RunConfig cfg = opts.config ? load_config(*opts.config) : RunConfig{};
  if (opts.seed) {
    cfg.split.seed = *opts.seed;
    cfg.mmc.seed = *opts.seed;
    cfg.synthetic.seed = *opts.seed;
    cfg.seeds = {*opts.seed};
  }
  if (opts.out) cfg.output_dir = *opts.out;
  if (opts.k) cfg.K = *opts.k;
  if (!opts.variants.empty()) {
    cfg.variants.clear();
    for (const auto& v : opts.variants) cfg.variants.push_back(parse_variant(v));
    if (cfg.variants.size() == 1 && is_hierarchical(cfg.variants.front()))
      cfg.train_variant = cfg.variants.front();
  }
  cfg.validate();
  return cfg;
}

void cmd_gen_synthetic(const RunConfig& cfg, Streams io) {
  const LabeledDataset ds = make_synthetic(cfg.synthetic);
  prepare_output(cfg);
  const fs::path path = cfg.output_dir / (std::string("synthetic") + extension(cfg.format));
  save_dataset(ds, path, cfg.format);
  io.out << "wrote " << path.string() << " (" << ds.size() << " samples, d=" << ds.dim()
         << ", " << ds.num_classes() << " classes)\n";
}

void cmd_split(const RunConfig& cfg, Streams io) {
  const LabeledDataset ds = load_configured(cfg);
  const SplitResult s = stratified_split(ds, cfg.split);
  prepare_output(cfg);
  const std::string ext = extension(cfg.format);
  save_dataset(s.train, cfg.output_dir / ("train" + ext), cfg.format);
  save_dataset(s.test, cfg.output_dir / ("test" + ext), cfg.format);
  io.out << "train " << s.train.size() << ", test " << s.test.size() << " -> "
         << cfg.output_dir.string() << "\n";
}

void cmd_build_tree(const RunConfig& cfg, Streams io) {
  const LabeledDataset ds = load_configured(cfg);
  validate_dataset(ds);
  const ClassTree tree = build_tree(class_centroids(ds), cfg.mmc);
  for (const auto& w : tree.warnings) io.err << "warning: " << w << "\n";
  prepare_output(cfg);
  write_file_atomic(cfg.output_dir / "tree.json", tree_to_json(tree, ds.class_names));
  io.out << format_tree(tree, ds.class_names);
}

void cmd_train(const RunConfig& cfg, int jobs, Streams io) {
  const LabeledDataset ds = load_configured(cfg);
  const SplitResult s = stratified_split(ds, cfg.split);
  LabeledDataset train = s.train;
  std::optional<Scaler> scaler;
  if (cfg.standardize) {
    scaler = fit_scaler(train);
    train = scaler->apply(train);
  }
  const HierarchicalModel model =
      train_hierarchical_variant(train, variant_spec(cfg, cfg.train_variant), {jobs});
  for (const auto& w : model.tree.warnings) io.err << "warning: " << w << "\n";

  prepare_output(cfg);
  save_model(model, cfg.output_dir / "model.hmlm");
  if (scaler) write_file_atomic(cfg.output_dir / "scaler.json", scaler_to_json(*scaler));

  io.out << "variant " << to_string(model.variant) << ", " << model.tree.num_classes
         << " classes, " << model.node_metrics.size() << " node metrics\n";
  for (const auto& [node, sum] : model.fit_summaries) {
    io.out << "node " << node.index << ": samples=" << sum.samples
           << " iters=" << sum.iterations << " converged=" << (sum.converged ? "yes" : "no")
           << " objective " << fmt_double(sum.initial_objective) << " -> "
           << fmt_double(sum.final_objective) << " active_impostors=" << sum.active_impostors
           << "\n";
  }
  io.out << "model written to " << (cfg.output_dir / "model.hmlm").string() << "\n";
}

void cmd_predict(const PredictOptions& opts, Streams io) {
  const LoadedModel lm = load_for_inference(opts);
  const HierarchicalModel& model = lm.model;
  Eigen::MatrixXd x = read_feature_csv(read_file_text(opts.input), model.dim());
  check_dim(model, x.cols());
  if (lm.scaler) x = lm.scaler->apply(x);
  std::string labels;
  for (Index i = 0; i < x.rows(); ++i) {
    labels += model.class_names[static_cast<std::size_t>(predict(model, x.row(i).transpose()))];
    labels += '\n';
  }
  if (opts.output) {
    write_file_atomic(*opts.output, labels);
  } else {
    io.out << labels;
  }
}

void cmd_evaluate(const PredictOptions& opts, Streams io) {
  const LoadedModel lm = load_for_inference(opts);
  const HierarchicalModel& model = lm.model;
  LabeledDataset test = read_csv(read_file_text(opts.input));
  check_dim(model, test.dim());
  if (lm.scaler) test = lm.scaler->apply(test);

  // Test labels are matched to the model's classes by name.
  std::map<std::string, int> index;
  for (std::size_t c = 0; c < model.class_names.size(); ++c)
    index.emplace(model.class_names[c], static_cast<int>(c));
  for (int& y : test.labels) {
    const std::string name = test.class_name(y);
    auto it = index.find(name);
    if (it == index.end()) throw ArgumentError("test label '" + name + "' is not a model class");
    y = it->second;
  }
  test.class_names = model.class_names;

  HierarchicalPredictor predictor(model);
  EvaluationReport report = evaluate(predictor, test);
  report.variant = to_string(model.variant);
  io.out << "accuracy " << fmt_double(100.0 * report.overall_accuracy) << "% on "
         << report.n_test << " samples\n";
  if (opts.output) {
    std::error_code ec;
    fs::create_directories(*opts.output, ec);
    if (ec) throw FileError("cannot create output directory " + opts.output->string());
    write_file_atomic(*opts.output / "report.json", report_to_json(report, model.class_names));
  }
}

void cmd_benchmark(const RunConfig& cfg, int jobs, Streams io) {
  const LabeledDataset ds = load_configured(cfg);
  std::vector<SplitSpec> splits;
  for (double f : cfg.benchmark_splits) splits.push_back({f, 0});
  std::vector<VariantSpec> variants;
  for (Variant v : cfg.variants) variants.push_back(variant_spec(cfg, v));

  const BenchmarkResult result =
      run_benchmark(ds, splits, variants, cfg.seeds, {cfg.standardize, jobs});

  prepare_output(cfg);
  const std::string table = format_table(result.table);
  write_file_atomic(cfg.output_dir / "table.txt", table);
  write_file_atomic(cfg.output_dir / "table.json", table_to_json(result.table));
  write_file_atomic(cfg.output_dir / "runs.jsonl", runs_to_jsonl(result.runs));

  // One chart per split, each bar pooling a variant's runs over seeds.
  for (double f : cfg.benchmark_splits) {
    std::vector<EvaluationReport> pooled;
    for (Variant v : cfg.variants) {
      std::vector<EvaluationReport> reports;
      for (const auto& run : result.runs)
        if (run.train_fraction == f && run.variant == to_string(v) && run.report)
          reports.push_back(*run.report);
      if (reports.empty()) continue;
      pooled.push_back(pool_reports(reports));
      pooled.back().variant = to_string(v);
    }
    if (pooled.empty()) continue;
    std::string name = split_label(f);
    std::replace(name.begin(), name.end(), '/', '-');
    render_classwise_chart(pooled, cfg.output_dir / ("classwise_" + name + ".svg"),
                           ds.class_names);
  }

  io.out << table;
  for (const auto& run : result.runs)
    if (!run.error.empty())
      io.err << "run failed: split " << split_label(run.train_fraction) << ", " << run.variant
             << ", seed " << run.seed << ": " << run.error << "\n";
}

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hierarchical metric learning: class trees, per-node LMNN and tree-walk KNN",
               "hmlearn"};
  app.require_subcommand(1);
  app.fallthrough();

  CommonOptions common;
  std::string config, out_path;
  std::uint64_t seed = 0;
  int k = 0;
  std::string variant_list;
  app.add_option("--config", config, "JSON config file");
  app.add_option("--jobs", common.jobs, "worker threads")->check(CLI::PositiveNumber);
  auto* seed_opt = app.add_option("--seed", seed, "overrides every seed in the config");
  app.add_option("--out", out_path, "output directory (predict: label file)");
  auto* k_opt = app.add_option("--k", k, "inference neighbour count")->check(CLI::PositiveNumber);
  app.add_option("--variant", variant_list, "comma-separated variant names");

  auto* gen = app.add_subcommand("gen-synthetic", "write the synthetic fine-grained dataset");
  auto* split = app.add_subcommand("split", "stratified train/test split");
  auto* tree = app.add_subcommand("build-tree", "build and print the class tree");
  auto* train = app.add_subcommand("train", "train a hierarchical model");
  auto* bench = app.add_subcommand("benchmark", "compare all variants over splits and seeds");

  PredictOptions popts;
  std::string scaler;
  auto* pred = app.add_subcommand("predict", "predict class names for a feature file");
  auto* eval = app.add_subcommand("evaluate", "score a model on a labelled file");
  for (auto* sub : {pred, eval}) {
    sub->add_option("--model", popts.model, "model file")->required();
    sub->add_option("--input", popts.input, "CSV input")->required();
    sub->add_option("--scaler", scaler, "scaler.json written by train");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (!config.empty()) common.config = config;
    if (!out_path.empty()) common.out = out_path;
    if (*seed_opt) common.seed = seed;
    if (*k_opt) common.k = k;
    if (!variant_list.empty()) {
      std::stringstream ss(variant_list);
      for (std::string v; std::getline(ss, v, ',');)
        if (!v.empty()) common.variants.push_back(v);
    }
    Streams io{out, err};

    if (pred->parsed() || eval->parsed()) {
      if (!scaler.empty()) popts.scaler = scaler;
      if (common.out) popts.output = *common.out;
      if (pred->parsed()) {
        cmd_predict(popts, io);
      } else {
        cmd_evaluate(popts, io);
      }
      return 0;
    }

    const RunConfig cfg = effective_config(common);
    if (gen->parsed()) cmd_gen_synthetic(cfg, io);
    if (split->parsed()) cmd_split(cfg, io);
    if (tree->parsed()) cmd_build_tree(cfg, io);
    if (train->parsed()) cmd_train(cfg, common.jobs, io);
    if (bench->parsed()) cmd_benchmark(cfg, common.jobs, io);
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace hml::cli
