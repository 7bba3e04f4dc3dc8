#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hml/classifier.hpp"
#include "hml/dataset.hpp"

namespace hml {

struct EvaluationReport {
  double overall_accuracy = 0.0;  // trace(confusion) / n_test
  std::vector<double> per_class_accuracy;
  std::vector<bool> empty_class;  // rows with no test samples (accuracy 0)
  /// confusion[true][predicted]
  std::vector<std::vector<long>> confusion;
  long n_test = 0;
  std::string variant;
  std::uint64_t seed = 0;

  int num_classes() const { return static_cast<int>(confusion.size()); }
};

/// Builds a report from true and predicted labels in {0..num_classes-1}.
EvaluationReport make_report(std::span<const int> truth, std::span<const int> predicted,
                             int num_classes);

/// Throws ArgumentError on an empty test set, ShapeError on dimension mismatch.
EvaluationReport evaluate(const Predictor& predictor, const LabeledDataset& test);

/// Sums confusion matrices (e.g. over seeds) into one report.
EvaluationReport pool_reports(std::span<const EvaluationReport> reports);

struct BenchmarkRun {
  double train_fraction = 0.0;
  std::string variant;
  std::uint64_t seed = 0;
  std::optional<EvaluationReport> report;
  std::string error;  // set when the run failed
};

struct ComparisonRow {
  std::string split;  // e.g. "80/20"
  double train_fraction = 0.0;
  std::vector<std::optional<double>> accuracy;  // per variant; nullopt if every run failed
  std::vector<int> failed_runs;                 // per variant
};

struct ComparisonTable {
  std::vector<std::string> variants;
  std::vector<ComparisonRow> rows;
};

struct BenchmarkResult {
  ComparisonTable table;
  std::vector<BenchmarkRun> runs;
};

struct BenchmarkOptions {
  bool standardize = false;
  int jobs = 1;
};

/// For every (split, seed, variant): stratified split with that seed,
/// train (MMC seeded with the same seed), evaluate. Failures are recorded
/// per run and never abort other runs. Cells are means over seeds.
BenchmarkResult run_benchmark(const LabeledDataset& ds, std::span<const SplitSpec> splits,
                              std::span<const VariantSpec> variants,
                              std::span<const std::uint64_t> seeds,
                              const BenchmarkOptions& options = {});

std::string split_label(double train_fraction);
std::string format_table(const ComparisonTable& table);
std::string table_to_json(const ComparisonTable& table);
/// One JSON object per line: split, variant, seed, accuracy, per_class,
/// confusion (or error).
std::string runs_to_jsonl(std::span<const BenchmarkRun> runs);
std::string report_to_json(const EvaluationReport& report,
                           const std::vector<std::string>& class_names);

/// Grouped bar chart, one group per class and one bar per report, as SVG.
/// Throws ArgumentError for an empty list or mismatched class counts.
std::string classwise_chart_svg(std::span<const EvaluationReport> reports,
                                const std::vector<std::string>& class_names = {});
void render_classwise_chart(std::span<const EvaluationReport> reports,
                            const std::filesystem::path& path,
                            const std::vector<std::string>& class_names = {});

}  // namespace hml
