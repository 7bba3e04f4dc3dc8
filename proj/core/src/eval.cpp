#include "hml/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <future>

#include <json.hpp>

#include "hml/error.hpp"
#include "hml/io.hpp"

namespace hml {

EvaluationReport make_report(std::span<const int> truth, std::span<const int> predicted,
                             int num_classes) {
  if (truth.size() != predicted.size())
    throw ShapeError("truth and prediction lengths differ");
  if (truth.empty()) throw ArgumentError("cannot evaluate on an empty test set");
  EvaluationReport r;
  r.confusion.assign(num_classes, std::vector<long>(num_classes, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= num_classes || predicted[i] < 0 ||
        predicted[i] >= num_classes)
      throw ArgumentError("label outside [0, " + std::to_string(num_classes) + ")");
    ++r.confusion[truth[i]][predicted[i]];
  }
  r.n_test = static_cast<long>(truth.size());
  long correct = 0;
  r.per_class_accuracy.assign(num_classes, 0.0);
  r.empty_class.assign(num_classes, false);
  for (int c = 0; c < num_classes; ++c) {
    long row = 0;
    for (long v : r.confusion[c]) row += v;
    correct += r.confusion[c][c];
    if (row == 0)
      r.empty_class[c] = true;
    else
      r.per_class_accuracy[c] = static_cast<double>(r.confusion[c][c]) / static_cast<double>(row);
  }
  r.overall_accuracy = static_cast<double>(correct) / static_cast<double>(r.n_test);
  return r;
}

EvaluationReport evaluate(const Predictor& predictor, const LabeledDataset& test) {
  if (test.size() == 0) throw ArgumentError("cannot evaluate on an empty test set");
  if (test.dim() != predictor.dim())
    throw ShapeError("test data has dimension " + std::to_string(test.dim()) +
                     ", predictor expects " + std::to_string(predictor.dim()));
  std::vector<int> predicted(test.size());
  for (Index i = 0; i < test.size(); ++i)
    predicted[i] = predictor.predict(test.features.row(i).transpose());
  return make_report(test.labels, predicted,
                     std::max(test.num_classes(), predictor.num_classes()));
}

EvaluationReport pool_reports(std::span<const EvaluationReport> reports) {
  if (reports.empty()) throw ArgumentError("no reports to pool");
  const int m = reports.front().num_classes();
  std::vector<int> truth, predicted;
  for (const auto& r : reports) {
    if (r.num_classes() != m) throw ArgumentError("reports disagree on the class count");
    for (int t = 0; t < m; ++t)
      for (int p = 0; p < m; ++p) {
        truth.insert(truth.end(), r.confusion[t][p], t);
        predicted.insert(predicted.end(), r.confusion[t][p], p);
      }
  }
  auto out = make_report(truth, predicted, m);
  out.variant = reports.front().variant;
  out.seed = reports.front().seed;
  return out;
}

std::string split_label(double train_fraction) {
  const int train = static_cast<int>(std::lround(train_fraction * 100.0));
  return std::to_string(train) + "/" + std::to_string(100 - train);
}

namespace {

BenchmarkRun run_one(const LabeledDataset& ds, const SplitSpec& split, const VariantSpec& spec,
                     std::uint64_t seed, bool standardize) {
  BenchmarkRun run;
  run.train_fraction = split.train_fraction;
  run.variant = to_string(spec.variant);
  run.seed = seed;
  try {
    auto parts = stratified_split(ds, {split.train_fraction, seed});
    if (standardize) {
      auto s = hml::standardize(parts.train, parts.test);
      parts.train = std::move(s.train);
      parts.test = std::move(s.test);
    }
    VariantSpec seeded = spec;
    if (seeded.mmc) seeded.mmc->seed = seed;
    const auto predictor = train_variant(parts.train, seeded);
    auto report = evaluate(*predictor, parts.test);
    report.variant = run.variant;
    report.seed = seed;
    run.report = std::move(report);
  } catch (const std::exception& e) {
    run.error = e.what();
  }
  return run;
}

}  // namespace

BenchmarkResult run_benchmark(const LabeledDataset& ds, std::span<const SplitSpec> splits,
                              std::span<const VariantSpec> variants,
                              std::span<const std::uint64_t> seeds,
                              const BenchmarkOptions& options) {
  struct Job {
    std::size_t split, variant;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (std::size_t s = 0; s < splits.size(); ++s)
    for (std::uint64_t seed : seeds)
      for (std::size_t v = 0; v < variants.size(); ++v) jobs.push_back({s, v, seed});

  BenchmarkResult result;
  result.runs.resize(jobs.size());
  auto execute = [&](std::size_t i) {
    const auto& j = jobs[i];
    return run_one(ds, splits[j.split], variants[j.variant], j.seed, options.standardize);
  };
  if (options.jobs <= 1) {
    for (std::size_t i = 0; i < jobs.size(); ++i) result.runs[i] = execute(i);
  } else {
    for (std::size_t start = 0; start < jobs.size(); start += options.jobs) {
      std::vector<std::future<BenchmarkRun>> batch;
      const auto end = std::min(jobs.size(), start + static_cast<std::size_t>(options.jobs));
      for (std::size_t i = start; i < end; ++i)
        batch.push_back(std::async(std::launch::async, execute, i));
      for (std::size_t i = start; i < end; ++i) result.runs[i] = batch[i - start].get();
    }
  }

  auto& table = result.table;
  for (const auto& v : variants) table.variants.push_back(to_string(v.variant));
  for (std::size_t s = 0; s < splits.size(); ++s) {
    ComparisonRow row;
    row.train_fraction = splits[s].train_fraction;
    row.split = split_label(row.train_fraction);
    for (std::size_t v = 0; v < variants.size(); ++v) {
      double sum = 0.0;
      int ok = 0, failed = 0;
      for (std::size_t i = 0; i < jobs.size(); ++i) {
        if (jobs[i].split != s || jobs[i].variant != v) continue;
        if (result.runs[i].report) {
          sum += result.runs[i].report->overall_accuracy;
          ++ok;
        } else {
          ++failed;
        }
      }
      row.accuracy.push_back(ok ? std::optional<double>(sum / ok) : std::nullopt);
      row.failed_runs.push_back(failed);
    }
    table.rows.push_back(std::move(row));
  }
  return result;
}

std::string format_table(const ComparisonTable& table) {
  std::size_t width = 12;
  for (const auto& v : table.variants) width = std::max(width, v.size() + 2);
  auto pad = [&](std::string s) {
    s.resize(std::max(s.size(), width), ' ');
    return s;
  };
  std::string out = pad("split");
  for (const auto& v : table.variants) out += pad(v);
  out += '\n';
  char buf[32];
  for (const auto& row : table.rows) {
    out += pad(row.split);
    for (std::size_t v = 0; v < row.accuracy.size(); ++v) {
      if (!row.accuracy[v]) {
        out += pad("failed");
        continue;
      }
      std::snprintf(buf, sizeof(buf), "%.2f%%%s", 100.0 * *row.accuracy[v],
                    row.failed_runs[v] ? "*" : "");
      out += pad(buf);
    }
    out += '\n';
  }
  return out;
}

std::string table_to_json(const ComparisonTable& table) {
  nlohmann::json doc;
  doc["variants"] = table.variants;
  auto& rows = doc["rows"] = nlohmann::json::array();
  for (const auto& row : table.rows) {
    nlohmann::json cells = nlohmann::json::object();
    for (std::size_t v = 0; v < row.accuracy.size(); ++v)
      cells[table.variants[v]] = row.accuracy[v] ? nlohmann::json(*row.accuracy[v])
                                                 : nlohmann::json(nullptr);
    rows.push_back({{"split", row.split},
                    {"train_fraction", row.train_fraction},
                    {"accuracy", cells},
                    {"failed_runs", row.failed_runs}});
  }
  return doc.dump(2) + "\n";
}

namespace {

nlohmann::json report_json(const EvaluationReport& r) {
  return {{"accuracy", r.overall_accuracy},
          {"n_test", r.n_test},
          {"per_class", r.per_class_accuracy},
          {"confusion", r.confusion}};
}

}  // namespace

std::string runs_to_jsonl(std::span<const BenchmarkRun> runs) {
  std::string out;
  for (const auto& run : runs) {
    nlohmann::json rec = {{"split", split_label(run.train_fraction)},
                          {"train_fraction", run.train_fraction},
                          {"variant", run.variant},
                          {"seed", run.seed}};
    if (run.report)
      rec.update(report_json(*run.report));
    else
      rec["error"] = run.error;
    out += rec.dump() + "\n";
  }
  return out;
}

std::string report_to_json(const EvaluationReport& report,
                           const std::vector<std::string>& class_names) {
  auto doc = report_json(report);
  doc["variant"] = report.variant;
  doc["seed"] = report.seed;
  doc["class_names"] = class_names;
  return doc.dump(2) + "\n";
}

namespace {

constexpr const char* kPalette[] = {"#4e79a7", "#f28e2b", "#e15759", "#76b7b2",
                                    "#59a14f", "#edc948", "#b07aa1", "#ff9da7"};

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string classwise_chart_svg(std::span<const EvaluationReport> reports,
                                const std::vector<std::string>& class_names) {
  if (reports.empty()) throw ArgumentError("classwise chart needs at least one report");
  const int m = reports.front().num_classes();
  for (const auto& r : reports)
    if (r.num_classes() != m) throw ArgumentError("reports disagree on the class count");

  const double bar_w = 10.0, group_gap = 12.0, plot_h = 240.0;
  const double left = 50.0, top = 20.0;
  const double group_w = bar_w * static_cast<double>(reports.size()) + group_gap;
  const double plot_w = group_w * m;
  const double legend_h = 18.0 * static_cast<double>(reports.size());
  const double width = left + plot_w + 20.0;
  const double height = top + plot_h + 60.0 + legend_h;

  char buf[512];
  std::string svg;
  std::snprintf(buf, sizeof(buf),
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" "
                "viewBox=\"0 0 %.0f %.0f\" font-family=\"sans-serif\" font-size=\"10\">\n",
                width, height, width, height);
  svg += buf;
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (int tick = 0; tick <= 100; tick += 25) {
    const double y = top + plot_h * (1.0 - tick / 100.0);
    std::snprintf(buf, sizeof(buf),
                  "<line class=\"grid\" x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" "
                  "stroke=\"#ddd\"/>\n<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"end\">%d%%</text>\n",
                  left, y, left + plot_w, y, left - 4.0, y + 3.0, tick);
    svg += buf;
  }
  for (int c = 0; c < m; ++c) {
    const double gx = left + group_w * c + group_gap / 2.0;
    svg += "<g class=\"class-group\">\n";
    for (std::size_t s = 0; s < reports.size(); ++s) {
      const double acc = reports[s].per_class_accuracy[c];
      const double h = plot_h * acc;
      std::snprintf(buf, sizeof(buf),
                    "<rect class=\"bar\" data-class=\"%d\" data-series=\"%zu\" x=\"%.2f\" "
                    "y=\"%.4f\" width=\"%.2f\" height=\"%.4f\" fill=\"%s\"/>\n",
                    c, s, gx + bar_w * static_cast<double>(s), top + plot_h - h, bar_w, h,
                    kPalette[s % std::size(kPalette)]);
      svg += buf;
    }
    const std::string name =
        c < static_cast<int>(class_names.size()) ? class_names[c] : std::to_string(c + 1);
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%.2f\" y=\"%.1f\" text-anchor=\"middle\">", 
                  gx + bar_w * static_cast<double>(reports.size()) / 2.0, top + plot_h + 14.0);
    svg += buf + xml_escape(name) + "</text>\n</g>\n";
  }
  std::snprintf(buf, sizeof(buf),
                "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n",
                left, top + plot_h, left + plot_w, top + plot_h);
  svg += buf;
  for (std::size_t s = 0; s < reports.size(); ++s) {
    const double y = top + plot_h + 34.0 + 18.0 * static_cast<double>(s);
    const std::string label =
        reports[s].variant.empty() ? "series " + std::to_string(s + 1) : reports[s].variant;
    std::snprintf(buf, sizeof(buf),
                  "<g class=\"legend-entry\"><rect x=\"%.1f\" y=\"%.1f\" width=\"10\" "
                  "height=\"10\" fill=\"%s\"/><text x=\"%.1f\" y=\"%.1f\">",
                  left, y, kPalette[s % std::size(kPalette)], left + 16.0, y + 9.0);
    svg += buf + xml_escape(label) + "</text></g>\n";
  }
  svg += "</svg>\n";
  return svg;
}

void render_classwise_chart(std::span<const EvaluationReport> reports,
                            const std::filesystem::path& path,
                            const std::vector<std::string>& class_names) {
  const auto svg = classwise_chart_svg(reports, class_names);
  try {
    write_file_atomic(path, svg);
  } catch (const FileError& e) {
    throw FileError(std::string("cannot write chart: ") + e.what());
  }
}

}  // namespace hml
